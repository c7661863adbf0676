"""Exception hierarchy.

Everything raised on purpose by this package derives from
:class:`LeanmapError`, so the CLI can map it to exit code 1.
"""


class LeanmapError(Exception):
    """Base class for structured, expected failures."""


class DegenerateCovarianceError(LeanmapError, ValueError):
    pass


class UnknownNodeError(LeanmapError, KeyError):
    def __init__(self, node_id):
        super().__init__(node_id)
        self.node_id = node_id

    def __str__(self):
        return f"unknown node {self.node_id}"


class InsufficientWindowError(LeanmapError, ValueError):
    pass


class TrackerNotReadyError(LeanmapError, RuntimeError):
    pass


class UnderconstrainedError(LeanmapError, ValueError):
    pass


class DisconnectedGraphError(LeanmapError, ValueError):
    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        shown = ", ".join(str(i) for i in self.unreachable[:10])
        more = "" if len(self.unreachable) <= 10 else f", ... ({len(self.unreachable)} total)"
        super().__init__(f"nodes unreachable from the gauge node: {shown}{more}")


class NoComparableNodesError(LeanmapError, ValueError):
    pass


class G2OParseError(LeanmapError, ValueError):
    def __init__(self, message, line_no, token=None):
        self.line_no = line_no
        self.token = token
        super().__init__(f"{message}, line {line_no}" + (f" (token {token!r})" if token is not None else ""))
