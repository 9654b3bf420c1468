"""Exception types shared across invforge modules."""

from __future__ import annotations


class InvforgeError(Exception):
    pass


class ParseError(InvforgeError):
    def __init__(self, line: int | None, msg: str):
        self.line = line
        self.msg = msg
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{msg}")


class UnsupportedConstruct(InvforgeError):
    """Input uses a C construct outside the supported subset."""

    def __init__(self, construct: str, line: int | None = None):
        self.construct = construct
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unsupported construct: {construct}{where}")


class UnsupportedSymbol(InvforgeError):
    """An invariant mentions a function or logic symbol the ACSL subset lacks."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unsupported symbol: {name}")


class UnboundVariable(InvforgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable: {name}")


class ExecutionError(InvforgeError):
    """Concrete execution hit undefined behaviour (division by zero, bad shift)."""

    def __init__(self, reason: str, stmt: str = ""):
        self.reason = reason
        self.stmt = stmt
        super().__init__(f"{reason} in `{stmt}`" if stmt else reason)


class DivisionByZero(ExecutionError):
    def __init__(self, stmt: str = ""):
        super().__init__("division by zero", stmt)


class ScopeError(InvforgeError):
    def __init__(self, names):
        self.names = frozenset(names)
        super().__init__("identifiers not in scope at the loop head: " + ", ".join(sorted(self.names)))


class AlreadyMasked(InvforgeError):
    pass


class NoCandidateFound(InvforgeError):
    pass


class GenerationFailed(InvforgeError):
    pass


class EndpointError(GenerationFailed):
    def __init__(self, status: int | None, body: str):
        self.status = status
        self.body = body
        super().__init__(f"endpoint error (status={status}): {body[:200]}")


class GenerationTimeout(GenerationFailed):
    pass


class ToolNotFound(InvforgeError):
    pass


class ToolError(InvforgeError):
    def __init__(self, tool: str, stderr: str):
        self.tool = tool
        self.stderr = stderr
        super().__init__(f"{tool} failed: {stderr[:300]}")


class UnsupportedExpr(InvforgeError):
    pass


class NoTasks(InvforgeError):
    pass


class SchemaVersionMismatch(InvforgeError):
    pass


class TruncatedRecord(InvforgeError):
    def __init__(self, line: int, msg: str = "run record is truncated"):
        self.line = line
        super().__init__(f"{msg} (line {line})")
