"""Error type shared across the benchmark.

Every failure mode that callers are expected to branch on carries a stable
machine-readable ``code`` (e.g. ``INFEASIBLE``, ``TOO_FEW_SHADOWS``). The CLI
surfaces these codes in its JSON error output.
"""


class BenchError(Exception):
    """Exception with a stable error code alongside the human message."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code

    def __repr__(self):
        return f"BenchError({self.code}: {self})"
