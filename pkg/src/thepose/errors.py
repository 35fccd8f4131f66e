"""Pipeline errors carrying a stable machine-readable kind string."""


class Error(Exception):
    """Raised by pipeline operations; ``kind`` is a short stable identifier.

    Kinds in use: empty-object, invalid-depth, degenerate-axes, off-surface,
    too-small, bad-magic, bad-version, truncated, shape, index,
    non-scalar-loss, invalid-k, diverged, config, io.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
