"""Exception types shared across the codec."""


class DecodeError(ValueError):
    """A bitstream or container could not be decoded.

    ``position`` is the byte offset at which the problem was detected, when
    known.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at byte {position})"
        super().__init__(message)
        self.position = position


class PlyError(ValueError):
    """Malformed PLY input."""


class NoOverlapError(ValueError):
    """Two rate-distortion curves share no rate (or quality) interval."""
