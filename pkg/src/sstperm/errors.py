"""Exception hierarchy shared by every module."""


class SstError(Exception):
    """Base class for all errors raised by this package."""


class KeyExhausted(SstError):
    """A finite bit source ran out before the request was satisfied."""


class KindMismatch(SstError):
    """A stopping rule was fed a step trace from the wrong shuffle."""


class InvalidPairing(SstError):
    """The stopping rule is not a strong stationary time for the shuffle."""


class CapExceeded(SstError):
    """The sampler hit ``max_steps`` before the stopping rule fired."""


class EpsilonOutOfRange(SstError, ValueError):
    pass


class SizeTooLarge(SstError, ValueError):
    pass


class SizeMismatch(SstError, ValueError):
    pass
