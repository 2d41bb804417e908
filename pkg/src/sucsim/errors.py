"""Exception taxonomy. Everything raised on purpose derives from SucError
so callers can catch one base class at process boundaries."""


class SucError(Exception):
    """Base class for all deliberate failures in this package."""


class EntropyExhausted(SucError):
    """A bounded entropy source ran out of bytes."""


class SearchBudgetExceeded(SucError):
    """Randomized S-box search gave up after the configured retry cap."""


class PoolFormatError(SucError):
    """Pool file is malformed, truncated, or fails its digest."""


class LifecycleError(SucError):
    """Operation not permitted in the device's current lifecycle state."""


class IntegrityError(SucError):
    """Sealed data failed authentication or post-unseal validation."""


class DeviceError(SucError):
    """Device files missing or unusable."""


class FrameError(SucError):
    """Byte stream does not decode to a valid wire frame."""


class ProtocolError(SucError):
    """Well-formed frames arriving in an order the session does not allow."""


class EnrollmentError(SucError):
    """Enrollment precondition failed (duplicate serial, unreachable device)."""


class ChannelError(SucError):
    """Transport-level failure talking to a device."""
