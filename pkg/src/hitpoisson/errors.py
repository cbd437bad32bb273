"""Exception types shared by every module of the package."""


class HitPoissonError(Exception):
    """Base class for all errors raised by hitpoisson."""


class PhaseSpaceMismatch(HitPoissonError):
    def __init__(self, detail: str = ""):
        msg = "phase-space mismatch"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class DomainError(HitPoissonError, ValueError):
    def __init__(self, detail: str = ""):
        msg = "domain error"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class ParameterError(HitPoissonError, ValueError):
    def __init__(self, detail: str = ""):
        msg = "parameter error"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class GeometryError(HitPoissonError):
    """Ray/boundary intersection failed; indicates a kernel bug."""

    def __init__(self, detail: str = ""):
        msg = "geometry error"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class RangeError(HitPoissonError, ValueError):
    def __init__(self, detail: str = ""):
        msg = "range error"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class InsufficientData(HitPoissonError):
    def __init__(self, detail: str = ""):
        msg = "insufficient data"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class Undersampled(HitPoissonError):
    def __init__(self, detail: str = ""):
        msg = "undersampled"
        super().__init__(f"{msg}: {detail}" if detail else msg)
