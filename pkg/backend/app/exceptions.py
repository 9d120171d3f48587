class PrivateBanditsError(Exception):
    """Base class for every error raised by the library."""


class DimensionError(PrivateBanditsError, ValueError):
    pass


class DomainError(PrivateBanditsError, ValueError):
    pass


class EnumerationBudgetError(PrivateBanditsError):
    def __init__(self, size: float, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"enumeration of {size:.3g} states exceeds the budget of {cap}")


class CapabilityError(PrivateBanditsError, TypeError):
    pass


class ContractError(PrivateBanditsError):
    pass


class DegenerateInstanceError(PrivateBanditsError, ValueError):
    pass


class InfeasibleHorizonError(PrivateBanditsError, ValueError):
    pass


class UndefinedRatioError(PrivateBanditsError, ZeroDivisionError):
    pass


class ConfigError(PrivateBanditsError, ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)
