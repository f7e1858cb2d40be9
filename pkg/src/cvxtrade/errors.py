"""Exception taxonomy shared across the package."""


class CvxTradeError(Exception):
    """Base class for all package errors."""


class IngestError(CvxTradeError):
    """Raised when market-data CSV input is malformed or incomplete."""

    def __init__(self, message, date=None, asset=None, series=None, path=None, line=None):
        self.date = date
        self.asset = asset
        self.series = series
        self.path = path
        self.line = line
        detail = []
        if series is not None:
            detail.append(f"series={series}")
        if date is not None:
            detail.append(f"date={date}")
        if asset is not None:
            detail.append(f"asset={asset}")
        if path is not None:
            detail.append(f"file={path}")
        if line is not None:
            detail.append(f"line={line}")
        if detail:
            message = f"{message} ({', '.join(detail)})"
        super().__init__(message)


class DomainError(CvxTradeError):
    """An input value is outside the mathematical domain of an operation."""


class HistoryError(CvxTradeError):
    """Not enough past periods to compute a forecast or estimate."""


class SpecError(CvxTradeError):
    """A declarative spec (constraint, policy, perturbation) is invalid."""


class ModelError(CvxTradeError):
    """A risk-model input fails its validity checks (e.g. not PSD)."""


class CanonError(CvxTradeError):
    """A term or constraint cannot be lowered to canonical conic form."""


class ConfigError(CvxTradeError):
    """A run configuration file is missing, malformed, or inconsistent."""


class BankruptcyHalt(CvxTradeError):
    """Portfolio value dropped to zero or below during simulation.

    Carries the partial back-test trace accumulated before the halt.
    """

    def __init__(self, message, period=None, partial=None):
        self.period = period
        self.partial = partial
        super().__init__(message)
