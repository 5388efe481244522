class FusionError(Exception):
    """Base de todos los errores del proyecto."""


class ShapeError(FusionError, ValueError):
    pass


class ContractError(FusionError, ValueError):
    pass


class EmptyReductionError(ContractError):
    pass


class EmptyGraphError(ContractError):
    pass


class ConfigError(FusionError, ValueError):
    pass


class ParseError(FusionError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte {offset})"
        super().__init__(message)
        self.offset = offset


class SgioValidationError(FusionError, ValueError):
    def __init__(self, message: str, field_path: str = ""):
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)
        self.field_path = field_path


class NonFiniteGradientError(FusionError, ArithmeticError):
    def __init__(self, parameter: str):
        super().__init__(f"Gradiente no finito en el parámetro '{parameter}'")
        self.parameter = parameter


class TrainingError(FusionError, RuntimeError):
    pass


class MissingFileError(SgioValidationError):
    pass
