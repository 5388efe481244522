import math
from pathlib import Path

from utils.errors import ConfigError, MissingFileError, ShapeError, SgioValidationError


def validate_shapes_equal(a, b, what: str = "operandos"):
    if tuple(a) != tuple(b):
        raise ShapeError(f"Formas incompatibles para {what}: {tuple(a)} y {tuple(b)}")


def validate_box(box, width: int, height: int, field_path: str = "boxes"):
    x0, y0, x1, y1 = box
    if not (x0 < x1 and y0 < y1):
        raise SgioValidationError(f"Caja degenerada {list(box)}", field_path)
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
        raise SgioValidationError(
            f"Caja {list(box)} fuera del mapa {width}x{height}", field_path
        )


def validate_score(score: float, field_path: str = "scores"):
    if not (0.0 <= score <= 1.0) or math.isnan(score):
        raise SgioValidationError(f"Puntuación fuera de [0,1]: {score}", field_path)


def validate_file_exists(path: Path, field_path: str = ""):
    if not Path(path).is_file():
        raise MissingFileError(f"No existe el fichero {path}", field_path)


def validate_heads(d: int, heads: int):
    if heads < 1 or d % heads != 0:
        raise ConfigError(f"d={d} no es divisible por el número de cabezas H={heads}")


def validate_odd(value: int, name: str):
    if value < 1 or value % 2 == 0:
        raise ConfigError(f"{name} debe ser impar y positivo, recibido {value}")
