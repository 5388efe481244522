import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from services.numcore import Tensor
from utils.validators import validate_box, validate_score


class BoundingBox(BaseModel):
    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    x1: int = Field(ge=0)
    y1: int = Field(ge=0)

    @model_validator(mode="after")
    def check_order(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"Caja degenerada {self.as_list()}")
        return self

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        x0, y0, x1, y1 = values
        return cls(x0=x0, y0=y0, x1=x1, y1=y1)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


class ImageGray(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    width: int = Field(gt=0)
    height: int = Field(gt=0)
    pixels: np.ndarray  # [height×width], valores en [0,1]

    @model_validator(mode="after")
    def check_pixels(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixels con forma {self.pixels.shape}, se esperaba {(self.height, self.width)}"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("pixels contiene valores no finitos")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("pixels fuera de [0,1]")
        return self

    @classmethod
    def from_array(cls, array) -> "ImageGray":
        pixels = np.asarray(array, dtype=np.float64)
        if pixels.ndim != 2:
            raise ValueError(f"Se esperaba una matriz 2-D, forma {pixels.shape}")
        return cls(width=pixels.shape[1], height=pixels.shape[0], pixels=pixels)

    @classmethod
    def from_tensor(cls, tensor: Tensor) -> "ImageGray":
        return cls.from_array(np.clip(tensor.data.reshape(tensor.shape[-2:]), 0.0, 1.0))

    def to_tensor(self) -> Tensor:
        return Tensor(self.pixels.reshape(1, self.height, self.width))


class RegionSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    feature_map: Tensor  # [C×H×W]
    boxes: list[BoundingBox] = []
    scores: list[float] = []

    @model_validator(mode="after")
    def check_regions(self):
        if self.feature_map.ndim != 3:
            raise ValueError(f"feature_map debe ser [C×H×W], forma {self.feature_map.shape}")
        _, height, width = self.feature_map.shape
        if len(self.scores) != len(self.boxes):
            raise ValueError(
                f"scores tiene {len(self.scores)} valores para {len(self.boxes)} cajas"
            )
        for i, box in enumerate(self.boxes):
            validate_box(box.as_list(), width, height, f"boxes.{i}")
        for i, score in enumerate(self.scores):
            validate_score(score, f"scores.{i}")
        return self


class RegionWeights(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mask: np.ndarray  # {0,1}
    w_ir: np.ndarray
    w_vi: np.ndarray

    @model_validator(mode="after")
    def check_weights(self):
        if not (self.mask.shape == self.w_ir.shape == self.w_vi.shape):
            raise ValueError(
                f"Formas distintas: mask {self.mask.shape}, w_ir {self.w_ir.shape}, w_vi {self.w_vi.shape}"
            )
        if not np.all((self.mask == 0.0) | (self.mask == 1.0)):
            raise ValueError("mask debe ser binaria")
        if self.w_ir.min() < 0.0 or self.w_ir.max() > 1.0:
            raise ValueError("w_ir fuera de [0,1]")
        if np.max(np.abs(self.w_ir + self.w_vi - 1.0)) > 1e-9:
            raise ValueError("w_ir + w_vi debe valer 1 en cada píxel")
        return self

    @classmethod
    def from_maps(cls, mask, w_ir) -> "RegionWeights":
        mask = (np.asarray(mask, dtype=np.float64) >= 0.5).astype(np.float64)
        w_ir = np.asarray(w_ir, dtype=np.float64)
        return cls(mask=mask, w_ir=w_ir, w_vi=1.0 - w_ir)
