from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.annotation_model import TextAnnotation
from models.image_model import ImageGray, RegionSet, RegionWeights


class RegionsDocument(BaseModel):
    # Esquema de regions.json

    feature_map: str
    boxes: list[list[int]] = []
    scores: list[float] = []

    @field_validator("boxes")
    @classmethod
    def check_box_arity(cls, value):
        for i, box in enumerate(value):
            if len(box) != 4:
                raise ValueError(f"boxes.{i}: se esperaban 4 coordenadas, recibidas {len(box)}")
        return value


class ManifestItem(BaseModel):
    # Entrada de manifest.json: rutas de texto relativas al propio manifiesto
    model_config = ConfigDict(strict=True)

    ir: str
    vi: str
    annotation: str
    regions: str
    mask: str
    w_ir: str

    def resolve(self, root: Path) -> "DatasetEntry":
        return DatasetEntry(**{key: root / value for key, value in self.model_dump().items()})


class CheckpointEntry(BaseModel):
    # Una fila del manifiesto de cabecera de un checkpoint MSGC
    model_config = ConfigDict(strict=True)

    name: str
    shape: list[int]
    offset: int = Field(ge=0)
    length: int = Field(ge=0)


class DatasetEntry(BaseModel):
    ir: Path
    vi: Path
    annotation: Path
    regions: Path
    mask: Path
    w_ir: Path

    @property
    def name(self) -> str:
        return self.ir.stem


class Sample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = ""
    ir: ImageGray
    vi: ImageGray
    annotation: TextAnnotation
    regions: RegionSet
    weights: RegionWeights
