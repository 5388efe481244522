import csv
import json
import logging
import math
import re
import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError

from models.annotation_model import TextAnnotation
from models.config_model import RunConfig
from models.dataset_model import CheckpointEntry, DatasetEntry, ManifestItem, RegionsDocument, Sample
from models.graph_model import TextualSceneGraph
from models.image_model import BoundingBox, ImageGray, RegionSet, RegionWeights
from services.numcore import Tensor
from utils.config import CHECKPOINT_MAGIC, MASK_THRESHOLD, MAX_RANK, PGM_MAXVAL, TENSOR_MAGIC
from utils.errors import ConfigError, ParseError, SgioValidationError
from utils.validators import validate_file_exists

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


def _validated(model_cls: type[BaseModel], **data):
    """Construye un modelo pydantic convirtiendo sus errores en SgioValidationError."""
    try:
        return model_cls(**data)
    except ValidationError as exc:
        first = exc.errors()[0]
        cause = first.get("ctx", {}).get("error")
        if isinstance(cause, SgioValidationError):
            raise cause from None
        path = ".".join(str(part) for part in first["loc"])
        raise SgioValidationError(first["msg"], path) from None


def _read_json(path) -> object:
    path = Path(path)
    validate_file_exists(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"JSON inválido en {path}: {exc.msg}", exc.pos) from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"Texto no UTF-8 en {path}", exc.start) from None


# --- Imágenes PGM ---

def _skip_header_space(raw: bytes, pos: int) -> int:
    while pos < len(raw):
        ch = raw[pos:pos + 1]
        if ch == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    return pos


def parse_pgm(raw: bytes) -> np.ndarray:
    if raw[:2] != b"P5":
        raise ParseError("Cabecera PGM inválida: se esperaba 'P5'", 0)
    pos, fields = 2, []
    while len(fields) < 3:
        if pos < len(raw) and not (raw[pos:pos + 1].isspace() or raw[pos:pos + 1] == b"#"):
            raise ParseError("Falta separador en la cabecera PGM", pos)
        pos = _skip_header_space(raw, pos)
        start = pos
        while pos < len(raw) and raw[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ParseError("Se esperaba un campo numérico en la cabecera PGM", start)
        fields.append(int(raw[start:pos]))
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise ParseError("Falta el separador entre cabecera y datos", pos)
    pos += 1
    width, height, maxval = fields
    if width == 0 or height == 0:
        raise ParseError(f"Dimensiones nulas {width}x{height}", pos)
    if maxval != PGM_MAXVAL:
        raise ParseError(f"maxval {maxval} no soportado (solo {PGM_MAXVAL})", pos)
    needed = width * height
    payload = raw[pos:pos + needed]
    if len(payload) < needed:
        raise ParseError(f"Datos truncados: {len(payload)} de {needed} bytes", pos + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width) / float(PGM_MAXVAL)


def load_image(path) -> ImageGray:
    path = Path(path)
    validate_file_exists(path)
    pixels = parse_pgm(path.read_bytes())
    return ImageGray.from_array(pixels)


def encode_pgm(img: ImageGray) -> bytes:
    quantized = np.rint(np.clip(img.pixels, 0.0, 1.0) * PGM_MAXVAL).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n{PGM_MAXVAL}\n".encode("ascii")
    return header + quantized.tobytes()


def save_image(img: ImageGray, path) -> None:
    Path(path).write_bytes(encode_pgm(img))


def save_array_image(pixels: np.ndarray, path) -> None:
    """Guarda un array arbitrario recortándolo a [0,1]."""
    save_image(ImageGray.from_array(np.clip(pixels, 0.0, 1.0)), path)


# --- Tensores MSGT ---

def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype="<f8")
    header = TENSOR_MAGIC + struct.pack("<I", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return header + array.tobytes(order="C")


def decode_tensor(raw: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decodifica un tensor MSGT desde `offset`; devuelve (array, fin)."""
    if raw[offset:offset + 4] != TENSOR_MAGIC:
        raise ParseError("Magia MSGT ausente", offset)
    pos = offset + 4
    if len(raw) < pos + 4:
        raise ParseError("Cabecera MSGT truncada", pos)
    (rank,) = struct.unpack_from("<I", raw, pos)
    if rank > MAX_RANK:
        raise ParseError(f"Rango MSGT {rank} fuera de límites", pos)
    pos += 4
    if len(raw) < pos + 4 * rank:
        raise ParseError("Dimensiones MSGT truncadas", pos)
    dims = struct.unpack_from(f"<{rank}I", raw, pos)
    pos += 4 * rank
    if any(dim == 0 for dim in dims):
        raise ParseError(f"Dimensión nula en {dims}", pos)
    count = math.prod(dims)
    end = pos + 8 * count
    if len(raw) < end:
        raise ParseError(f"Datos MSGT truncados: se esperaban {8 * count} bytes", len(raw))
    array = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
    return array, end


def save_tensor(tensor: Tensor | np.ndarray, path) -> None:
    data = tensor.data if isinstance(tensor, Tensor) else tensor
    Path(path).write_bytes(encode_tensor(data))


def load_tensor(path) -> Tensor:
    path = Path(path)
    validate_file_exists(path)
    array, _ = decode_tensor(path.read_bytes())
    return Tensor(array)


# --- Checkpoints ---

def save_checkpoint(state: dict[str, np.ndarray], path) -> None:
    manifest, blobs, offset = [], [], 0
    for name, array in state.items():
        blob = encode_tensor(array)
        manifest.append({"name": name, "shape": list(np.shape(array)), "offset": offset, "length": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"tensors": manifest}).encode("utf-8")
    Path(path).write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", len(header)) + header + b"".join(blobs))
    logger.info("checkpoint_saved path=%s tensors=%d", path, len(manifest))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    validate_file_exists(path)
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ParseError("Magia de checkpoint ausente", 0)
    if len(raw) < 8:
        raise ParseError("Cabecera de checkpoint truncada", len(raw))
    (size,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + size:
        raise ParseError(f"Manifiesto de checkpoint truncado: se esperaban {size} bytes", len(raw))
    # Cualquier forma inesperada del manifiesto es un error de parseo
    try:
        items = json.loads(raw[8:8 + size].decode("utf-8"))["tensors"]
        manifest = [CheckpointEntry(**item) for item in items]
    except (ValueError, KeyError, TypeError):
        raise ParseError("Manifiesto de checkpoint ilegible", 8) from None
    base = 8 + size
    state = {}
    for item in manifest:
        array, _ = decode_tensor(raw, base + item.offset)
        if list(array.shape) != item.shape:
            raise ParseError(f"Forma de {item.name}: {list(array.shape)} en lugar de {item.shape}", base + item.offset)
        state[item.name] = array
    return state


# --- Regiones, anotaciones, máscaras ---

def load_regions(path) -> RegionSet:
    path = Path(path)
    document = _read_json(path)
    if not isinstance(document, dict):
        raise SgioValidationError("Se esperaba un objeto JSON", "")
    doc = _validated(RegionsDocument, **document)
    map_path = path.parent / doc.feature_map
    validate_file_exists(map_path, "feature_map")
    feature_map = load_tensor(map_path)
    boxes = []
    for i, values in enumerate(doc.boxes):
        try:
            boxes.append(BoundingBox.from_list(values))
        except ValidationError as exc:
            raise SgioValidationError(exc.errors()[0]["msg"], f"boxes.{i}") from None
    regions = _validated(RegionSet, feature_map=feature_map, boxes=boxes, scores=doc.scores)
    if not regions.boxes:
        logger.warning("regions_empty path=%s", path)
    return regions


def tokenize(sentence: str) -> list[str]:
    return _TOKEN.findall(sentence.lower())


def annotation_from_dict(document: dict) -> TextAnnotation:
    for key in ("object", "region", "global"):
        if key not in document:
            raise SgioValidationError("Clave obligatoria ausente", key)
    objects = document["object"]
    if not isinstance(objects, list):
        raise SgioValidationError("Se esperaba una lista de frases", "object")
    # Cada frase debe ser texto; no se convierten números, listas ni null
    for i, sentence in enumerate(objects):
        if not isinstance(sentence, str):
            raise SgioValidationError("Se esperaba una frase de texto", f"object.{i}")
    for key in ("region", "global"):
        if not isinstance(document[key], str):
            raise SgioValidationError("Se esperaba una frase de texto", key)
    return _validated(
        TextAnnotation,
        object_level=[tokenize(s) for s in objects],
        region_level=tokenize(document["region"]),
        global_level=tokenize(document["global"]),
    )


def load_annotation(path) -> TextAnnotation:
    document = _read_json(path)
    if not isinstance(document, dict):
        raise SgioValidationError("Se esperaba un objeto JSON", "")
    return annotation_from_dict(document)


def save_annotation(annotation: TextAnnotation, path) -> None:
    Path(path).write_text(json.dumps(annotation.to_json_dict(), indent=2), encoding="utf-8")


def load_mask(path) -> np.ndarray:
    return (load_image(path).pixels >= MASK_THRESHOLD).astype(np.float64)


def load_region_weights(mask_path, w_ir_path) -> RegionWeights:
    mask = load_mask(mask_path)
    w_ir = load_image(w_ir_path).pixels
    return _validated(RegionWeights, mask=mask, w_ir=w_ir, w_vi=1.0 - w_ir)


# --- Configuración ---

def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    validate_file_exists(path)
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: línea {lineno} sin '='")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = None if value.lower() in ("none", "") else value
    values.update(overrides)
    try:
        return _validated(RunConfig, **values)
    except SgioValidationError as exc:
        raise ConfigError(f"Configuración inválida en {path}: {exc}") from None


def save_config(cfg: RunConfig, path) -> None:
    lines = [f"{key}={value}" for key, value in cfg.model_dump().items() if value is not None]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- Conjunto de datos ---

def load_manifest(path) -> list[DatasetEntry]:
    path = Path(path)
    document = _read_json(path)
    if not isinstance(document, list) or not document:
        raise SgioValidationError("El manifiesto debe ser una lista no vacía", "")
    entries = []
    for i, item in enumerate(document):
        if not isinstance(item, dict):
            raise SgioValidationError("Se esperaba un objeto", str(i))
        try:
            entries.append(ManifestItem(**item).resolve(path.parent))
        except ValidationError as exc:
            loc = ".".join(str(p) for p in exc.errors()[0]["loc"])
            raise SgioValidationError(exc.errors()[0]["msg"], f"{i}.{loc}") from None
    return entries


def crop_center(array: np.ndarray, size: int) -> np.ndarray:
    height, width = array.shape
    top = max(0, (height - size) // 2)
    left = max(0, (width - size) // 2)
    return array[top:top + size, left:left + size]


def load_sample(entry: DatasetEntry) -> Sample:
    ir = load_image(entry.ir)
    vi = load_image(entry.vi)
    weights = load_region_weights(entry.mask, entry.w_ir)
    if ir.pixels.shape != vi.pixels.shape or weights.mask.shape != ir.pixels.shape:
        raise SgioValidationError(
            f"Tamaños inconsistentes: ir {ir.pixels.shape}, vi {vi.pixels.shape}, mask {weights.mask.shape}",
            entry.name,
        )
    return Sample(
        name=entry.name,
        ir=ir,
        vi=vi,
        annotation=load_annotation(entry.annotation),
        regions=load_regions(entry.regions),
        weights=weights,
    )


# --- Grafos de escena ---

def graph_to_dict(graph: TextualSceneGraph) -> dict:
    return {
        "objects": [
            {"phrase": obj.phrase, "attributes": [graph.attributes[a].phrase for a in graph.attributes_of(i)]}
            for i, obj in enumerate(graph.objects)
        ],
        "relations": [[e.subject, e.predicate, e.object] for e in graph.edges_oo],
        "warnings": list(graph.warnings),
    }


def graph_to_json(graph: TextualSceneGraph) -> str:
    return json.dumps(graph_to_dict(graph), sort_keys=True, separators=(",", ":"))


def graph_to_dot(graph: TextualSceneGraph, name: str = "scene") -> str:
    lines = [f"digraph {name} {{"]
    for i, obj in enumerate(graph.objects):
        lines.append(f'  o{i} [label="{obj.phrase}"];')
    for j, attr in enumerate(graph.attributes):
        lines.append(f'  a{j} [label="{attr.phrase}", shape=box];')
    for o, a in graph.edges_oa:
        lines.append(f"  o{o} -> a{a};")
    for edge in graph.edges_oo:
        lines.append(f'  o{edge.subject} -> o{edge.object} [label="{edge.predicate}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- Tablas CSV ---

def write_rows_csv(rows: list[dict], handle, fieldnames: list[str] | None = None) -> None:
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def save_rows_csv(rows: list[dict], path, fieldnames: list[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        write_rows_csv(rows, handle, fieldnames)


def save_loss_csv(curve, path) -> None:
    rows = [{"epoch": i, **b.model_dump()} for i, b in enumerate(curve, start=1)]
    save_rows_csv(rows, path, ["epoch", "l_fg", "l_bg", "l_rec", "l_ctr", "total"])


def load_metric_table(path, key: str = "method") -> dict[str, dict[str, float]]:
    """CSV método×métrica → {método: {métrica: valor}}."""
    path = Path(path)
    validate_file_exists(path)
    table = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if not reader.fieldnames or key not in reader.fieldnames:
            raise SgioValidationError(f"Falta la columna '{key}'", str(path))
        for lineno, row in enumerate(reader, start=2):
            method = row.pop(key)
            try:
                table[method] = {metric: float(value) for metric, value in row.items()}
            except (TypeError, ValueError):
                raise SgioValidationError(f"Valor no numérico en la línea {lineno}", method) from None
    return table


def load_dataset(path) -> list[Sample]:
    entries = load_manifest(path)
    samples = [load_sample(entry) for entry in entries]
    logger.info("dataset_loaded path=%s samples=%d", path, len(samples))
    return samples
