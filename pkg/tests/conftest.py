import json

import numpy as np
import pytest

from models.config_model import RunConfig
from models.image_model import ImageGray
from services import numcore as nc, sgio
from services.fusenet import FusionModel
from services.numcore import Tensor, finite_difference_check

SIZE = 16

ANNOTATION = {
    "object": ["bright person walking on road", "dark tree near building", "two cars"],
    "region": "person beside car",
    "global": "night street with people and cars",
}

BOXES = [[0, 0, 4, 4], [2, 2, 6, 6], [4, 1, 8, 5]]
SCORES = [0.9, 0.4, 0.7]


def disk_pair(size: int = SIZE):
    """ir: disco brillante sobre negro; vi: textura oscura en [0, 0.3]; mask: el disco."""
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    center = size / 2 - 0.5
    inside = (yy - center) ** 2 + (xx - center) ** 2 <= (size / 4) ** 2
    ir = np.where(inside, 0.9, 0.05)
    vi = 0.15 + 0.15 * np.sin(1.3 * xx) * np.cos(0.7 * yy)
    return ir, vi, inside.astype(np.float64)


def write_sample(root, name: str = "pair0", boxes=None, scores=None):
    """Escribe un par sintético completo y devuelve la ruta del manifiesto."""
    ir, vi, mask = disk_pair()
    for folder, pixels in (("ir", ir), ("vi", vi), ("mask", mask), ("w_ir", np.where(mask > 0, 0.8, 0.2))):
        (root / folder).mkdir(parents=True, exist_ok=True)
        sgio.save_image(ImageGray.from_array(pixels), root / folder / f"{name}.pgm")
    feature_map = np.random.default_rng(1).uniform(size=(4, 8, 8))
    sgio.save_tensor(feature_map, root / f"{name}_fmap.msgt")
    regions = {
        "feature_map": f"{name}_fmap.msgt",
        "boxes": BOXES if boxes is None else boxes,
        "scores": SCORES if scores is None else scores,
    }
    (root / f"{name}_regions.json").write_text(json.dumps(regions), encoding="utf-8")
    (root / f"{name}_annotation.json").write_text(json.dumps(ANNOTATION), encoding="utf-8")
    entry = {
        "ir": f"ir/{name}.pgm",
        "vi": f"vi/{name}.pgm",
        "annotation": f"{name}_annotation.json",
        "regions": f"{name}_regions.json",
        "mask": f"mask/{name}.pgm",
        "w_ir": f"w_ir/{name}.pgm",
    }
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps([entry]), encoding="utf-8")
    return manifest


def param_error(owner, key, loss_fn, coords=None, step=1e-5):
    """Comprobación por diferencias finitas de un parámetro de `owner` (modelo o lista)."""
    is_list = isinstance(owner, list)
    original = owner[key] if is_list else getattr(owner, key)

    def put(value):
        if is_list:
            owner[key] = value
        else:
            setattr(owner, key, value)

    def f(w):
        put(w)
        try:
            return loss_fn()
        finally:
            put(original)

    return finite_difference_check(f, original, step=step, coords=coords)


def project(t: Tensor, seed: int = 7) -> Tensor:
    """Escalar genérico Σ r ⊙ t con r aleatorio fijo."""
    weights = np.random.default_rng(seed).normal(size=t.shape)
    return nc.sum_(nc.hadamard(t, Tensor(weights)))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_cfg():
    return RunConfig(d=8, heads=2, channels=4, decoder_channels=4, dense_layers=2, t_iters=1)


@pytest.fixture
def model(small_cfg):
    return FusionModel.initialize(small_cfg)


@pytest.fixture
def manifest(tmp_path):
    return write_sample(tmp_path)


@pytest.fixture
def sample(manifest):
    return sgio.load_dataset(manifest)[0]


@pytest.fixture
def fd():
    return param_error


@pytest.fixture
def scalarize():
    return project
