import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.ndimage import uniform_filter

from models.config_model import AblationSpec, RunConfig
from models.dataset_model import Sample
from models.image_model import ImageGray, RegionWeights
from models.report_model import LossBreakdown
from services import fusenet, numcore as nc, sgio
from services.fusenet import FusionModel
from services.numcore import Tape, Tensor
from utils.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, CONTRAST_WINDOW
from utils.errors import ContractError, NonFiniteGradientError, TrainingError
from utils.validators import validate_odd, validate_shapes_equal

logger = logging.getLogger(__name__)


def _plane(x: Tensor) -> Tensor:
    return nc.reshape(x, x.shape[-2:]) if x.ndim == 3 else x


# --- Pérdidas ---

def loss_rec(fused: Tensor, ir: Tensor, vi: Tensor, rw: RegionWeights,
             alpha: float, beta: float, gamma: float) -> tuple[Tensor, Tensor]:
    # (L_fg, L_bg) con normas cuadráticas promediadas por píxel
    fused, ir, vi = _plane(fused), _plane(ir), _plane(vi)
    validate_shapes_equal(fused.shape, ir.shape, "Î_f e I_ir")
    validate_shapes_equal(fused.shape, vi.shape, "Î_f e I_vi")
    validate_shapes_equal(fused.shape, rw.mask.shape, "Î_f y la máscara")
    diff_ir, diff_vi = nc.sub(fused, ir), nc.sub(fused, vi)
    fg_ir = nc.hadamard(diff_ir, Tensor(rw.mask * rw.w_ir))
    fg_vi = nc.hadamard(diff_vi, Tensor(rw.mask * rw.w_vi))
    bg = nc.hadamard(diff_vi, Tensor(1.0 - rw.mask))
    l_fg = nc.add(
        nc.scale(nc.mean(nc.hadamard(fg_ir, fg_ir)), alpha),
        nc.scale(nc.mean(nc.hadamard(fg_vi, fg_vi)), beta),
    )
    l_bg = nc.scale(nc.mean(nc.hadamard(bg, bg)), gamma)
    return l_fg, l_bg


def local_std(img: ImageGray | np.ndarray, window: int = CONTRAST_WINDOW) -> np.ndarray:
    # Desviación típica local en ventana window×window, bordes replicados
    validate_odd(window, "window")
    pixels = img.pixels if isinstance(img, ImageGray) else np.asarray(img, dtype=np.float64)
    mean = uniform_filter(pixels, size=window, mode="nearest")
    mean_sq = uniform_filter(pixels * pixels, size=window, mode="nearest")
    return np.sqrt(np.maximum(mean_sq - mean * mean, 0.0))


def local_std_tensor(x: Tensor, window: int = CONTRAST_WINDOW) -> Tensor:
    x = _plane(x)
    mean = nc.window_mean(x, window)
    mean_sq = nc.window_mean(nc.hadamard(x, x), window)
    return nc.sqrt(nc.sub(mean_sq, nc.hadamard(mean, mean)))


def loss_ctr(fused: Tensor, ir: Tensor, vi: Tensor, eta: float, window: int = CONTRAST_WINDOW) -> Tensor:
    fused, ir, vi = _plane(fused), _plane(ir), _plane(vi)
    validate_shapes_equal(fused.shape, ir.shape, "Î_f e I_ir")
    validate_shapes_equal(fused.shape, vi.shape, "Î_f e I_vi")
    target = nc.maximum(local_std_tensor(ir, window), local_std_tensor(vi, window))
    return nc.scale(nc.mean(nc.abs_(nc.sub(local_std_tensor(fused, window), target))), eta)


def loss_total(fused: Tensor, ir: Tensor, vi: Tensor, rw: RegionWeights, cfg: RunConfig,
               terms: AblationSpec | None = None) -> tuple[Tensor, LossBreakdown]:
    # L_MAFL y su desglose; los términos desactivados valen 0
    terms = terms or AblationSpec()
    l_fg, l_bg = loss_rec(fused, ir, vi, rw, cfg.alpha, cfg.beta, cfg.gamma)
    l_ctr = loss_ctr(fused, ir, vi, cfg.eta, cfg.window)
    zero = nc.zeros(())
    l_fg = l_fg if terms.l_fg else zero
    l_bg = l_bg if terms.l_bg else zero
    l_ctr = l_ctr if terms.l_ctr else zero
    total = nc.add(nc.add(l_fg, l_bg), l_ctr)
    if not math.isfinite(total.item()):
        raise TrainingError(f"Pérdida no finita: l_fg={l_fg.item()} l_bg={l_bg.item()} l_ctr={l_ctr.item()}")
    breakdown = LossBreakdown.from_terms(l_fg.item(), l_bg.item(), l_ctr.item())
    return total, breakdown


# --- Optimizador ---

class Adam:
    # Adam con corrección de sesgo; recorre los parámetros en el orden recibido

    def __init__(self, lr: float, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: list[tuple[str, Tensor]]) -> None:
        grads = {}
        for name, p in params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
            grads[name] = g
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params:
            g = grads[name]
            m = self.beta1 * self.m.get(name, np.zeros_like(g)) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(name, np.zeros_like(g)) + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params: list[tuple[str, Tensor]], state: Adam) -> None:
    state.step(params)


# --- Entrenamiento ---

class TrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: FusionModel
    curve: list[LossBreakdown]
    step_losses: list[float]


def crop_sample(sample: Sample, size: int) -> Sample:
    # Recorte central determinista de imágenes y pesos
    if sample.ir.height <= size and sample.ir.width <= size:
        return sample
    weights = RegionWeights.from_maps(
        sgio.crop_center(sample.weights.mask, size), sgio.crop_center(sample.weights.w_ir, size)
    )
    return sample.model_copy(update={
        "ir": ImageGray.from_array(sgio.crop_center(sample.ir.pixels, size)),
        "vi": ImageGray.from_array(sgio.crop_center(sample.vi.pixels, size)),
        "weights": weights,
    })


def sample_loss(sample: Sample, model: FusionModel) -> tuple[Tensor, LossBreakdown]:
    ir, vi = sample.ir.to_tensor(), sample.vi.to_tensor()
    fused, _, _ = fusenet.forward(ir, vi, sample.annotation, sample.regions, model)
    return loss_total(fused, ir, vi, sample.weights, model.cfg, model.ablation)


def _mean_breakdown(items: list[LossBreakdown]) -> LossBreakdown:
    n = len(items)
    return LossBreakdown.from_terms(
        sum(b.l_fg for b in items) / n,
        sum(b.l_bg for b in items) / n,
        sum(b.l_ctr for b in items) / n,
    )


def train(dataset: list[Sample], cfg: RunConfig, ablation: AblationSpec | None = None,
          model: FusionModel | None = None, checkpoint_path=None) -> TrainResult:
    # Bucle de minilotes con gradientes acumulados y Adam
    if not dataset:
        raise ContractError("El conjunto de entrenamiento está vacío")
    samples = [crop_sample(s, cfg.crop) for s in dataset]
    model = model or FusionModel.initialize(cfg, ablation)
    params = model.parameters()
    tensors = [t for _, t in params]
    optimizer = Adam(cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    curve, step_losses, steps = [], [], 0
    logger.info("train_start samples=%d epochs=%d batch=%d lr=%g", len(samples), cfg.epochs, cfg.batch, cfg.lr)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples))
        epoch_items = []
        for start in range(0, len(order), cfg.batch):
            batch = [samples[i] for i in order[start:start + cfg.batch]]
            accumulated = {name: np.zeros_like(t.data) for name, t in params}
            batch_total = 0.0
            for sample in batch:
                try:
                    with Tape() as tape:
                        total, breakdown = sample_loss(sample, model)
                except TrainingError as exc:
                    raise TrainingError(f"{exc} (epoch={epoch} sample={sample.name})") from exc
                nc.backward(tape, total, tensors)
                for name, t in params:
                    accumulated[name] += t.grad
                epoch_items.append(breakdown)
                batch_total += breakdown.total
            for name, t in params:
                t.grad = accumulated[name] / len(batch)
            adam_step(params, optimizer)
            step_losses.append(batch_total / len(batch))
            steps += 1
            logger.debug("step=%d loss=%.6f", steps, step_losses[-1])
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
        curve.append(_mean_breakdown(epoch_items))
        logger.info("epoch=%d total=%.6f l_rec=%.6f l_ctr=%.6f",
                    epoch, curve[-1].total, curve[-1].l_rec, curve[-1].l_ctr)
        if checkpoint_path and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            model.save(checkpoint_path)
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
    if checkpoint_path:
        model.save(checkpoint_path)
    return TrainResult(model=model, curve=curve, step_losses=step_losses)
