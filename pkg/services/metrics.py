import logging
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.stats import rankdata

from models.image_model import ImageGray
from models.report_model import METRIC_NAMES, MetricReport
from utils.config import MI_BINS, PSNR_PEAK, PSNR_SENTINEL, SSIM_WINDOW
from utils.errors import ContractError
from utils.validators import validate_shapes_equal

logger = logging.getLogger(__name__)

# Qabf: modelos sigmoides de fuerza (g) y orientación (a) del borde
QABF_KG, QABF_DG = -15.0, 0.5
QABF_KA, QABF_DA = -22.0, 0.8

SSIM_C1 = (0.01 * PSNR_PEAK) ** 2
SSIM_C2 = (0.03 * PSNR_PEAK) ** 2

# Valores impresos en las tablas comparativas (LLVIP y TNO), con VIF
PUBLISHED_METRICS = ("qabf", "ssim", "vif", "ag", "sf", "mi", "psnr")

PUBLISHED_LLVIP = {
    "NestFuse": (0.468, 0.562, 0.607, 4.684, 12.019, 4.005, 18.968),
    "SwinFusion": (0.653, 0.558, 0.815, 6.888, 16.353, 3.899, 17.816),
    "MUFusion": (0.489, 0.583, 1.117, 6.762, 13.507, 2.446, 20.556),
    "DAFusion": (0.496, 0.489, 0.910, 6.014, 14.813, 3.121, 12.019),
    "SpTFuse": (0.529, 0.569, 0.881, 6.761, 15.028, 2.170, 20.947),
    "IF-FILM": (0.235, 0.537, 0.673, 4.391, 8.566, 3.238, 17.239),
    "TextFusion": (0.543, 0.591, 0.683, 6.030, 14.966, 2.881, 21.406),
    "Ours": (0.620, 0.596, 0.803, 7.422, 17.869, 2.951, 20.105),
}
PUBLISHED_LLVIP_MRANK = {
    "NestFuse": 5.714, "SwinFusion": 3.285, "MUFusion": 4.000, "DAFusion": 5.143,
    "SpTFuse": 4.000, "IF-FILM": 7.428, "TextFusion": 3.857, "Ours": 2.571,
}

PUBLISHED_TNO = {
    "NestFuse": (0.432, 0.473, 0.771, 5.234, 10.354, 3.261, 19.226),
    "SwinFusion": (0.421, 0.487, 0.709, 5.893, 11.154, 3.246, 16.610),
    "MUFusion": (0.365, 0.467, 1.782, 6.759, 10.125, 1.945, 19.393),
    "DAFusion": (0.375, 0.454, 1.540, 8.102, 14.965, 2.702, 15.674),
    "SpTFuse": (0.429, 0.454, 0.852, 5.280, 8.880, 1.666, 21.450),
    "IF-FILM": (0.382, 0.468, 0.824, 5.065, 8.965, 2.578, 18.223),
    "TextFusion": (0.432, 0.520, 0.677, 5.243, 9.896, 2.916, 17.783),
    "Ours": (0.432, 0.520, 0.715, 5.961, 11.540, 3.077, 18.312),
}
PUBLISHED_TNO_MRANK = {
    "NestFuse": 3.429, "SwinFusion": 4.000, "MUFusion": 4.000, "DAFusion": 4.000,
    "SpTFuse": 4.714, "IF-FILM": 5.429, "TextFusion": 4.571, "Ours": 2.857,
}


def published_table(dataset: str) -> tuple[dict[str, dict[str, float]], dict[str, float]]:
    """(tabla método×métrica, mRank impreso) de un conjunto publicado."""
    tables = {"llvip": (PUBLISHED_LLVIP, PUBLISHED_LLVIP_MRANK), "tno": (PUBLISHED_TNO, PUBLISHED_TNO_MRANK)}
    if dataset.lower() not in tables:
        raise ContractError(f"Tabla publicada desconocida: {dataset} (opciones: llvip, tno)")
    rows, printed = tables[dataset.lower()]
    return {m: dict(zip(PUBLISHED_METRICS, values)) for m, values in rows.items()}, dict(printed)


def _scaled(img: ImageGray | np.ndarray) -> np.ndarray:
    pixels = img.pixels if isinstance(img, ImageGray) else np.asarray(img, dtype=np.float64)
    return pixels * PSNR_PEAK


def _check_min_size(a: np.ndarray, size: int, what: str):
    if a.shape[0] < size or a.shape[1] < size:
        raise ContractError(f"{what} necesita al menos {size}x{size} píxeles, forma {a.shape}")


def ag(img) -> float:
    """Gradiente medio con diferencias hacia delante sobre (H−1)(W−1) píxeles."""
    a = _scaled(img)
    _check_min_size(a, 2, "AG")
    gx = a[:-1, 1:] - a[:-1, :-1]
    gy = a[1:, :-1] - a[:-1, :-1]
    return float(np.mean(np.sqrt((gx * gx + gy * gy) / 2.0)))


def sf(img) -> float:
    a = _scaled(img)
    _check_min_size(a, 2, "SF")
    rf = np.mean((a[:, 1:] - a[:, :-1]) ** 2)
    cf = np.mean((a[1:, :] - a[:-1, :]) ** 2)
    return float(np.sqrt(rf + cf))


def psnr(fused, reference) -> float:
    f, r = _scaled(fused), _scaled(reference)
    validate_shapes_equal(f.shape, r.shape, "PSNR")
    mse = float(np.mean((f - r) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return 10.0 * math.log10(PSNR_PEAK ** 2 / mse)


def _histogram(a: np.ndarray, bins: int) -> np.ndarray:
    counts, _ = np.histogram(a.ravel(), bins=bins, range=(0.0, PSNR_PEAK + 1.0))
    return counts / counts.sum()


def entropy(img, bins: int = MI_BINS) -> float:
    p = _histogram(_scaled(img), bins)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def mi(a, b, bins: int = MI_BINS) -> float:
    """Información mutua por histograma conjunto, logaritmo natural."""
    x, y = _scaled(a), _scaled(b)
    validate_shapes_equal(x.shape, y.shape, "MI")
    edges = (0.0, PSNR_PEAK + 1.0)
    joint, _, _ = np.histogram2d(x.ravel(), y.ravel(), bins=bins, range=[edges, edges])
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    value = np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz]))
    return float(max(value, 0.0))


def ssim(a, b, window: int = SSIM_WINDOW) -> float:
    """SSIM medio sobre ventanas uniformes window×window con paso 1."""
    x, y = _scaled(a), _scaled(b)
    validate_shapes_equal(x.shape, y.shape, "SSIM")
    _check_min_size(x, window, "SSIM")
    wx = sliding_window_view(x, (window, window))
    wy = sliding_window_view(y, (window, window))
    mu_x, mu_y = wx.mean(axis=(2, 3)), wy.mean(axis=(2, 3))
    var_x = (wx * wx).mean(axis=(2, 3)) - mu_x * mu_x
    var_y = (wy * wy).mean(axis=(2, 3)) - mu_y * mu_y
    cov = (wx * wy).mean(axis=(2, 3)) - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    )
    return float(np.clip(ssim_map.mean(), -1.0, 1.0))


def _edges(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = ndimage.sobel(a, axis=1, mode="nearest")
    gy = ndimage.sobel(a, axis=0, mode="nearest")
    strength = np.sqrt(gx * gx + gy * gy)
    safe_gx = np.where(gx == 0, 1.0, gx)
    orientation = np.where(gx == 0, np.pi / 2, np.arctan(gy / safe_gx))
    return strength, orientation


def _edge_preservation(g_src, a_src, g_f, a_f) -> np.ndarray:
    both_equal = g_src == g_f
    ratio = np.where(
        both_equal, 1.0,
        np.where(g_src > g_f, g_f / np.where(g_src == 0, 1.0, g_src), g_src / np.where(g_f == 0, 1.0, g_f)),
    )
    alignment = 1.0 - np.abs(a_src - a_f) / (np.pi / 2)
    gamma_g = 1.0 + math.exp(QABF_KG * (1.0 - QABF_DG))
    gamma_a = 1.0 + math.exp(QABF_KA * (1.0 - QABF_DA))
    q_g = gamma_g / (1.0 + np.exp(QABF_KG * (ratio - QABF_DG)))
    q_a = gamma_a / (1.0 + np.exp(QABF_KA * (alignment - QABF_DA)))
    return q_g * q_a


def qabf(fused, ir, vi) -> float:
    """Transferencia de bordes de las fuentes a la fusión, ponderada por su fuerza."""
    f, a, b = _scaled(fused), _scaled(ir), _scaled(vi)
    validate_shapes_equal(f.shape, a.shape, "Qabf")
    validate_shapes_equal(f.shape, b.shape, "Qabf")
    g_f, o_f = _edges(f)
    g_a, o_a = _edges(a)
    g_b, o_b = _edges(b)
    q_af = _edge_preservation(g_a, o_a, g_f, o_f)
    q_bf = _edge_preservation(g_b, o_b, g_f, o_f)
    denominator = float(np.sum(g_a + g_b))
    if denominator == 0.0:
        return 0.0
    value = float(np.sum(q_af * g_a + q_bf * g_b)) / denominator
    return float(np.clip(value, 0.0, 1.0))


def evaluate_fusion(fused, ir, vi, name: str = "", bins: int = MI_BINS) -> MetricReport:
    reference = (_scaled(ir) + _scaled(vi)) / (2.0 * PSNR_PEAK)
    report = MetricReport(
        name=name,
        ag=ag(fused),
        sf=sf(fused),
        psnr=psnr(fused, reference),
        mi=mi(fused, ir, bins) + mi(fused, vi, bins),
        ssim=(ssim(fused, ir) + ssim(fused, vi)) / 2.0,
        qabf=qabf(fused, ir, vi),
    )
    logger.debug("metrics name=%s %s", name, " ".join(f"{k}={v:.4f}" for k, v in report.values().items()))
    return report


def aggregate_reports(reports: list[MetricReport], name: str = "mean") -> MetricReport:
    if not reports:
        raise ContractError("No hay informes que agregar")
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in METRIC_NAMES}
    return MetricReport(name=name, **means)


def mrank(table: dict[str, dict[str, float]], directions: dict[str, bool] | None = None) -> dict[str, float]:
    """Rango medio por método; rango 1 = mejor y los empates promedian su tramo.

    `directions` indica por métrica si mayor es mejor (por defecto, sí).
    """
    methods = list(table)
    if len(methods) < 2:
        raise ContractError(f"mRank necesita al menos 2 métodos, recibidos {len(methods)}")
    metrics = list(table[methods[0]])
    if not metrics:
        raise ContractError("mRank necesita al menos una métrica")
    # Todas las filas deben tener exactamente las mismas métricas
    for method in methods[1:]:
        if set(table[method]) != set(metrics):
            raise ContractError(f"Métricas distintas: método={method} frente a {methods[0]}")
    directions = directions or {}
    ranks = np.zeros(len(methods))
    for metric in metrics:
        column = []
        for method in methods:
            value = float(table[method][metric])
            if math.isnan(value):
                raise ContractError(f"Celda NaN: método={method} métrica={metric}")
            column.append(value)
        column = np.asarray(column)
        higher_better = directions.get(metric, True)
        ranks += rankdata(-column if higher_better else column, method="average")
    return {method: float(r / len(metrics)) for method, r in zip(methods, ranks)}
