import logging
import threading
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.config import LEAKY_SLOPE
from utils.errors import ContractError, EmptyReductionError, ShapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Array denso float64 con hueco opcional para el gradiente."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool) -> "Tensor":
        # sin copia: solo para resultados recién calculados
        out = cls.__new__(cls)
        out.data = np.asarray(array, dtype=np.float64)
        out.grad = None
        out.requires_grad = requires_grad
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return hadamard(self, other)

    def __rmul__(self, other):
        return hadamard(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape))


class TapeEntry:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Registro ordenado de primitivas aplicadas.

    Se activa como gestor de contexto; la cinta activa es local al hilo, de
    modo que cintas distintas pueden ejecutarse en paralelo.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self._produced: set[int] = set()

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn):
        self.entries.append(TapeEntry(op, inputs, output, backward_fn))
        self._produced.add(id(output))

    def produced(self, tensor: Tensor) -> bool:
        return id(tensor) in self._produced

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for entry in self.entries:
            for t in entry.inputs:
                if t.requires_grad and id(t) not in self._produced:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False


_local = threading.local()


def _stack() -> list[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Tape | None:
    tapes = _stack()
    return tapes[-1] if tapes else None


def _apply(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(out_data, requires_grad)
    if requires_grad:
        tape = active_tape()
        if tape is not None:
            tape.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, what: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"Formas no difundibles para {what}: {a.shape} y {b.shape}") from None


# --- Aritmética elemental ---

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _apply("add", (a, b), a.data + b.data, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _apply("sub", (a, b), a.data - b.data, backward)


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "hadamard")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _apply("hadamard", (a, b), a.data * b.data, backward)


def scale(x: Tensor, factor: float) -> Tensor:
    def backward(g):
        return (g * factor,)

    return _apply("scale", (x,), x.data * factor, backward)


def abs_(x: Tensor) -> Tensor:
    def backward(g):
        return (g * np.sign(x.data),)

    return _apply("abs", (x,), np.abs(x.data), backward)


def sqrt(x: Tensor, floor: float = 1e-12) -> Tensor:
    """Raíz recortada en 0; el gradiente se anula donde el argumento < floor."""
    out = np.sqrt(np.maximum(x.data, 0.0))

    def backward(g):
        safe = np.where(x.data > floor, out, 1.0)
        return (np.where(x.data > floor, g * 0.5 / safe, 0.0),)

    return _apply("sqrt", (x,), out, backward)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Máximo elemental; en empate gana el primer argumento."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"maximum requiere formas iguales: {a.shape} y {b.shape}")
    pick_a = a.data >= b.data

    def backward(g):
        return np.where(pick_a, g, 0.0), np.where(pick_a, 0.0, g)

    return _apply("maximum", (a, b), np.where(pick_a, a.data, b.data), backward)


# --- Álgebra lineal ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul con dimensiones incompatibles: {a.shape} y {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _apply("matmul", (a, b), a.data @ b.data, backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"No se puede remodelar {x.shape} a {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _apply("reshape", (x,), out, backward)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose espera una matriz, recibido {x.shape}")

    def backward(g):
        return (g.T,)

    return _apply("transpose", (x,), x.data.T.copy(), backward)


def linear(weight: Tensor, x: Tensor, bias: Tensor | None = None) -> Tensor:
    """W·x (+ b) con x vector [e] o matriz de columnas [e×n]."""
    if x.ndim == 1:
        out = reshape(matmul(weight, reshape(x, (x.shape[0], 1))), (weight.shape[0],))
        return add(out, bias) if bias is not None else out
    out = matmul(weight, x)
    if bias is not None:
        out = add(out, reshape(bias, (bias.shape[0], 1)))
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"dot espera vectores iguales: {a.shape} y {b.shape}")
    return reduce(hadamard(a, b), "sum")


# --- Activaciones ---

def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activation(x: Tensor, kind: str, slope: float = LEAKY_SLOPE) -> Tensor:
    if kind == "sigmoid":
        out = _sigmoid(x.data)

        def backward(g):
            return (g * out * (1.0 - out),)
    elif kind == "tanh":
        out = np.tanh(x.data)

        def backward(g):
            return (g * (1.0 - out * out),)
    elif kind == "leaky_relu":
        out = np.where(x.data > 0, x.data, slope * x.data)

        def backward(g):
            return (np.where(x.data > 0, g, slope * g),)
    else:
        raise ContractError(f"Activación desconocida: {kind}")
    return _apply(kind, (x,), out, backward)


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    return activation(x, "leaky_relu", slope)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax por filas (último eje) con resta del máximo."""
    if x.ndim not in (1, 2) or x.shape[-1] == 0:
        raise ShapeError(f"softmax_rows espera [r×c] o [c] no vacío, recibido {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _apply("softmax_rows", (x,), out, backward)


# --- Estructura ---

def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ContractError("concat necesita al menos un tensor")
    parts = tuple(as_tensor(p) for p in parts)
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(p.shape, ref)) if i != axis % len(ref)
        ):
            raise ShapeError(f"concat con dimensiones incompatibles: {ref} y {p.shape}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _apply("concat", parts, np.concatenate([p.data for p in parts], axis=axis), backward)


def stack(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("stack necesita al menos un tensor")
    return concat([reshape(p, (1,) + p.shape) for p in parts], axis=0)


def getitem(x: Tensor, index) -> Tensor:
    out = np.array(x.data[index])

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _apply("getitem", (x,), out, backward)


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    if sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split de {x.shape} en {list(sizes)} no cuadra en el eje {axis}")
    pieces, start = [], 0
    for size in sizes:
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, start + size)
        pieces.append(getitem(x, tuple(index)))
        start += size
    return pieces


# --- Reducciones ---

def reduce(x: Tensor, kind: str, axis: int | None = None) -> Tensor:
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"Eje {axis} inválido para forma {x.shape}")
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise EmptyReductionError(f"Reducción '{kind}' sobre un eje vacío (forma {x.shape})")

    if kind == "sum":
        out = x.data.sum(axis=axis)

        def backward(g):
            g = g if axis is None else np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape).copy(),)
    elif kind == "mean":
        out = x.data.mean(axis=axis)

        def backward(g):
            g = g if axis is None else np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, x.shape).copy(),)
    elif kind == "max":
        # argmax devuelve el primer índice: desempate determinista
        if axis is None:
            flat = int(np.argmax(x.data))
            out = x.data.reshape(-1)[flat]

            def backward(g):
                gx = np.zeros(x.size)
                gx[flat] = g
                return (gx.reshape(x.shape),)
        else:
            arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
            out = np.take_along_axis(x.data, arg, axis=axis).squeeze(axis)

            def backward(g):
                gx = np.zeros_like(x.data)
                np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
                return (gx,)
    else:
        raise ContractError(f"Reducción desconocida: {kind}")
    return _apply(kind, (x,), np.asarray(out), backward)


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "sum", axis)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "mean", axis)


def max_(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "max", axis)


# --- Operadores espaciales ---

def conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """Correlación cruzada con relleno de ceros 'same'; salida ceil(H/stride)."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d espera [C×H×W] y [O×C×kh×kw]: {x.shape} y {kernel.shape}")
    channels, height, width = x.shape
    out_ch, k_ch, kh, kw = kernel.shape
    if k_ch != channels:
        raise ShapeError(f"conv2d: canales del núcleo {kernel.shape} no coinciden con la entrada {x.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"conv2d requiere núcleos de tamaño impar, recibido {kh}x{kw}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    padded = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.einsum("chwij,ocij->ohw", windows, kernel.data)
    out_h, out_w = out.shape[1:]

    def backward(g):
        d_kernel = np.einsum("ohw,chwij->ocij", g, windows)
        d_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                d_padded[:, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride] += \
                    np.einsum("ohw,oc->chw", g, kernel.data[:, :, i, j])
        return d_padded[:, ph:ph + height, pw:pw + width], d_kernel

    return _apply("conv2d", (x, kernel), out, backward)


def _edge_index(length: int, radius: int) -> np.ndarray:
    return np.clip(np.arange(-radius, length + radius), 0, length - 1)


def window_mean(x: Tensor, window: int) -> Tensor:
    """Media en ventana window×window con replicación de borde (mapa 2-D)."""
    if x.ndim != 2:
        raise ShapeError(f"window_mean espera [H×W], recibido {x.shape}")
    if window < 1 or window % 2 == 0:
        raise ContractError(f"La ventana debe ser impar, recibido {window}")
    height, width = x.shape
    radius = window // 2
    iy, ix = _edge_index(height, radius), _edge_index(width, radius)
    padded = x.data[iy][:, ix]
    out = sliding_window_view(padded, (window, window)).mean(axis=(2, 3))

    def backward(g):
        d_padded = np.zeros_like(padded)
        for dy in range(window):
            for dx in range(window):
                d_padded[dy:dy + height, dx:dx + width] += g
        d_padded /= window * window
        gx = np.zeros_like(x.data)
        np.add.at(gx, (iy[:, None], ix[None, :]), d_padded)
        return (gx,)

    return _apply("window_mean", (x,), out, backward)


# --- Bloques compuestos ---

def gru_cell(w_t: Tensor, h_prev: Tensor, params) -> Tensor:
    """Celda GRU: puertas de actualización z y reinicio r."""
    d, e = params.W_z.shape
    if w_t.shape != (e,) or h_prev.shape != (d,):
        raise ShapeError(
            f"gru_cell: entrada {w_t.shape} / estado {h_prev.shape} no encajan con W {(d, e)}"
        )
    z = sigmoid(add(linear(params.W_z, w_t, params.b_z), linear(params.U_z, h_prev)))
    r = sigmoid(add(linear(params.W_r, w_t, params.b_r), linear(params.U_r, h_prev)))
    h_tilde = tanh(add(linear(params.W_h, w_t, params.b_h), linear(params.U_h, hadamard(r, h_prev))))
    return add(hadamard(sub(1.0, z), h_prev), hadamard(z, h_tilde))


def mlp(x: Tensor, params) -> Tensor:
    """Dos capas: oculta tanh y salida lineal; x vector [n] o columnas [n×m]."""
    return linear(params.W2, tanh(linear(params.W1, x, params.b1)), params.b2)


# --- Gradientes ---

def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] = ()) -> None:
    """Propaga d(loss) por la cinta en orden inverso.

    Las hojas con requires_grad que no alcanzan la pérdida reciben gradiente
    cero; lo mismo las de `params` que no aparecen en la cinta.
    """
    if loss.size != 1:
        raise ContractError(f"La pérdida debe ser escalar, forma {loss.shape}")
    leaves = tape.leaves()
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad and not tape.produced(loss):
        leaves.append(loss)
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        for tensor, grad in zip(entry.inputs, entry.backward_fn(g)):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else grad
    for leaf in leaves:
        leaf.grad = grads.get(id(leaf), np.zeros_like(leaf.data))
    seen = {id(leaf) for leaf in leaves}
    for p in params:
        if id(p) not in seen:
            p.grad = np.zeros_like(p.data)


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-5,
    coords: int | None = None,
    seed: int = 0,
) -> float:
    """Máximo de |analítico − diferencia central| / max(1, |analítico|).

    `coords` limita la comprobación a un subconjunto aleatorio (sembrado) de
    coordenadas.
    """
    leaf = Tensor(x.data, requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
    backward(tape, y)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    base = leaf.data
    indices = np.arange(base.size)
    if coords is not None and coords < base.size:
        indices = np.random.default_rng(seed).choice(base.size, size=coords, replace=False)
    worst = 0.0
    for idx in indices:
        plus, minus = base.copy(), base.copy()
        plus.flat[idx] += step
        minus.flat[idx] -= step
        numeric = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2 * step)
        a = analytic.flat[idx]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    logger.debug("fd_check coords=%d max_rel_err=%.3e", len(indices), worst)
    return worst


class ParamStore:
    """Registro de parámetros con nombre; cada tensor se registra una vez."""

    def __init__(self, seed: int = 0, init_scale: float | None = None):
        self._params: dict[str, Tensor] = {}
        self._rng = np.random.default_rng(seed)
        self.init_scale = init_scale

    def register(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ContractError(f"Parámetro duplicado: {name}")
        if any(t is tensor for t in self._params.values()):
            raise ContractError(f"El tensor de '{name}' ya está registrado con otro nombre")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def create(self, name: str, shape, init: str = "normal") -> Tensor:
        shape = tuple(shape)
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "normal":
            if self.init_scale is not None:
                std = self.init_scale
            elif len(shape) >= 2:
                fan_in = int(np.prod(shape[1:]))
                std = np.sqrt(2.0 / (shape[0] + fan_in))
            else:
                std = 1.0 / np.sqrt(shape[0])
            data = self._rng.normal(0.0, std, size=shape)
        else:
            raise ContractError(f"Inicialización desconocida: {init}")
        return self.register(name, Tensor(data))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        if missing:
            raise ContractError(f"Faltan parámetros en el checkpoint: {sorted(missing)}")
        for name, t in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != t.shape:
                raise ShapeError(f"Parámetro '{name}': forma {value.shape}, se esperaba {t.shape}")
            t.data = value.copy()

    def zero_(self) -> None:
        for t in self._params.values():
            t.data = np.zeros_like(t.data)
