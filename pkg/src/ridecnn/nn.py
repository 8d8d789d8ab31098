"""A small layer-wise neural network engine in float64 numpy.

Every layer caches what its backward pass needs during ``forward``. Inputs
are batched as (N, C, H, W) for images and (N, F) for vectors; the
functional ops also accept a single unbatched example.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64


class NumericError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


# --------------------------------------------------------------------------
# functional ops


def _as_batch(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ValueError(f"expected {ndim - 1}-d or batched {ndim}-d input, got shape {x.shape}")
    return x, False


def _pad(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 convolution (cross-correlation).

    Each output is accumulated over kernel row, kernel column, then input
    channel, all ascending, starting from 0.0; the bias is added last. The
    order is fixed so results are bitwise reproducible.
    """
    xb, single = _as_batch(x, 4)
    c_out, c_in, kh, kw = kernels.shape
    if xb.shape[1] != c_in:
        raise ValueError(f"input has {xb.shape[1]} channels, kernels expect {c_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("same padding needs odd kernel sizes")
    n, _, h, w = xb.shape
    xp = _pad(xb, kh, kw)
    acc = np.zeros((n, c_out, h, w), dtype=DTYPE)
    tmp = np.empty_like(acc)
    for dy in range(kh):
        for dx in range(kw):
            for c in range(c_in):
                np.multiply(xp[:, c, None, dy:dy + h, dx:dx + w], kernels[None, :, c, dy, dx, None, None], out=tmp)
                acc += tmp
    acc += bias[None, :, None, None]
    return acc[0] if single else acc


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, kernels: np.ndarray):
    """Gradients of ``conv2d_forward`` w.r.t. (input, kernels, bias)."""
    gb, single = _as_batch(grad_out, 4)
    xb, _ = _as_batch(x, 4)
    c_out, c_in, kh, kw = kernels.shape
    if gb.shape[0] != xb.shape[0] or gb.shape[1] != c_out or gb.shape[2:] != xb.shape[2:]:
        raise ValueError(f"grad_out shape {gb.shape} inconsistent with input {xb.shape} and kernels {kernels.shape}")
    n, _, h, w = xb.shape
    xp = _pad(xb, kh, kw)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, H, W, kh, kw)
    grad_k = np.tensordot(gb, windows, axes=([0, 2, 3], [0, 2, 3]))
    grad_b = gb.sum(axis=(0, 2, 3))
    taps = np.tensordot(gb, kernels, axes=([1], [0]))  # (N, H, W, C, kh, kw)
    grad_xp = np.zeros_like(xp)
    for dy in range(kh):
        for dx in range(kw):
            grad_xp[:, :, dy:dy + h, dx:dx + w] += taps[..., dy, dx].transpose(0, 3, 1, 2)
    ph, pw = kh // 2, kw // 2
    grad_x = grad_xp[:, :, ph:ph + h, pw:pw + w]
    return (grad_x[0] if single else grad_x), grad_k, grad_b


def maxpool_forward(x: np.ndarray, window: int = 2, stride: int = 2):
    """Non-overlapping max pooling with floor semantics (a trailing odd row/column is dropped).

    Returns the pooled tensor and a cache of flat argmax positions within each
    window, scanned row-major so ties resolve to the first position.
    """
    if window != stride:
        raise ValueError("only non-overlapping pooling (window == stride) is supported")
    xb, single = _as_batch(x, 4)
    n, c, h, w = xb.shape
    if h < window or w < window:
        raise ValueError(f"input {h}x{w} smaller than the {window}x{window} pooling window")
    ho, wo = h // window, w // window
    blocks = xb[:, :, :ho * window, :wo * window].reshape(n, c, ho, window, wo, window)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, window * window)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    cache = (arg, xb.shape, window, single)
    return (out[0] if single else out), cache


def maxpool_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    arg, shape, window, single = cache
    gb, _ = _as_batch(grad_out, 4)
    n, c, h, w = shape
    ho, wo = arg.shape[2:]
    blocks = np.zeros((n, c, ho, wo, window * window), dtype=DTYPE)
    np.put_along_axis(blocks, arg[..., None], gb[..., None], axis=-1)
    blocks = blocks.reshape(n, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
    grad = np.zeros(shape, dtype=DTYPE)
    grad[:, :, :ho * window, :wo * window] = blocks.reshape(n, c, ho * window, wo * window)
    return grad[0] if single else grad


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 taken as 0
    return np.where(x > 0, grad_out, 0.0)


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    xb, single = _as_batch(x, 2)
    if xb.shape[1] != weights.shape[1]:
        raise ValueError(f"input length {xb.shape[1]} does not match weights {weights.shape}")
    out = xb @ weights.T + bias
    return out[0] if single else out


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray):
    gb, single = _as_batch(grad_out, 2)
    xb, _ = _as_batch(x, 2)
    if gb.shape[1] != weights.shape[0] or xb.shape[1] != weights.shape[1]:
        raise ValueError("dense_backward shapes inconsistent with weights")
    grad_x = gb @ weights
    return (grad_x[0] if single else grad_x), gb.T @ xb, gb.sum(axis=0)


def flatten(x: np.ndarray) -> np.ndarray:
    """Flatten each example channel-major, then row, then column."""
    xb, single = _as_batch(x, 4)
    out = xb.reshape(xb.shape[0], -1)
    return out[0] if single else out


def unflatten(v: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim == 1:
        return v.reshape(shape)
    return v.reshape((v.shape[0],) + tuple(shape))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=DTYPE)
    target = np.asarray(target, dtype=DTYPE)
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


# --------------------------------------------------------------------------
# layers


class Layer:
    params: list[np.ndarray] = []
    grads: list[np.ndarray] = []
    param_names: tuple[str, ...] = ()

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def pattern(self):
        """Discrete state taken in the last forward pass (None for smooth layers)."""
        return None


class Conv2D(Layer):
    param_names = ("kernels", "bias")

    def __init__(self, c_in: int, c_out: int, kh: int = 3, kw: int = 3, name: str = "conv"):
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel {kh}x{kw} must have odd sides for same padding")
        self.name = name
        self.kernels = np.zeros((c_out, c_in, kh, kw), dtype=DTYPE)
        self.bias = np.zeros(c_out, dtype=DTYPE)
        self.params = [self.kernels, self.bias]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._x = None

    @property
    def fan_in(self) -> int:
        return int(np.prod(self.kernels.shape[1:]))

    def forward(self, x):
        self._x = x
        return conv2d_forward(x, self.kernels, self.bias)

    def backward(self, grad):
        gx, gk, gb = conv2d_backward(grad, self._x, self.kernels)
        self.grads[0][...] = gk
        self.grads[1][...] = gb
        return gx

    def output_shape(self, shape):
        if shape[0] != self.kernels.shape[1]:
            raise ValueError(f"{self.name}: input has {shape[0]} channels, expected {self.kernels.shape[1]}")
        return (self.kernels.shape[0],) + tuple(shape[1:])


class Dense(Layer):
    param_names = ("weights", "bias")

    def __init__(self, n_in: int, n_out: int, name: str = "dense"):
        self.name = name
        self.weights = np.zeros((n_out, n_in), dtype=DTYPE)
        self.bias = np.zeros(n_out, dtype=DTYPE)
        self.params = [self.weights, self.bias]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._x = None

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    def forward(self, x):
        self._x = x
        return dense_forward(x, self.weights, self.bias)

    def backward(self, grad):
        gx, gw, gb = dense_backward(grad, self._x, self.weights)
        self.grads[0][...] = gw
        self.grads[1][...] = gb
        return gx

    def output_shape(self, shape):
        if shape != (self.weights.shape[1],):
            raise ValueError(f"{self.name}: input shape {shape} does not match ({self.weights.shape[1]},)")
        return (self.weights.shape[0],)


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name
        self.params, self.grads = [], []
        self._x = None

    def forward(self, x):
        self._x = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(grad, self._x)

    def pattern(self):
        return self._x > 0


class MaxPool2D(Layer):
    def __init__(self, window: int = 2, name: str = "pool"):
        self.name = name
        self.window = window
        self.params, self.grads = [], []
        self._cache = None

    def forward(self, x):
        out, self._cache = maxpool_forward(x, self.window, self.window)
        return out

    def backward(self, grad):
        return maxpool_backward(grad, self._cache)

    def output_shape(self, shape):
        c, h, w = shape
        if h < self.window or w < self.window:
            raise ValueError(f"{self.name}: {h}x{w} input smaller than pooling window")
        return (c, h // self.window, w // self.window)

    def pattern(self):
        return self._cache[0]


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        self.name = name
        self.params, self.grads = [], []
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return flatten(x)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Sequential:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def named_params(self):
        for layer in self.layers:
            for pname, p in zip(layer.param_names, layer.params):
                yield f"{layer.name}.{pname}", p

    def patterns(self):
        return [p for p in (layer.pattern() for layer in self.layers) if p is not None]

    def loss_and_grads(self, x, target) -> float:
        loss, g = mse_loss(self.forward(x), target)
        self.backward(g)
        return loss


def count_parameters(network) -> int:
    return int(sum(p.size for p in network.params))


def init_params(network: Sequential, seed: int) -> Sequential:
    """He-normal weights, N(0, 2/fan_in), from a seeded PCG64 generator; zero biases."""
    rng = np.random.default_rng(seed)
    for layer in network.layers:
        if isinstance(layer, Conv2D):
            layer.kernels[...] = rng.normal(0.0, np.sqrt(2.0 / layer.fan_in), layer.kernels.shape)
            layer.bias[...] = 0.0
        elif isinstance(layer, Dense):
            layer.weights[...] = rng.normal(0.0, np.sqrt(2.0 / layer.fan_in), layer.weights.shape)
            layer.bias[...] = 0.0
    return network


# --------------------------------------------------------------------------
# optimisation


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Bias-corrected Adam update, in place on ``params``."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# --------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    excluded: int
    worst: str = ""


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def _same_patterns(p, q) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(p, q))


def gradient_check(network: Sequential, x: np.ndarray, target: np.ndarray, eps: float = 1e-5,
                   n_params: int = 200, seed: int = 0) -> GradCheckResult:
    """Compare backprop gradients with central differences of the full MSE loss.

    Parameters are drawn round-robin across parameter arrays in a seeded
    random order. A parameter whose +/-eps perturbation changes any ReLU
    sign or pooling argmax is skipped (the loss is not differentiable
    across such a crossing) and another is drawn, until ``n_params`` have
    been checked or candidates run out.

    The loss difference is evaluated as (1/n) sum (p+ - p-)(p+ + p- - 2y),
    which equals L(theta+eps) - L(theta-eps) exactly in real arithmetic but
    keeps parameters with gradients far below the loss magnitude
    measurable in float64.
    """
    rng = np.random.default_rng(seed)
    loss = network.loss_and_grads(x, target)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss} in gradient check")
    base_patterns = [p.copy() for p in network.patterns()]
    analytic = [g.copy() for g in network.grads]
    names = [name for name, _ in network.named_params()]
    params = network.params
    queues = [list(rng.permutation(p.size)) for p in params]

    target = np.asarray(target, dtype=DTYPE)

    def output_at() -> tuple[np.ndarray, list]:
        out = network.forward(x)
        if not np.isfinite(out).all():
            raise NumericError("non-finite network output in gradient check")
        return out, network.patterns()

    worst, worst_where = 0.0, ""
    checked = excluded = 0
    while checked < n_params and any(queues):
        for k, (p, queue) in enumerate(zip(params, queues)):
            if not queue or checked >= n_params:
                continue
            i = queue.pop()
            flat = p.reshape(-1)
            original = flat[i]
            flat[i] = original + eps
            plus, pat_plus = output_at()
            crossed = not _same_patterns(base_patterns, pat_plus)
            flat[i] = original - eps
            minus, pat_minus = output_at()
            crossed = crossed or not _same_patterns(base_patterns, pat_minus)
            flat[i] = original
            if crossed:
                excluded += 1
                continue
            # L(+) - L(-) of the MSE, rearranged so no two large totals cancel
            numeric = float(np.sum((plus - minus) * (plus + minus - 2.0 * target))) / target.size / (2.0 * eps)
            err = relative_error(float(analytic[k].reshape(-1)[i]), numeric)
            checked += 1
            if err > worst:
                worst, worst_where = err, f"{names[k]}[{i}]"
    network.forward(x)
    return GradCheckResult(worst, checked, excluded, worst_where)
