"""Coefficient network, exact reverse-mode gradients, RMSProp and training.

The network maps each filtered view (one channel, N samples) through
``conv1 -> ReLU -> conv2`` along the detector axis to C coefficient channels.
Convolutions are cross-correlations with zero "same" padding and stride 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .geometry import Geometry, GridSpec
from .interp import BasisSet, CoeffTensor
from .projector import ImageGrid, Sinogram
from .recon import linfbp_forward
from .spectral import filter_sinogram, make_filter


class NumericalError(RuntimeError):
    """Raised when training produces a non-finite loss or gradient."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class ModelParams:
    w1: np.ndarray  # hidden x 1 x k1
    b1: np.ndarray  # hidden
    w2: np.ndarray  # C x hidden x k2
    b2: np.ndarray  # C

    ORDER = ("w1", "b1", "w2", "b2")

    def __post_init__(self):
        for name in self.ORDER:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        hidden, cin, k1 = self.w1.shape
        n_basis, hidden2, k2 = self.w2.shape
        if cin != 1 or hidden2 != hidden:
            raise ValueError("conv layer shapes are inconsistent")
        if k1 % 2 == 0 or k2 % 2 == 0:
            raise ValueError("kernel sizes must be odd for 'same' padding")
        if self.b1.shape != (hidden,) or self.b2.shape != (n_basis,):
            raise ValueError("bias shapes do not match the conv layers")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_basis(self) -> int:
        return self.w2.shape[0]

    @property
    def kernel_sizes(self) -> tuple:
        return self.w1.shape[2], self.w2.shape[2]

    @property
    def size(self) -> int:
        return sum(getattr(self, n).size for n in self.ORDER)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in self.ORDER])

    def with_vector(self, vec) -> "ModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {vec.shape}")
        parts, pos = {}, 0
        for name in self.ORDER:
            shape = getattr(self, name).shape
            n = int(np.prod(shape))
            parts[name] = vec[pos:pos + n].reshape(shape).copy()
            pos += n
        return ModelParams(**parts)

    def copy(self) -> "ModelParams":
        return self.with_vector(self.to_vector())


def linear_equivalent_taps(basis: BasisSet, ensemble: bool = False) -> np.ndarray:
    """``C x 3`` weights on samples ``p[n-1], p[n], p[n+1]`` that reproduce linear interpolation.

    Hat bases reproduce it exactly. Other bases get the least-squares fit over
    the offsets one cell can see: ``|u| <= 0.5``, or ``|u| <= 1`` with the
    ensemble.
    """
    if basis.family == "linear":
        taps = np.zeros((basis.size, 3))
        k = basis.k
        for c in range(basis.size):
            offset = (c - k) / k
            i0 = math.floor(offset)
            f = offset - i0
            taps[c, i0 + 1] += 1.0 - f
            if f:
                taps[c, i0 + 2] += f
        return taps
    half = 1.0 if ensemble else 0.5
    u = np.linspace(-half, half, 2001)
    target = np.stack([np.maximum(-u, 0.0), 1.0 - np.abs(u), np.maximum(u, 0.0)], axis=1)
    design = basis.evaluate(u).T
    taps, *_ = np.linalg.lstsq(design, target, rcond=None)
    return taps


def init_params(n_basis: int, hidden: int = 8, k1: int = 5, k2: int = 5, seed: int = 0,
                scheme: str = "fan_in", noise: float = 1.0, basis: BasisSet | None = None,
                ensemble: bool = False) -> ModelParams:
    """Seeded initialization.

    ``fan_in``: every weight and bias uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.
    ``linear``: conv weights wired so the network outputs coefficients that
    reproduce plain linear interpolation (:func:`linear_equivalent_taps`), plus
    the ``fan_in`` draw scaled by ``noise``. Requires ``hidden >= 2`` and
    ``k2 >= 3``; ``basis`` defaults to the hat family with ``C = 2k + 1``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    b_1 = 1.0 / math.sqrt(1 * k1)
    b_2 = 1.0 / math.sqrt(hidden * k2)
    w1 = rng.uniform(-b_1, b_1, size=(hidden, 1, k1))
    b1 = rng.uniform(-b_1, b_1, size=hidden)
    w2 = rng.uniform(-b_2, b_2, size=(n_basis, hidden, k2))
    b2 = rng.uniform(-b_2, b_2, size=n_basis)
    if scheme == "fan_in":
        return ModelParams(w1, b1, w2, b2)
    if scheme != "linear":
        raise ValueError(f"unknown init scheme {scheme!r}")
    if hidden < 2 or k2 < 3 or n_basis % 2 == 0:
        raise ValueError("linear init needs hidden >= 2, k2 >= 3 and odd C")
    if basis is None:
        basis = BasisSet("linear", (n_basis - 1) // 2)
    if basis.size != n_basis:
        raise ValueError(f"basis has {basis.size} functions, expected {n_basis}")
    w1, b1, w2, b2 = (a * noise for a in (w1, b1, w2, b2))
    c1, c2 = k1 // 2, k2 // 2
    # ReLU(x) - ReLU(-x) = x carries the filtered view through the nonlinearity.
    w1[0, 0, c1] += 1.0
    w1[1, 0, c1] -= 1.0
    taps = linear_equivalent_taps(basis, ensemble)
    w2[:, 0, c2 - 1:c2 + 2] += taps
    w2[:, 1, c2 - 1:c2 + 2] -= taps
    return ModelParams(w1, b1, w2, b2)


# ---------------------------------------------------------------------------
# 1-D convolution along the detector axis
# ---------------------------------------------------------------------------


def conv1d(x, w, b):
    """``out[m, o, n] = b[o] + sum_{i,k} w[o, i, k] * x[m, i, n + k - K//2]`` (zero padded)."""
    pad = w.shape[2] // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, w.shape[2], axis=2)  # M x Cin x N x K
    return np.einsum("mink,oik->mon", win, w) + b[None, :, None]


def conv1d_backward(x, w, grad_out, need_input_grad=True):
    """Gradients of :func:`conv1d` w.r.t. weights, bias and (optionally) input."""
    kernel = w.shape[2]
    pad = kernel // 2
    n = x.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, kernel, axis=2)
    gw = np.einsum("mon,mink->oik", grad_out, win)
    gb = grad_out.sum(axis=(0, 2))
    gx = None
    if need_input_grad:
        gxp = np.zeros_like(xp)
        for k in range(kernel):
            gxp[:, :, k:k + n] += np.einsum("mon,oi->min", grad_out, w[:, :, k])
        gx = gxp[:, :, pad:pad + n]
    return gw, gb, gx


@dataclass
class NetCache:
    x: np.ndarray  # M x 1 x N
    pre: np.ndarray  # M x hidden x N (before ReLU)


def net_forward(params: ModelParams, filtered: Sinogram, basis: BasisSet | None = None,
                return_cache: bool = False):
    """Coefficients ``z`` (C x N x M) predicted from the filtered sinogram."""
    if filtered.kind != "filtered":
        raise ValueError("the coefficient network takes filtered sinograms")
    if basis is not None and basis.size != params.n_basis:
        raise ValueError(f"network outputs {params.n_basis} channels, basis has {basis.size}")
    x = filtered.samples.T[:, None, :]
    pre = conv1d(x, params.w1, params.b1)
    out = conv1d(np.maximum(pre, 0.0), params.w2, params.b2)  # M x C x N
    z = np.ascontiguousarray(np.transpose(out, (1, 2, 0)))
    if basis is not None:
        z = CoeffTensor(z, basis, filtered.geometry)
    if return_cache:
        return z, NetCache(x, pre)
    return z


def net_backward(params: ModelParams, cache: NetCache, dl_dz) -> ModelParams:
    """Parameter gradients given ``dL/dz`` (C x N x M). ReLU'(0) is taken as 0."""
    g_out = np.transpose(np.asarray(dl_dz, dtype=np.float64), (2, 0, 1))  # M x C x N
    relu = np.maximum(cache.pre, 0.0)
    gw2, gb2, g_relu = conv1d_backward(relu, params.w2, g_out)
    g_pre = g_relu * (cache.pre > 0.0)
    gw1, gb1, _ = conv1d_backward(cache.x, params.w1, g_pre, need_input_grad=False)
    return ModelParams(gw1, gb1, gw2, gb2)


def linfbp_backward(dl_di, basis: BasisSet, grid: GridSpec, geometry: Geometry,
                    ensemble: bool = False, backend=None) -> np.ndarray:
    """Transpose of the linear map ``z -> I`` of :func:`linfbp.recon.linfbp_forward`."""
    dl_di = np.asarray(dl_di, dtype=np.float64)
    if dl_di.shape != grid.shape:
        raise ValueError("gradient shape does not match the grid")
    raw = _kernels.lcr_scatter(dl_di, geometry, grid, basis.family, basis.k, basis.size,
                               ensemble=ensemble, backend=backend)
    return geometry.view_weight * raw


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _check_pair(i_hat, i_ref):
    i_hat = np.asarray(i_hat, dtype=np.float64)
    i_ref = np.asarray(i_ref, dtype=np.float64)
    if i_hat.shape != i_ref.shape:
        raise ValueError(f"shape mismatch {i_hat.shape} vs {i_ref.shape}")
    return i_hat, i_ref


def _diff(img, axis):
    """Forward difference with replicate boundary (last entry along ``axis`` is 0)."""
    d = np.zeros_like(img)
    if axis == 0:
        d[:-1] = img[1:] - img[:-1]
    else:
        d[:, :-1] = img[:, 1:] - img[:, :-1]
    return d


def _diff_transpose(g, axis):
    out = np.zeros_like(g)
    if axis == 0:
        out[1:] += g[:-1]
        out[:-1] -= g[:-1]
    else:
        out[:, 1:] += g[:, :-1]
        out[:, :-1] -= g[:, :-1]
    return out


def loss_mse(i_hat, i_ref) -> float:
    """Sum (not mean) of squared differences."""
    i_hat, i_ref = _check_pair(i_hat, i_ref)
    return float(np.sum((i_hat - i_ref) ** 2))


def loss_gdl(i_hat, i_ref) -> float:
    i_hat, i_ref = _check_pair(i_hat, i_ref)
    return float(sum(np.abs(_diff(i_hat, a) - _diff(i_ref, a)).sum() for a in (0, 1)))


def loss_and_grad(i_hat, i_ref, gdl_weight: float = 0.0):
    """``MSE + gdl_weight * GDL`` and its (sub)gradient w.r.t. ``i_hat``."""
    i_hat, i_ref = _check_pair(i_hat, i_ref)
    r = i_hat - i_ref
    loss = float(np.sum(r * r))
    grad = 2.0 * r
    if gdl_weight:
        for a in (0, 1):
            d = _diff(i_hat, a) - _diff(i_ref, a)
            loss += gdl_weight * float(np.abs(d).sum())
            grad = grad + gdl_weight * _diff_transpose(np.sign(d), a)
    return loss, grad


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimState:
    square_avg: np.ndarray
    momentum_buf: np.ndarray | None = None
    rho: float = 0.9
    eps: float = 1e-8
    momentum: float = 0.0
    step: int = 0

    @classmethod
    def zeros(cls, n: int, rho: float = 0.9, eps: float = 1e-8, momentum: float = 0.0):
        buf = np.zeros(n) if momentum else None
        return cls(np.zeros(n), buf, rho, eps, momentum)


def rmsprop_step(params, grads, state: OptimState, lr: float):
    """One RMSProp update on flat vectors; returns ``(new_params, new_state)``.

    ``s <- rho s + (1 - rho) g^2``; ``p <- p - lr g / (sqrt(s) + eps)``. With
    ``state.momentum > 0`` the normalized step is fed through a heavy-ball buffer.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or grads.shape != state.square_avg.shape:
        raise ValueError("parameter, gradient and state shapes differ")
    sq = state.rho * state.square_avg + (1.0 - state.rho) * grads * grads
    step = grads / (np.sqrt(sq) + state.eps)
    buf = state.momentum_buf
    if state.momentum:
        buf = state.momentum * buf + step
        step = buf
    new_state = OptimState(sq, buf, state.rho, state.eps, state.momentum, state.step + 1)
    return params - lr * step, new_state


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1
    lr: float = 2e-5
    gdl_weight: float = 0.0
    seed: int = 0
    basis_family: str = "linear"
    k: int = 2
    filter_kind: str = "ramp"
    hidden: int = 8
    k1: int = 5
    k2: int = 5
    rho: float = 0.9
    eps: float = 1e-8
    momentum: float = 0.0
    ensemble: bool = False
    init: str = "fan_in"
    init_noise: float = 0.01
    shuffle: bool = True

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be an integer >= 1")
        if self.batch_size != 1:
            raise ValueError("only batch_size 1 is supported")
        if self.gdl_weight < 0:
            raise ValueError("gdl_weight must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        BasisSet(self.basis_family, self.k)

    @property
    def basis(self) -> BasisSet:
        return BasisSet(self.basis_family, self.k)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: ModelParams
    state: OptimState
    log: list = field(default_factory=list)  # dicts: epoch, sample_index, loss, loss_per_pixel
    epochs_done: int = 0

    def epoch_losses(self) -> np.ndarray:
        """Mean training loss per epoch."""
        by_epoch = {}
        for row in self.log:
            by_epoch.setdefault(row["epoch"], []).append(row["loss"])
        return np.array([np.mean(by_epoch[e]) for e in sorted(by_epoch)])


class LInFBPModel:
    """Coefficient network + basis; differentiable end to end."""

    def __init__(self, params: ModelParams, basis: BasisSet, ensemble: bool = False,
                 backend=None):
        if params.n_basis != basis.size:
            raise ValueError("network channel count does not match the basis size")
        self.params = params
        self.basis = basis
        self.ensemble = ensemble
        self.backend = backend

    def coefficients(self, filtered: Sinogram) -> np.ndarray:
        return net_forward(self.params, filtered)

    def __call__(self, filtered: Sinogram, grid: GridSpec) -> ImageGrid:
        z = CoeffTensor(self.coefficients(filtered), self.basis, filtered.geometry)
        return linfbp_forward(filtered, z, self.basis, grid, ensemble=self.ensemble,
                              backend=self.backend)

    def loss_and_gradient(self, filtered: Sinogram, reference: ImageGrid,
                          gdl_weight: float = 0.0):
        """Loss of one sample and its gradient w.r.t. every network parameter."""
        z, cache = net_forward(self.params, filtered, return_cache=True)
        if not np.all(np.isfinite(z)):
            raise NumericalError("network produced non-finite coefficients")
        grid = reference.grid
        image = linfbp_forward(filtered, CoeffTensor(z, self.basis, filtered.geometry),
                               self.basis, grid, ensemble=self.ensemble, backend=self.backend)
        loss, dl_di = loss_and_grad(image.values, reference.values, gdl_weight)
        dl_dz = linfbp_backward(dl_di, self.basis, grid, filtered.geometry,
                                ensemble=self.ensemble, backend=self.backend)
        return loss, net_backward(self.params, cache, dl_dz)


def prepare_dataset(dataset, filter_kind: str):
    """Filter every raw sinogram once; returns ``[(filtered, reference), ...]``."""
    if not dataset:
        raise ValueError("training needs at least one sample")
    geometry = dataset[0][0].geometry
    spec = make_filter(filter_kind, geometry.n_bins, geometry.bin_width)
    out = []
    for sino, ref in dataset:
        if sino.geometry != geometry:
            raise ValueError("all training sinograms must share one geometry")
        filtered = sino if sino.kind == "filtered" else filter_sinogram(sino, spec)
        out.append((filtered, ref))
    return out


def epoch_order(seed: int, epoch: int, n: int, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.Generator(np.random.PCG64([seed, epoch])).permutation(n)


def train(config: TrainConfig, dataset, resume: TrainResult | None = None,
          stop_after: int | None = None, backend=None, progress=None) -> TrainResult:
    """Minimize the summed per-sample loss with RMSProp, one sample per step.

    ``resume`` continues from a previous result (its ``epochs_done`` epochs are
    skipped). ``stop_after`` halts after that many total epochs, which is how an
    interrupted run is simulated. ``progress(epoch, mean_loss)`` is called at
    the end of each epoch.
    """
    data = prepare_dataset(dataset, config.filter_kind)
    basis = config.basis
    if resume is None:
        params = init_params(basis.size, config.hidden, config.k1, config.k2, config.seed,
                             config.init, config.init_noise, basis, config.ensemble)
        state = OptimState.zeros(params.size, config.rho, config.eps, config.momentum)
        result = TrainResult(params, state, [], 0)
    else:
        result = TrainResult(resume.params.copy(), resume.state, list(resume.log),
                             resume.epochs_done)
    last = config.epochs if stop_after is None else min(stop_after, config.epochs)
    model = LInFBPModel(result.params, basis, config.ensemble, backend=backend)
    vec = result.params.to_vector()
    state = result.state
    n_pixels = data[0][1].values.size
    for epoch in range(result.epochs_done, last):
        losses = []
        for j in epoch_order(config.seed, epoch, len(data), config.shuffle):
            filtered, ref = data[j]
            model.params = result.params.with_vector(vec)
            try:
                loss, grads = model.loss_and_gradient(filtered, ref, config.gdl_weight)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch + 1}, sample {int(j)}: {exc}") from exc
            gvec = grads.to_vector()
            if not (math.isfinite(loss) and np.all(np.isfinite(gvec))):
                raise NumericalError(
                    f"non-finite loss or gradient at epoch {epoch + 1}, sample {int(j)}: "
                    f"loss={loss!r}"
                )
            vec, state = rmsprop_step(vec, gvec, state, config.lr)
            result.log.append({"epoch": epoch + 1, "sample_index": int(j), "loss": loss,
                               "loss_per_pixel": loss / n_pixels})
            losses.append(loss)
        result.epochs_done = epoch + 1
        if progress is not None:
            progress(epoch + 1, float(np.mean(losses)))
    result.params = result.params.with_vector(vec)
    result.state = state
    return result


def evaluate_loss(params: ModelParams, config: TrainConfig, dataset, backend=None) -> float:
    """Mean per-sample training loss for fixed parameters."""
    data = prepare_dataset(dataset, config.filter_kind)
    model = LInFBPModel(params, config.basis, config.ensemble, backend=backend)
    total = 0.0
    for filtered, ref in data:
        image = model(filtered, ref.grid)
        total += loss_mse(image.values, ref.values) + (
            config.gdl_weight * loss_gdl(image.values, ref.values) if config.gdl_weight else 0.0)
    return total / len(data)
