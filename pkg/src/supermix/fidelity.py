"""Frequency-domain evaluation of the sinc RKHS data-fidelity term.

Every quantity here is an integral against the box spectral measure of the
fidelity kernel, so it is a finite sum over Gauss-Legendre nodes ``w`` of

    Re sum_w A(w) exp(i <t, w>)

for some complex amplitude ``A``. A :class:`SpectralField` stores ``A`` and
evaluates the sum (and its derivatives) at scattered points or on a tensor
grid. Kernel sums over data points collapse into one amplitude, which keeps
the cost linear in the number of points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError
from .kernels import FidelitySpec, MixingKernelSpec, sinc
from .measures import DiscreteMeasure, Sample

# cap on the size of the tensor quadrature grid in dimension >= 2
MAX_TENSOR_NODES = 2**21
_CHUNK = 2048


def required_nodes(fidelity: FidelitySpec, max_lag: float) -> int:
    """Gauss-Legendre nodes per dimension needed to resolve ``cos(u w)`` for ``|u| <= max_lag``."""
    extra = math.ceil(0.7 * max(max_lag, 0.0) / fidelity.tau) + 48
    return max(fidelity.quad_points_per_dim, extra)


def _as_points(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 and dim == 1:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 and arr.shape[0] != 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr


class SpectralField:
    """The real function ``t -> Re sum_w A(w) exp(i <t, w>)`` on R^d."""

    __slots__ = ("nodes_1d", "amplitude", "dim")

    def __init__(self, nodes_1d: np.ndarray, amplitude: np.ndarray):
        self.nodes_1d = nodes_1d
        self.amplitude = amplitude
        self.dim = amplitude.ndim

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.nodes_1d, self.amplitude - other.amplitude)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.nodes_1d, self.amplitude + other.amplitude)

    def scaled(self, c: float) -> "SpectralField":
        return SpectralField(self.nodes_1d, self.amplitude * c)

    def _contract(self, pts: np.ndarray, orders) -> np.ndarray:
        w = self.nodes_1d
        out = None
        for j in range(self.dim):
            e = np.exp(1j * np.outer(pts[:, j], w))
            if orders[j]:
                e = e * (1j * w) ** orders[j]
            if out is None:
                out = e @ self.amplitude if self.dim == 1 else np.tensordot(e, self.amplitude, axes=([1], [0]))
            else:
                out = np.einsum("pm...,pm->p...", out, e)
        return out.real

    def _eval(self, t, orders_list) -> list:
        pts = _as_points(t, self.dim)
        res = [np.empty(len(pts)) for _ in orders_list]
        for s in range(0, len(pts), _CHUNK):
            block = pts[s : s + _CHUNK]
            for r, orders in zip(res, orders_list):
                r[s : s + _CHUNK] = self._contract(block, orders)
        return res

    def values(self, t) -> np.ndarray:
        return self._eval(t, [(0,) * self.dim])[0]

    def gradients(self, t) -> np.ndarray:
        d = self.dim
        orders = [tuple(int(i == j) for i in range(d)) for j in range(d)]
        return np.stack(self._eval(t, orders), axis=-1)

    def hessians(self, t) -> np.ndarray:
        d = self.dim
        pairs = [(i, j) for i in range(d) for j in range(i, d)]
        orders = []
        for i, j in pairs:
            o = [0] * d
            o[i] += 1
            o[j] += 1
            orders.append(tuple(o))
        vals = self._eval(t, orders)
        out = np.empty(vals[0].shape + (d, d))
        for (i, j), v in zip(pairs, vals):
            out[:, i, j] = v
            out[:, j, i] = v
        return out

    def on_grid(self, axes) -> np.ndarray:
        """Values on the tensor grid ``axes[0] x ... x axes[d-1]`` (``ij`` ordering)."""
        if len(axes) != self.dim:
            raise DimensionMismatchError("one axis per dimension required")
        out = self.amplitude
        for ax in axes:
            e = np.exp(1j * np.outer(np.asarray(ax, dtype=float), self.nodes_1d))
            out = np.tensordot(out, e, axes=([0], [1]))
        return out.real


class CorrelationEvaluator:
    """Quadrature for ``xi = lambda * phi`` and ``zeta = lambda * phi * phi``.

    ``max_lag`` is the largest argument norm (per coordinate) the caller
    intends to evaluate; the node count grows with it so that the oscillating
    integrand stays resolved.
    """

    def __init__(self, mixing: MixingKernelSpec, fidelity: FidelitySpec, max_lag: float = 0.0):
        if mixing.dim != fidelity.dim:
            raise DimensionMismatchError("mixing and fidelity dimensions differ")
        self.mixing = mixing
        self.fidelity = fidelity
        self.dim = mixing.dim
        self.max_lag = float(max_lag)
        n_nodes = required_nodes(fidelity, self.max_lag)
        if self.dim > 1:
            cap = int(MAX_TENSOR_NODES ** (1.0 / self.dim))
            if n_nodes > cap:
                warnings.warn(
                    f"quadrature needs {n_nodes} nodes per dimension, capped at {cap}; "
                    "large-lag values lose accuracy",
                    RuntimeWarning,
                    stacklevel=2,
                )
                n_nodes = cap
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        c = fidelity.cutoff
        self.nodes_1d = c * x
        self.weights_1d = c * w * fidelity.spectral_level ** (1.0 / self.dim)
        self.n_nodes = n_nodes
        d = self.dim
        grids = np.meshgrid(*([self.nodes_1d] * d), indexing="ij")
        self.nodes = np.stack(grids, axis=-1)
        weights = np.ones((n_nodes,) * d)
        for g in np.meshgrid(*([self.weights_1d] * d), indexing="ij"):
            weights = weights * g
        self.weights = weights
        self.sigma = mixing.spectral(self.nodes)
        if mixing.separable:
            self.sigma_1d = mixing.spectral_1d(self.nodes_1d)
        else:
            self.sigma_1d = None

    def covering(self, lag: float) -> "CorrelationEvaluator":
        """An evaluator accurate up to ``lag`` (self when already sufficient)."""
        if required_nodes(self.fidelity, lag) <= self.n_nodes:
            return self
        return CorrelationEvaluator(self.mixing, self.fidelity, max(lag, self.max_lag))

    # kernel sums ---------------------------------------------------------

    def spectrum(self, centers, weights) -> np.ndarray:
        """``S(w) = sum_k weights_k exp(-i <c_k, w>)`` on the node grid."""
        c = _as_points(centers, self.dim)
        wts = np.asarray(weights, dtype=float).reshape(-1)
        if len(wts) != len(c):
            raise DimensionMismatchError("one weight per center required")
        d, m = self.dim, self.n_nodes
        out = np.zeros((m,) * d, dtype=complex)
        block = max(1, 4_000_000 // m**d)
        for s in range(0, len(c), block):
            cb = c[s : s + block]
            acc = wts[s : s + block].astype(complex)
            acc = acc.reshape((-1,) + (1,) * d)
            for j in range(d):
                shape = [1] * (d + 1)
                shape[0], shape[j + 1] = len(cb), m
                acc = acc * np.exp(-1j * np.outer(cb[:, j], self.nodes_1d)).reshape(shape)
            out += acc.sum(axis=0)
        return out

    def field(self, centers, weights, power: int) -> SpectralField:
        """``t -> sum_k weights_k K(t - c_k)`` with ``K = xi`` (power 1) or ``zeta`` (power 2)."""
        if len(np.asarray(weights).reshape(-1)) == 0:
            return SpectralField(self.nodes_1d, np.zeros((self.n_nodes,) * self.dim, dtype=complex))
        amp = self.weights * self.sigma**power * self.spectrum(centers, weights)
        return SpectralField(self.nodes_1d, amp)

    # pairwise kernels --------------------------------------------------------

    def _kernel(self, u, power: int, order: int):
        pts = _as_points(u, self.dim)
        d = self.dim
        if self.sigma_1d is None:
            f = SpectralField(self.nodes_1d, (self.weights * self.sigma**power).astype(complex))
            return [f.values, f.gradients, f.hessians][order](pts)
        w = self.nodes_1d
        base = self.weights_1d * self.sigma_1d**power
        c0 = np.empty(pts.shape)
        s1 = np.empty(pts.shape)
        c2 = np.empty(pts.shape)
        for j in range(d):
            arg = np.outer(pts[:, j], w)
            cos, sin = np.cos(arg), np.sin(arg)
            c0[:, j] = cos @ base
            if order >= 1:
                s1[:, j] = -(sin @ (base * w))
            if order >= 2:
                c2[:, j] = -(cos @ (base * w * w))
        if order == 0:
            return np.prod(c0, axis=1)

        def rest(skip):
            keep = [k for k in range(d) if k not in skip]
            return np.prod(c0[:, keep], axis=1) if keep else np.ones(len(pts))

        if order == 1:
            return np.stack([s1[:, j] * rest({j}) for j in range(d)], axis=-1)
        out = np.empty((len(pts), d, d))
        for i in range(d):
            out[:, i, i] = c2[:, i] * rest({i})
            for j in range(i + 1, d):
                out[:, i, j] = out[:, j, i] = s1[:, i] * s1[:, j] * rest({i, j})
        return out

    def xi(self, u) -> np.ndarray:
        return self._kernel(u, 1, 0)

    def zeta(self, u) -> np.ndarray:
        return self._kernel(u, 2, 0)

    def xi_gradient(self, u) -> np.ndarray:
        return self._kernel(u, 1, 1)

    def zeta_gradient(self, u) -> np.ndarray:
        return self._kernel(u, 2, 1)

    def xi_hessian(self, u) -> np.ndarray:
        return self._kernel(u, 1, 2)

    def zeta_hessian(self, u) -> np.ndarray:
        return self._kernel(u, 2, 2)

    def zeta_matrix(self, locations) -> np.ndarray:
        t = _as_points(locations, self.dim)
        diff = (t[:, None, :] - t[None, :, :]).reshape(-1, self.dim)
        q = self.zeta(diff).reshape(len(t), len(t))
        return 0.5 * (q + q.T)


def _scalar_or_array(values: np.ndarray, t, dim: int):
    arr = np.asarray(t)
    single = arr.ndim == 0 or (arr.ndim == 1 and arr.shape[0] == dim)
    if single:
        return float(values[0]) if values.ndim == 1 else values[0]
    return values


def _lag_cover(evaluator: CorrelationEvaluator, u) -> CorrelationEvaluator:
    pts = _as_points(u, evaluator.dim)
    return evaluator.covering(float(np.max(np.abs(pts)))) if len(pts) else evaluator


def xi(evaluator: CorrelationEvaluator, u):
    return _scalar_or_array(_lag_cover(evaluator, u).xi(u), u, evaluator.dim)


def zeta(evaluator: CorrelationEvaluator, u):
    return _scalar_or_array(_lag_cover(evaluator, u).zeta(u), u, evaluator.dim)


def xi_gradient(evaluator: CorrelationEvaluator, u):
    return _scalar_or_array(_lag_cover(evaluator, u).xi_gradient(u), u, evaluator.dim)


def zeta_gradient(evaluator: CorrelationEvaluator, u):
    return _scalar_or_array(_lag_cover(evaluator, u).zeta_gradient(u), u, evaluator.dim)


class Observation:
    """The data side ``L f`` of the fidelity, as a weighted kernel sum.

    The empirical version has centers ``X_k``, weights ``1/n`` and kernel
    ``xi``. The exact-moment (population) version replaces the sample by a
    truth measure: centers ``t_j^0``, weights ``a_j^0`` and kernel ``zeta``.
    """

    def __init__(self, evaluator: CorrelationEvaluator, centers, weights, power: int):
        centers = _as_points(centers, evaluator.dim) if len(np.atleast_1d(weights)) else np.zeros((0, evaluator.dim))
        if len(centers) == 0:
            raise EmptyInputError("observation needs at least one point")
        self.evaluator = evaluator
        self.centers = centers
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.power = int(power)
        self.spectrum = evaluator.spectrum(self.centers, self.weights)
        self.field = SpectralField(
            evaluator.nodes_1d, evaluator.weights * evaluator.sigma**self.power * self.spectrum
        )
        self._const = None

    @classmethod
    def empirical(cls, evaluator: CorrelationEvaluator, sample: Sample) -> "Observation":
        if sample.n == 0:
            raise EmptyInputError("empty sample")
        if sample.dim != evaluator.dim:
            raise DimensionMismatchError("sample dimension differs from evaluator")
        return cls(evaluator, sample.points, np.full(sample.n, 1.0 / sample.n), 1)

    @classmethod
    def population(cls, evaluator: CorrelationEvaluator, truth: DiscreteMeasure) -> "Observation":
        if len(truth) == 0:
            raise EmptyInputError("empty truth measure")
        if truth.dim != evaluator.dim:
            raise DimensionMismatchError("truth dimension differs from evaluator")
        return cls(evaluator, truth.locations, truth.weights, 2)

    def with_evaluator(self, evaluator: CorrelationEvaluator) -> "Observation":
        if evaluator is self.evaluator:
            return self
        return Observation(evaluator, self.centers, self.weights, self.power)

    @property
    def dim(self) -> int:
        return self.evaluator.dim

    @property
    def const_term(self) -> float:
        """``1/2 ||L f||^2`` (for a sample this is ``(1/2n^2) sum_kl lambda(X_k - X_l)``)."""
        if self._const is None:
            ev = self.evaluator
            dens = ev.weights * ev.sigma ** (2 * (self.power - 1))
            self._const = 0.5 * float(np.sum(dens * np.abs(self.spectrum) ** 2))
        return self._const

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.centers.min(axis=0), self.centers.max(axis=0)

    def values(self, t) -> np.ndarray:
        return self.field.values(t)

    def gradients(self, t) -> np.ndarray:
        return self.field.gradients(t)

    def hessians(self, t) -> np.ndarray:
        return self.field.hessians(t)

    def dual_field(self, locations, amplitudes, kappa: float) -> SpectralField:
        """The dual function of the measure ``sum a_i delta_{t_i}`` as a field."""
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        amps = np.asarray(amplitudes, dtype=float).reshape(-1)
        model = self.evaluator.field(locations, amps, 2) if len(amps) else None
        res = self.field if model is None else self.field - model
        return res.scaled(1.0 / kappa)


def as_observation(evaluator: CorrelationEvaluator, data) -> Observation:
    if isinstance(data, Observation):
        return data.with_evaluator(evaluator)
    if isinstance(data, Sample):
        return Observation.empirical(evaluator, data)
    if isinstance(data, DiscreteMeasure):
        return Observation.population(evaluator, data)
    raise TypeError(f"cannot build an observation from {type(data).__name__}")


def fitted_observation(evaluator: CorrelationEvaluator, data, *points, pad: float = 0.0) -> Observation:
    """Observation whose quadrature resolves every lag between the data centers
    and the given point sets (each box side widened by ``pad``)."""
    obs = as_observation(evaluator, data) if not isinstance(data, Observation) else data
    base = obs.evaluator if obs.evaluator.n_nodes >= evaluator.n_nodes else evaluator
    sets = [obs.centers] + [_as_points(p, base.dim) for p in points if np.size(p)]
    allp = np.vstack(sets)
    lag = float(np.max(np.ptp(allp, axis=0))) + 2.0 * pad
    return obs.with_evaluator(base.covering(lag))


@dataclass(frozen=True)
class FidelityCache:
    """Linear and quadratic coefficients of the fidelity on a fixed support."""

    support: np.ndarray
    b: np.ndarray
    Q: np.ndarray
    const_term: float
    observation: Observation

    @property
    def size(self) -> int:
        return len(self.b)

    def extended(self, location) -> "FidelityCache":
        """Cache for the support with one more point appended."""
        obs = self.observation
        t_new = _as_points(location, obs.evaluator.dim)
        lo = np.minimum(obs.centers.min(axis=0), t_new.min(axis=0))
        hi = np.maximum(obs.centers.max(axis=0), t_new.max(axis=0))
        if self.size:
            lo = np.minimum(lo, self.support.min(axis=0))
            hi = np.maximum(hi, self.support.max(axis=0))
        if obs.evaluator.covering(float(np.max(hi - lo))) is not obs.evaluator:
            return build_cache(obs.evaluator, np.vstack([self.support, t_new]), obs)
        ev = obs.evaluator
        b_new = -obs.values(t_new)
        col = ev.zeta(self.support - t_new) if self.size else np.zeros(0)
        z0 = ev.zeta(np.zeros((1, ev.dim)))
        n = self.size
        q = np.empty((n + 1, n + 1))
        q[:n, :n] = self.Q
        q[n, :n] = q[:n, n] = col
        q[n, n] = z0[0]
        return FidelityCache(
            np.vstack([self.support, t_new]), np.concatenate([self.b, b_new]), q, self.const_term, obs
        )


def build_cache(evaluator: CorrelationEvaluator, support, data) -> FidelityCache:
    """Coefficients ``b_i = -Lf(t_i)``, ``Q_ij = zeta(t_i - t_j)`` and ``1/2 ||Lf||^2``.

    ``data`` is a :class:`Sample` (empirical), a truth :class:`DiscreteMeasure`
    (exact-moment mode) or a prebuilt :class:`Observation`.
    """
    t = _as_points(support, evaluator.dim) if np.size(support) else np.zeros((0, evaluator.dim))
    if len(t) == 0:
        raise EmptyInputError("empty support")
    obs = fitted_observation(evaluator, data, t)
    b = -obs.values(t)
    q = obs.evaluator.zeta_matrix(t)
    return FidelityCache(t, b, q, obs.const_term, obs)


def objective(cache: FidelityCache, a) -> float:
    """``const + a.b + 1/2 a'Qa``, the squared RKHS distance to the data."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if len(a) != cache.size:
        raise DimensionMismatchError(f"expected {cache.size} amplitudes, got {len(a)}")
    return float(cache.const_term + a @ cache.b + 0.5 * a @ cache.Q @ a)


def _measure_parts(measure: DiscreteMeasure, dim: int):
    if len(measure) == 0:
        return np.zeros((0, dim)), np.zeros(0)
    if measure.dim != dim:
        raise DimensionMismatchError("measure dimension differs from evaluator")
    return measure.locations, measure.weights


def eta(evaluator: CorrelationEvaluator, measure: DiscreteMeasure, data, kappa: float, t):
    """Dual function ``(1/kappa) [Lf - sum_i a_i zeta(. - t_i)]`` at ``t``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    locs, amps = _measure_parts(measure, evaluator.dim)
    obs = fitted_observation(evaluator, data, locs, t)
    return _scalar_or_array(obs.dual_field(locs, amps, kappa).values(t), t, evaluator.dim)


def eta_gradient(evaluator: CorrelationEvaluator, measure: DiscreteMeasure, data, kappa: float, t):
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    locs, amps = _measure_parts(measure, evaluator.dim)
    obs = fitted_observation(evaluator, data, locs, t)
    return _scalar_or_array(obs.dual_field(locs, amps, kappa).gradients(t), t, evaluator.dim)


def data_extent(data, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box of the data centers."""
    if isinstance(data, Observation):
        return data.bounding_box()
    if isinstance(data, Sample):
        return data.bounding_box()
    if isinstance(data, DiscreteMeasure):
        return data.locations.min(axis=0), data.locations.max(axis=0)
    raise TypeError(f"unsupported data type {type(data).__name__}")


__all__ = [
    "CorrelationEvaluator",
    "FidelityCache",
    "Observation",
    "SpectralField",
    "as_observation",
    "build_cache",
    "eta",
    "eta_gradient",
    "fitted_observation",
    "objective",
    "required_nodes",
    "sinc",
    "xi",
    "xi_gradient",
    "zeta",
    "zeta_gradient",
]
