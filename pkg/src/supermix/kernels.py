"""Mixing densities with their spectral densities, and the sinc fidelity kernel.

Fourier convention: ``sigma(w) = integral exp(-i <x, w>) phi(x) dx`` so that
``sigma(0) = 1`` for every density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DimensionMismatchError, UndefinedGradientError

FAMILIES = (
    "gaussian",
    "tensor-laplace",
    "multivariate-laplace",
    "tensor-cauchy",
    "multivariate-cauchy",
    "supersmooth",
    "identity",
)


def _check_dim(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 and dim == 1:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise DimensionMismatchError(f"expected trailing dimension {dim}, got {arr.shape}")
    return arr


def _box_muller(gen: np.random.Generator, shape) -> np.ndarray:
    size = int(np.prod(shape))
    half = (size + 1) // 2
    u1 = 1.0 - gen.random(half)  # (0, 1]
    u2 = gen.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
    return z[:size].reshape(shape)


def _symmetric_stable(gen: np.random.Generator, shape, index: float) -> np.ndarray:
    """Chambers-Mallows-Stuck draw with characteristic function exp(-|t|^index)."""
    v = np.pi * (gen.random(shape) - 0.5)
    if index == 1.0:
        return np.tan(v)
    w = -np.log(1.0 - gen.random(shape))
    return (
        np.sin(index * v)
        / np.cos(v) ** (1.0 / index)
        * (np.cos(v - index * v) / w) ** ((1.0 - index) / index)
    )


@dataclass(frozen=True)
class MixingKernelSpec:
    """The known noise density ``phi`` of the location mixture.

    ``alpha`` is the scale/dispersion parameter of the Cauchy families and the
    rate of the general super-smooth family ``sigma(t) = exp(-alpha ||t||_j^beta)``.
    """

    family: str
    dim: int
    alpha: float = 1.0
    beta: float = 2.0
    j: int = 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.family == "supersmooth" and (self.beta <= 0 or self.j < 1):
            raise ValueError("supersmooth needs beta > 0 and integer j >= 1")

    # presets -------------------------------------------------------------

    @classmethod
    def gaussian(cls, dim: int = 1):
        return cls("gaussian", dim)

    @classmethod
    def tensor_laplace(cls, dim: int = 1):
        return cls("tensor-laplace", dim)

    @classmethod
    def multivariate_laplace(cls, dim: int = 1):
        return cls("multivariate-laplace", dim)

    @classmethod
    def tensor_cauchy(cls, dim: int = 1, alpha: float = 1.0):
        return cls("tensor-cauchy", dim, alpha=alpha)

    @classmethod
    def multivariate_cauchy(cls, dim: int = 1, alpha: float = 1.0):
        return cls("multivariate-cauchy", dim, alpha=alpha)

    @classmethod
    def supersmooth(cls, dim: int, alpha: float, beta: float, j: int):
        return cls("supersmooth", dim, alpha=alpha, beta=beta, j=j)

    @classmethod
    def identity(cls, dim: int = 1):
        """Degenerate noise-free kernel (phi = Dirac, sigma = 1); for testing."""
        return cls("identity", dim)

    # json ------------------------------------------------------------------

    def to_json_dict(self) -> dict:
        params = {}
        if self.family in ("tensor-cauchy", "multivariate-cauchy"):
            params = {"alpha": self.alpha}
        elif self.family == "supersmooth":
            params = {"alpha": self.alpha, "beta": self.beta, "j": self.j}
        return {"family": self.family, "dim": self.dim, "params": params}

    @classmethod
    def from_json_dict(cls, data: dict) -> "MixingKernelSpec":
        params = dict(data.get("params") or {})
        return cls(data["family"], int(data["dim"]), **params)

    # spectral side -----------------------------------------------------------

    @property
    def separable(self) -> bool:
        """True when sigma factorises over coordinates."""
        if self.dim == 1:
            return True
        if self.family in ("multivariate-laplace", "multivariate-cauchy"):
            return False
        if self.family == "supersmooth":
            return self.beta == self.j
        return True

    def spectral_1d(self, w: np.ndarray) -> np.ndarray:
        """Per-coordinate factor of sigma for separable families."""
        if not self.separable:
            raise ValueError(f"{self.family} is not separable in dimension {self.dim}")
        w = np.asarray(w, dtype=float)
        fam = self.family
        if fam == "gaussian":
            return np.exp(-0.5 * w * w)
        if fam == "tensor-laplace":
            return 1.0 / (1.0 + w * w)
        if fam == "multivariate-laplace":
            return 2.0 / (2.0 + w * w)
        if fam == "tensor-cauchy":
            return np.exp(-self.alpha * np.abs(w))
        if fam == "multivariate-cauchy":
            return np.exp(-math.sqrt(self.alpha) * np.abs(w))
        if fam == "supersmooth":
            return np.exp(-self.alpha * np.abs(w) ** self.beta)
        return np.ones_like(w)

    def spectral(self, omega) -> np.ndarray:
        w = _check_dim(omega, self.dim)
        fam = self.family
        if fam == "multivariate-laplace":
            return 2.0 / (2.0 + np.sum(w * w, axis=-1))
        if fam == "multivariate-cauchy":
            return np.exp(-math.sqrt(self.alpha) * np.sqrt(np.sum(w * w, axis=-1)))
        if fam == "supersmooth":
            norm = np.sum(np.abs(w) ** self.j, axis=-1) ** (1.0 / self.j)
            return np.exp(-self.alpha * norm**self.beta)
        return np.prod(self.spectral_1d(w), axis=-1)

    def spectral_min_on_box(self, half_width: float, grid_points: int = 65) -> float:
        """``inf sigma`` over the cube ``||t||_inf <= half_width``.

        All implemented families decrease in each |t_j|, so the infimum sits at a
        corner; a grid scan double-checks for small dimensions.
        """
        corner = self.spectral(np.full(self.dim, float(half_width)))
        if self.dim <= 2:
            axis = np.linspace(-half_width, half_width, grid_points)
            mesh = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1)
            return float(min(corner, self.spectral(mesh).min()))
        return float(corner)

    # spatial side -----------------------------------------------------------

    def density(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        d = self.dim
        fam = self.family
        if fam == "gaussian":
            return (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * np.sum(x * x, axis=-1))
        if fam == "tensor-laplace":
            return 0.5**d * np.exp(-np.sum(np.abs(x), axis=-1))
        if fam == "tensor-cauchy":
            a = self.alpha
            return np.prod(a / (np.pi * (x * x + a * a)), axis=-1)
        if fam == "multivariate-cauchy":
            s = math.sqrt(self.alpha)
            r2 = np.sum(x * x, axis=-1)
            const = special.gamma((d + 1) / 2) / np.pi ** ((d + 1) / 2)
            return const * s / (s * s + r2) ** ((d + 1) / 2)
        if fam == "multivariate-laplace":
            return self._mv_laplace_density(x)
        if fam == "supersmooth":
            if not self.separable:
                raise NotImplementedError("non-separable supersmooth density in d > 1")
            return np.prod(self._supersmooth_1d(x, derivative=False), axis=-1)
        raise NotImplementedError("the identity kernel has no density")

    def _mv_laplace_density(self, x: np.ndarray) -> np.ndarray:
        d = self.dim
        v = 1.0 - d / 2.0
        r = np.sqrt(np.sum(x * x, axis=-1))
        z = math.sqrt(2.0) * r
        const = 2.0 / (2 * np.pi) ** (d / 2) * 2.0 ** (-v)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = const * z**v * special.kv(v, z)
        at_zero = 1.0 / math.sqrt(2.0) if d == 1 else np.inf
        return np.where(r == 0, at_zero, val)

    def _supersmooth_1d(self, x: np.ndarray, derivative: bool) -> np.ndarray:
        def sigma(w):
            return math.exp(-self.alpha * w**self.beta)

        out = np.empty(x.shape)
        for idx, xv in np.ndenumerate(x):
            if derivative:
                if xv == 0:
                    out[idx] = 0.0
                    continue
                val, _ = integrate.quad(lambda w: w * sigma(w), 0, np.inf, weight="sin", wvar=abs(xv))
                out[idx] = -np.sign(xv) * val / np.pi
            elif xv == 0:
                out[idx] = integrate.quad(sigma, 0, np.inf)[0] / np.pi
            else:
                out[idx] = integrate.quad(sigma, 0, np.inf, weight="cos", wvar=abs(xv))[0] / np.pi
        return out

    def gradient(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        d = self.dim
        fam = self.family
        if fam == "gaussian":
            return -x * self.density(x)[..., None]
        if fam == "tensor-laplace":
            if np.any(x == 0):
                raise UndefinedGradientError("tensor-laplace density has a kink at zero coordinates")
            return -np.sign(x) * self.density(x)[..., None]
        if fam == "tensor-cauchy":
            a = self.alpha
            return -2 * x / (x * x + a * a) * self.density(x)[..., None]
        if fam == "multivariate-cauchy":
            s2 = self.alpha
            r2 = np.sum(x * x, axis=-1, keepdims=True)
            return -(d + 1) * x / (s2 + r2) * self.density(x)[..., None]
        if fam == "multivariate-laplace":
            r = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
            if np.any(r == 0):
                raise UndefinedGradientError("multivariate-laplace density is not differentiable at 0")
            v = 1.0 - d / 2.0
            z = math.sqrt(2.0) * r
            const = 2.0 / (2 * np.pi) ** (d / 2) * 2.0 ** (-v)
            dfdr = -math.sqrt(2.0) * const * z**v * special.kv(v - 1.0, z)
            return dfdr * x / r
        if fam == "supersmooth":
            if not self.separable:
                raise NotImplementedError("non-separable supersmooth density in d > 1")
            vals = self._supersmooth_1d(x, derivative=False)
            ders = self._supersmooth_1d(x, derivative=True)
            out = np.empty(x.shape)
            for jj in range(d):
                others = np.prod(np.delete(vals, jj, axis=-1), axis=-1)
                out[..., jj] = ders[..., jj] * others
            return out
        raise NotImplementedError("the identity kernel has no density")

    def spread(self) -> float:
        """Per-coordinate noise scale used to pad search boxes."""
        fam = self.family
        if fam == "gaussian":
            return 1.0
        if fam == "tensor-laplace":
            return math.sqrt(2.0)
        if fam == "multivariate-laplace":
            return 1.0
        if fam == "tensor-cauchy":
            return self.alpha
        if fam == "multivariate-cauchy":
            return math.sqrt(self.alpha)
        if fam == "supersmooth":
            if self.beta == 2:
                return math.sqrt(2 * self.alpha)
            return self.alpha ** (1.0 / self.beta)
        return 0.0

    def draw_noise(self, gen: np.random.Generator, n: int) -> np.ndarray:
        d = self.dim
        fam = self.family
        shape = (n, d)
        if fam == "gaussian":
            return _box_muller(gen, shape)
        if fam == "tensor-laplace":
            u = gen.random(shape) - 0.5
            return -np.sign(u) * np.log1p(-2.0 * np.abs(u))
        if fam == "tensor-cauchy":
            return self.alpha * np.tan(np.pi * (gen.random(shape) - 0.5))
        if fam == "multivariate-cauchy":
            z = _box_muller(gen, (n, d + 1))
            return math.sqrt(self.alpha) * z[:, :d] / np.abs(z[:, d:])
        if fam == "multivariate-laplace":
            z = _box_muller(gen, shape)
            w = -np.log(1.0 - gen.random((n, 1)))
            return np.sqrt(w) * z
        if fam == "supersmooth":
            if not self.separable or self.beta > 2:
                raise NotImplementedError("sampling needs beta == j <= 2")
            if self.beta == 2:
                return math.sqrt(2 * self.alpha) * _box_muller(gen, shape)
            return self.alpha ** (1.0 / self.beta) * _symmetric_stable(gen, shape, self.beta)
        return np.zeros(shape)


def sinc(x) -> np.ndarray:
    """Unnormalised cardinal sine ``sin(x)/x``."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


@dataclass(frozen=True)
class FidelitySpec:
    """Band-limited sinc fidelity kernel with frequency cutoff ``1/tau``.

    The spectral measure has density ``2^-d`` on ``[-1/tau, 1/tau]^d`` so the
    kernel is its inverse transform ``tau^-d prod_j sin(x_j/tau)/(x_j/tau)``.
    """

    tau: float
    dim: int = 1
    quad_points_per_dim: int = 64

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.quad_points_per_dim < 8:
            raise ValueError("quad_points_per_dim must be at least 8")

    @classmethod
    def from_bandwidth(cls, m: float, dim: int = 1, quad_points_per_dim: int = 64):
        return cls(1.0 / (4.0 * m), dim, quad_points_per_dim)

    @property
    def cutoff(self) -> float:
        return 1.0 / self.tau

    @property
    def bandwidth(self) -> float:
        """The certificate bandwidth m matched by ``1/tau = 4m``."""
        return 1.0 / (4.0 * self.tau)

    @property
    def spectral_level(self) -> float:
        return 0.5**self.dim

    def spectral_density(self, omega) -> np.ndarray:
        w = _check_dim(omega, self.dim)
        inside = np.all(np.abs(w) <= self.cutoff, axis=-1)
        return np.where(inside, self.spectral_level, 0.0)

    def kernel(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return self.tau ** (-self.dim) * np.prod(sinc(x / self.tau), axis=-1)

    def to_json_dict(self) -> dict:
        return {"tau": self.tau, "dim": self.dim, "quad_points_per_dim": self.quad_points_per_dim}


def mixing_density(spec: MixingKernelSpec, x) -> np.ndarray:
    return spec.density(x)


def spectral_density(spec: MixingKernelSpec, omega) -> np.ndarray:
    return spec.spectral(omega)


def mixing_gradient(spec: MixingKernelSpec, x) -> np.ndarray:
    return spec.gradient(x)


def fidelity_kernel(spec: FidelitySpec, x) -> np.ndarray:
    return spec.kernel(x)
