"""Interpolating dual certificates built from the sinc^4 kernel.

``psi_m(x) = prod_j g(m x_j)^4`` with ``g(x) = sin(x)/x``. A certificate is
``p(t) = sum_k alpha_k psi_m(t - t_k) + <beta_k, grad psi_m(t - t_k)>`` with
``p(t_k) = target_k`` and ``grad p(t_k) = 0``; the reported certificate is
``P = p^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .errors import BandMismatchError, DimensionMismatchError, EmptyInputError, IllConditionedCertificateError
from .kernels import FidelitySpec, MixingKernelSpec

# largest condition number accepted for the interpolation system
MAX_CONDITION = 1e12
# below this |x| sinc derivatives come from the Taylor series
TAYLOR_RADIUS = 1.0
_TAYLOR_TERMS = 12


def sinc_derivatives(x, order: int = 2) -> np.ndarray:
    """``g, g', ..., g^(order)`` of ``g(x) = sin(x)/x`` stacked on the first axis.

    Uses the series near zero and the recurrence ``x g^(n) = sin^(n) - n g^(n-1)``
    elsewhere.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((order + 1,) + x.shape)
    small = np.abs(x) < TAYLOR_RADIUS
    xs = np.where(small, x, 0.0)
    # series: g(x) = sum_k (-1)^k x^(2k) / (2k+1)!
    for n in range(order + 1):
        acc = np.zeros_like(xs)
        for k in range(_TAYLOR_TERMS):
            p = 2 * k
            if p < n:
                continue
            coef = (-1) ** k / math.factorial(p + 1) * math.factorial(p) / math.factorial(p - n)
            acc = acc + coef * xs ** (p - n)
        out[n] = acc
    xl = np.where(small, 1.0, x)
    prev = np.sin(xl) / xl
    large = [prev]
    for n in range(1, order + 1):
        sin_n = np.sin(xl + n * np.pi / 2)
        prev = (sin_n - n * prev) / xl
        large.append(prev)
    for n in range(order + 1):
        out[n] = np.where(small, out[n], large[n])
    return out


def _h_derivatives(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g, g1, g2 = sinc_derivatives(x, 2)
    h = g**4
    h1 = 4 * g**3 * g1
    h2 = 4 * (3 * g**2 * g1**2 + g**3 * g2)
    return h, h1, h2


@dataclass(frozen=True)
class PsiEvaluator:
    """The localized kernel ``psi_m`` with its gradient and Hessian."""

    m: float
    dim: int = 1

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("bandwidth m must be positive")

    def evaluate(self, x):
        """Values ``(P,)``, gradients ``(P, d)`` and Hessians ``(P, d, d)`` at points ``(P, d)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(f"expected trailing dimension {self.dim}")
        pts = x.reshape(-1, self.dim)
        m, d = self.m, self.dim
        h, h1, h2 = _h_derivatives(m * pts)
        h1 = m * h1
        h2 = m * m * h2

        def rest(skip):
            keep = [k for k in range(d) if k not in skip]
            return np.prod(h[:, keep], axis=1) if keep else np.ones(len(pts))

        val = np.prod(h, axis=1)
        grad = np.empty_like(pts)
        hess = np.empty((len(pts), d, d))
        for i in range(d):
            grad[:, i] = h1[:, i] * rest({i})
            hess[:, i, i] = h2[:, i] * rest({i})
            for j in range(i + 1, d):
                hess[:, i, j] = hess[:, j, i] = h1[:, i] * h1[:, j] * rest({i, j})
        lead = x.shape[:-1]
        return val.reshape(lead), grad.reshape(lead + (d,)), hess.reshape(lead + (d, d))


def psi_value_grad_hess(ev: PsiEvaluator, x):
    val, grad, hess = ev.evaluate(np.atleast_1d(np.asarray(x, dtype=float)))
    return float(val), grad, hess


@dataclass(frozen=True)
class Certificate:
    """Solved interpolation coefficients on a fixed support.

    ``kind`` is ``"P"`` (all targets one) or ``"Q"`` with ``index`` selecting
    the single target equal to one.
    """

    m: float
    support: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    kind: str = "P"
    index: int | None = None
    condition_number: float = 1.0

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def targets(self) -> np.ndarray:
        if self.kind == "P":
            return np.ones(len(self.support))
        t = np.zeros(len(self.support))
        t[self.index] = 1.0
        return t

    def _points(self, t) -> np.ndarray:
        arr = np.asarray(t, dtype=float)
        if arr.ndim == 0 or (arr.ndim == 1 and self.dim == 1 and arr.shape[0] != 1):
            arr = arr.reshape(-1, 1)
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.dim:
            raise DimensionMismatchError(f"expected points of dimension {self.dim}")
        return arr

    def p_and_gradient(self, t) -> tuple[np.ndarray, np.ndarray]:
        pts = self._points(t)
        ev = PsiEvaluator(self.m, self.dim)
        p = np.zeros(len(pts))
        grad = np.zeros_like(pts)
        for s in range(0, len(pts), 8192):
            block = pts[s : s + 8192]
            diff = block[:, None, :] - self.support[None, :, :]
            val, g, h = ev.evaluate(diff)
            p[s : s + 8192] = val @ self.alpha + np.einsum("pkv,kv->p", g, self.beta)
            grad[s : s + 8192] = np.einsum("pku,k->pu", g, self.alpha) + np.einsum("pkuv,kv->pu", h, self.beta)
        return p, grad

    def p_value(self, t) -> np.ndarray:
        return self.p_and_gradient(t)[0]

    def value(self, t) -> np.ndarray:
        """``P(t) = p(t)^2``."""
        return self.p_value(t) ** 2

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "kind": self.kind,
            "index": self.index,
            "support": self.support.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "condition_number": self.condition_number,
        }


def admissible_bandwidth(K: int, d: int, delta: float, c: float = 1.0) -> float:
    """Smallest bandwidth for which the certificate theory applies (up to ``c``)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return c * math.sqrt(K) * d**1.5 / min(delta, 1.0)


def build_certificate(support, m: float, kind: str = "P", index: int | None = None) -> Certificate:
    """Solve the interpolation system for ``p(t_i) = target_i`` and ``grad p(t_i) = 0``.

    The gradient rows are negated so the system matrix is symmetric.
    """
    t = np.asarray(support, dtype=float)
    if t.ndim == 1:
        t = t.reshape(-1, 1)
    if len(t) == 0:
        raise EmptyInputError("certificate needs at least one support point")
    K, d = t.shape
    if kind not in ("P", "Q"):
        raise ValueError("kind must be 'P' or 'Q'")
    if kind == "Q" and (index is None or not 0 <= index < K):
        raise ValueError("kind 'Q' needs an index into the support")
    if K > 1:
        delta = min(
            np.linalg.norm(t[i] - t[j]) for i in range(K) for j in range(i + 1, K)
        )
        if m < admissible_bandwidth(K, d, delta):
            warnings.warn("bandwidth below the admissibility threshold", RuntimeWarning, stacklevel=2)
    ev = PsiEvaluator(m, d)
    val, grad, hess = ev.evaluate(t[:, None, :] - t[None, :, :])
    n = K * (d + 1)
    mat = np.empty((n, n))
    mat[:K, :K] = val
    mat[:K, K:] = grad.reshape(K, K * d)
    mat[K:, :K] = -grad.transpose(0, 2, 1).reshape(K * d, K)
    mat[K:, K:] = -hess.transpose(0, 2, 1, 3).reshape(K * d, K * d)
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedCertificateError(f"interpolation system condition number {cond:.3g}", cond)
    rhs = np.zeros(n)
    if kind == "P":
        rhs[:K] = 1.0
    else:
        rhs[index] = 1.0
    sol = scipy.linalg.solve(0.5 * (mat + mat.T), rhs, assume_a="sym")
    return Certificate(float(m), t.copy(), sol[:K], sol[K:].reshape(K, d), kind, index, cond)


def certificate_value(cert: Certificate, t):
    vals = cert.value(t)
    arr = np.asarray(t)
    if arr.ndim == 0 or (arr.ndim == 1 and arr.shape[0] == cert.dim):
        return float(vals[0])
    return vals


@dataclass
class AuditReport:
    value_residual: float
    gradient_residual: float
    grid_max: float
    near_decay: float
    far_gap: float
    epsilon: float
    grid_points: int
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = asdict(self)
        for k, v in list(out.items()):
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = str(v)
        return out


def _grid_axes(cert: Certificate, grid_spec) -> list[np.ndarray]:
    if grid_spec is None:
        grid_spec = {}
    if isinstance(grid_spec, dict):
        pad = grid_spec.get("pad", 3.0 / cert.m + 1.0)
        points = grid_spec.get("points", 2001 if cert.dim == 1 else 201)
        lo = grid_spec.get("low", cert.support.min(axis=0) - pad)
        hi = grid_spec.get("high", cert.support.max(axis=0) + pad)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (cert.dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (cert.dim,))
        return [np.linspace(lo[j], hi[j], points) for j in range(cert.dim)]
    return [np.asarray(a, dtype=float) for a in grid_spec]


def audit_certificate(cert: Certificate, grid_spec=None, epsilon: float | None = None) -> AuditReport:
    """Empirical checks of the interpolation, boundedness and decay properties.

    ``grid_spec`` is a dict with optional ``low``, ``high``, ``points`` (per
    dimension) or ``pad``, or an explicit list of per-dimension axes.
    """
    d = cert.dim
    eps = 1.0 / (cert.m * d) if epsilon is None else float(epsilon)
    p_sup, g_sup = cert.p_and_gradient(cert.support)
    value_res = float(np.max(np.abs(p_sup - cert.targets)))
    grad_res = float(np.max(np.abs(g_sup)))
    axes = _grid_axes(cert, grid_spec)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    P = cert.value(mesh)
    dist = np.sqrt(((mesh[:, None, :] - cert.support[None, :, :]) ** 2).sum(axis=-1))
    nearest = dist.min(axis=1)
    near = nearest <= eps
    inner = near & (nearest > 0)
    if np.any(inner):
        decay = float(np.min((1.0 - P[inner]) / (cert.m**2 * nearest[inner] ** 2)))
    else:
        decay = float("nan")
    far_gap = float(np.min(1.0 - P[~near])) if np.any(~near) else float("nan")
    return AuditReport(value_res, grad_res, float(P.max()), decay, far_gap, eps, int(len(mesh)))


def _composite_gauss(lo: float, hi: float, panel: float, order: int = 16):
    n_panels = max(1, math.ceil((hi - lo) / panel))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights


def _tensor_integral(cert: Certificate, func, margin: float | None, panels_per_unit: float):
    d = cert.dim
    margin = 40.0 * d / cert.m if margin is None else margin
    rules = [
        _composite_gauss(
            cert.support[:, j].min() - margin, cert.support[:, j].max() + margin, 1.0 / (panels_per_unit * cert.m)
        )
        for j in range(d)
    ]
    if d == 1:
        nodes, weights = rules[0]
        return float(np.sum(weights * func(nodes.reshape(-1, 1))))
    total = 0.0
    # integrate slice by slice over the first axis to bound memory
    rest_axes = np.meshgrid(*[r[0] for r in rules[1:]], indexing="ij")
    rest_w = np.ones(rest_axes[0].shape)
    for g in np.meshgrid(*[r[1] for r in rules[1:]], indexing="ij"):
        rest_w = rest_w * g
    rest_pts = np.stack([a.reshape(-1) for a in rest_axes], axis=-1)
    rest_w = rest_w.reshape(-1)
    for x0, w0 in zip(*rules[0]):
        pts = np.column_stack([np.full(len(rest_pts), x0), rest_pts])
        total += w0 * float(np.sum(rest_w * func(pts)))
    return total


def certificate_l2_norm(cert: Certificate, quad_spec: dict | None = None) -> float:
    """``||P||_2`` by composite Gauss-Legendre over a wide box around the support."""
    spec = quad_spec or {}
    integral = _tensor_integral(
        cert, lambda pts: cert.value(pts) ** 2, spec.get("margin"), spec.get("panels_per_unit", 1.0)
    )
    return math.sqrt(max(integral, 0.0))


def spectral_floor(mixing: MixingKernelSpec, m: float) -> float:
    """``inf sigma`` over the cube ``||t||_inf <= 4m``."""
    return mixing.spectral_min_on_box(4.0 * m)


def c0m_norm_bound(cert: Certificate, mixing: MixingKernelSpec, fidelity: FidelitySpec, l2_norm: float | None = None) -> float:
    """Upper bound ``||P||_2 / sqrt(inf sigma^2 F[lambda])`` on the source-condition norm."""
    if fidelity.cutoff < 4.0 * cert.m * (1 - 1e-12):
        raise BandMismatchError(f"cutoff 1/tau = {fidelity.cutoff} is below 4m = {4 * cert.m}")
    if mixing.dim != cert.dim or fidelity.dim != cert.dim:
        raise DimensionMismatchError("kernel and certificate dimensions differ")
    norm = certificate_l2_norm(cert) if l2_norm is None else l2_norm
    floor = spectral_floor(mixing, cert.m)
    return norm / math.sqrt(floor**2 * fidelity.spectral_level)
