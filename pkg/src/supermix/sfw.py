"""Sliding Frank-Wolfe for the sparse deconvolution program

    min_mu  1/2 ||L f - L Phi mu||^2 + kappa ||mu||_1

over discrete measures. Each iteration adds the maximizer of the dual
function, re-fits amplitudes by a LASSO, then lets amplitudes and locations
slide jointly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fidelity import (
    CorrelationEvaluator,
    FidelityCache,
    Observation,
    SpectralField,
    as_observation,
    build_cache,
    fitted_observation,
    objective,
)
from .measures import DiscreteMeasure


@dataclass
class SfwConfig:
    kappa: float
    max_iters: int = 100
    dual_tol: float = 1e-3
    grid_points_per_dim: int = 512
    search_box: tuple | None = None
    lasso_max_iters: int = 20000
    lasso_tol: float = 1e-13
    slide_max_iters: int = 200
    slide_tol: float = 1e-10
    prune_threshold: float = 1e-10
    nonnegative: bool = False
    # Newton refinement of the sliding step with amplitude signs held fixed
    polish: bool = True
    polish_max_iters: int = 50
    ascent_starts: int = 5
    # total grid size cap for the spike search in dimension >= 2
    max_grid_points: int = 2**18

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.dual_tol > 0:
            raise ValueError("dual_tol must be positive")
        if self.search_box is not None:
            lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in self.search_box)
            if np.any(hi <= lo):
                raise ValueError("search_box must be nonempty")

    def to_json_dict(self) -> dict:
        out = asdict(self)
        if self.search_box is not None:
            out["search_box"] = [np.atleast_1d(np.asarray(v, dtype=float)).tolist() for v in self.search_box]
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "SfwConfig":
        return cls(**data)


@dataclass
class SolveResult:
    estimate: DiscreteMeasure
    iterations: int
    converged: bool
    dual_sup: float
    objective_trace: list = field(default_factory=list)
    support_trace: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_json_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "dual_sup": self.dual_sup,
            "objective_trace": list(map(float, self.objective_trace)),
            "support_trace": list(map(int, self.support_trace)),
        }


def default_search_box(evaluator: CorrelationEvaluator, data) -> tuple[np.ndarray, np.ndarray]:
    """Data bounding box padded by three noise scales."""
    obs = as_observation(evaluator, data)
    lo, hi = obs.bounding_box()
    pad = 3.0 * max(evaluator.mixing.spread(), evaluator.fidelity.tau)
    return lo - pad, hi + pad


def _box(config: SfwConfig, evaluator, data):
    if config.search_box is None:
        return default_search_box(evaluator, data)
    d = evaluator.dim
    lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (d,)).copy() for v in config.search_box)
    return lo, hi


def _prepare(evaluator: CorrelationEvaluator, data, box) -> Observation:
    obs = as_observation(evaluator, data)
    dlo, dhi = obs.bounding_box()
    lag = float(np.max(np.maximum(box[1], dhi) - np.minimum(box[0], dlo)))
    return obs.with_evaluator(evaluator.covering(lag))


def _local_maxima(score: np.ndarray) -> np.ndarray:
    padded = np.pad(score, 1, constant_values=-np.inf)
    mask = np.ones(score.shape, dtype=bool)
    d = score.ndim
    for offset in np.ndindex(*([3] * d)):
        if all(o == 1 for o in offset):
            continue
        sl = tuple(slice(o, o + n) for o, n in zip(offset, score.shape))
        mask &= score >= padded[sl]
    return mask


def _ascend(fld: SpectralField, t0: np.ndarray, sign: float, lo, hi, iters: int = 60) -> tuple[np.ndarray, float]:
    """Maximize ``sign * eta`` from ``t0`` by damped Newton / gradient steps inside the box."""
    t = t0.copy()
    val = sign * fld.values(t[None])[0]
    step = 1.0
    for _ in range(iters):
        g = sign * fld.gradients(t[None])[0]
        h = sign * fld.hessians(t[None])[0]
        direction = None
        try:
            np.linalg.cholesky(-h)
            direction = np.linalg.solve(-h, g)
            trial_step = 1.0
        except np.linalg.LinAlgError:
            scale = max(np.abs(np.diag(h)).max(), 1e-12)
            direction = g / scale
            trial_step = step
        moved = False
        for _ in range(40):
            t_new = np.clip(t + trial_step * direction, lo, hi)
            v_new = sign * fld.values(t_new[None])[0]
            if v_new >= val:
                moved = not np.array_equal(t_new, t)
                t, val, step = t_new, v_new, min(2 * trial_step, 1.0)
                break
            trial_step *= 0.5
        if not moved or np.max(np.abs(trial_step * direction)) < 1e-13 * (1 + np.max(np.abs(t))):
            break
    return t, sign * val


def _find_spike(fld: SpectralField, box, config: SfwConfig) -> tuple[np.ndarray, float]:
    lo, hi = box
    d = len(lo)
    per_dim = min(config.grid_points_per_dim, max(8, int(config.max_grid_points ** (1.0 / d))))
    axes = [np.linspace(lo[j], hi[j], per_dim) for j in range(d)]
    vals = fld.on_grid(axes)
    score = vals if config.nonnegative else np.abs(vals)
    flat_score = score.reshape(-1)
    peaks = np.flatnonzero(_local_maxima(score).reshape(-1))
    # stable descending sort keeps the lowest lexicographic index among ties
    order = peaks[np.argsort(-flat_score[peaks], kind="stable")][: config.ascent_starts]
    best_t, best_v, best_s = None, -np.inf, -np.inf
    for flat in order:
        idx = np.unravel_index(flat, score.shape)
        t0 = np.array([axes[j][idx[j]] for j in range(d)])
        sign = 1.0 if config.nonnegative else float(np.sign(vals[idx]) or 1.0)
        t, v = _ascend(fld, t0, sign, lo, hi)
        s = v if config.nonnegative else abs(v)
        if s > best_s:
            best_t, best_v, best_s = t, v, s
    return best_t, float(best_v)


def find_spike(evaluator: CorrelationEvaluator, measure: DiscreteMeasure, data, kappa: float, config: SfwConfig):
    """Approximate global maximizer of ``|eta|`` (of ``eta`` in nonnegative mode).

    A grid scan over the search box seeds local Newton ascent from the best
    few grid peaks. Global optimality is not guaranteed.
    """
    box = _box(config, evaluator, data)
    obs = _prepare(evaluator, data, box)
    locs = measure.locations if len(measure) else np.zeros((0, evaluator.dim))
    amps = measure.weights if len(measure) else np.zeros(0)
    fld = obs.dual_field(locs, amps, kappa)
    return _find_spike(fld, box, config)


def _penalized(cache: FidelityCache, a: np.ndarray, kappa: float) -> float:
    return objective(cache, a) + kappa * float(np.abs(a).sum())


def lasso_step(cache: FidelityCache, kappa: float, a_init, config: SfwConfig) -> np.ndarray:
    """Proximal gradient (FISTA with adaptive restart) on ``F(a) + kappa ||a||_1``."""
    q, b = cache.Q, cache.b
    lip = float(np.max(np.abs(q).sum(axis=1)))
    if lip <= 0:
        return np.zeros_like(b)
    thr = kappa / lip

    def prox(v):
        if config.nonnegative:
            return np.maximum(v - thr, 0.0)
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)

    a = np.asarray(a_init, dtype=float).copy()
    if config.nonnegative:
        a = np.maximum(a, 0.0)
    if len(a) == 0:
        return a
    # constant term omitted: only comparisons between iterates are needed
    best, best_val = a.copy(), a @ (b + 0.5 * (q @ a)) + kappa * np.abs(a).sum()
    y, mom = a.copy(), 1.0
    for _ in range(config.lasso_max_iters):
        a_new = prox(y - (b + q @ y) / lip)
        mom_new = 0.5 * (1 + math.sqrt(1 + 4 * mom * mom))
        diff = a_new - a
        if diff @ (y - a_new) > 0:  # restart when momentum points uphill
            mom_new, y = 1.0, a_new
        else:
            y = a_new + (mom - 1) / mom_new * diff
        a, mom = a_new, mom_new
        val = a @ (b + 0.5 * (q @ a)) + kappa * np.abs(a).sum()
        if val <= best_val:
            best, best_val = a, val
        if np.abs(diff).max() <= config.lasso_tol * max(1.0, np.abs(a).max()):
            break
    return best


class _Fit:
    """Objective pieces for a fixed observation as functions of ``(a, t)``."""

    def __init__(self, obs: Observation, kappa: float):
        self.obs = obs
        self.ev = obs.evaluator
        self.kappa = kappa

    def cache(self, t: np.ndarray) -> FidelityCache:
        return build_cache(self.ev, t, self.obs)

    def value(self, a, t) -> float:
        return _penalized(self.cache(t), a, self.kappa)

    def t_gradient(self, a, t) -> np.ndarray:
        g_obs = self.obs.gradients(t)
        diff = (t[:, None, :] - t[None, :, :]).reshape(-1, t.shape[1])
        gz = self.ev.zeta_gradient(diff).reshape(len(t), len(t), t.shape[1])
        return a[:, None] * (-g_obs + np.einsum("j,ijv->iv", a, gz))

    def newton_system(self, a, t, signs):
        n, d = t.shape
        cache = self.cache(t)
        g_obs = self.obs.gradients(t)
        h_obs = self.obs.hessians(t)
        diff = (t[:, None, :] - t[None, :, :]).reshape(-1, d)
        gz = self.ev.zeta_gradient(diff).reshape(n, n, d)
        hz = self.ev.zeta_hessian(diff).reshape(n, n, d, d)
        size = n * (d + 1)
        grad = np.empty(size)
        hess = np.zeros((size, size))
        grad[:n] = cache.b + cache.Q @ a + self.kappa * signs
        field_grad = -g_obs + np.einsum("j,ijv->iv", a, gz)
        grad[n:] = (a[:, None] * field_grad).reshape(-1)
        hess[:n, :n] = cache.Q
        for i in range(n):
            ti = slice(n + i * d, n + (i + 1) * d)
            hess[i, ti] = hess[ti, i] = field_grad[i]
            for j in range(n):
                tj = slice(n + j * d, n + (j + 1) * d)
                if j != i:
                    hess[j, ti] = hess[ti, j] = a[i] * gz[i, j]
                    hess[ti, tj] = -a[i] * a[j] * hz[i, j]
            off = np.einsum("j,jvw->vw", np.delete(a, i), np.delete(hz[i], i, axis=0))
            hess[ti, ti] = a[i] * (-h_obs[i] + off)
        return grad, 0.5 * (hess + hess.T), cache


def slide_step(evaluator: CorrelationEvaluator, data, a_init, t_init, kappa: float, config: SfwConfig):
    """Joint descent on amplitudes and locations; never increases the objective.

    Alternates a preconditioned gradient step on the locations (with
    backtracking) and a LASSO refresh of the amplitudes.
    """
    a = np.asarray(a_init, dtype=float).copy()
    t = np.atleast_2d(np.asarray(t_init, dtype=float)).copy()
    if evaluator.dim == 1 and t.shape[0] == 1 and len(a) != 1:
        t = t.reshape(-1, 1)
    if len(a) != len(t):
        raise ValueError("a_init and t_init lengths differ")
    if len(a) == 0:
        return a, t
    pad = 3.0 * max(evaluator.mixing.spread(), evaluator.fidelity.tau)
    obs = fitted_observation(evaluator, data, t, pad=pad)
    fit = _Fit(obs, kappa)
    ev = obs.evaluator
    curv = abs(float(np.trace(ev.zeta_hessian(np.zeros((1, ev.dim)))[0]))) / ev.dim
    val = fit.value(a, t)
    for _ in range(config.slide_max_iters):
        g = fit.t_gradient(a, t)
        direction = -g / (a[:, None] ** 2 * curv + 1e-300)
        direction[a == 0] = 0.0
        step, moved = 1.0, False
        slope = float(np.sum(g * direction))
        for _ in range(30):
            t_new = t + step * direction
            v_new = fit.value(a, t_new)
            if v_new <= val + 1e-4 * step * slope:
                moved = True
                break
            step *= 0.5
        if not moved:
            t_new, v_new = t, val
        a_new = lasso_step(fit.cache(t_new), kappa, a, config)
        v_lasso = fit.value(a_new, t_new)
        if v_lasso <= v_new:
            v_new = v_lasso
        else:
            a_new = a
        done = val - v_new <= config.slide_tol * max(abs(val), 1e-300)
        if v_new <= val:
            a, t, val = a_new, t_new, v_new
        if done:
            break
    if config.polish:
        a, t = _polish(fit, a, t, config)
    return a, t


def _polish(fit: _Fit, a: np.ndarray, t: np.ndarray, config: SfwConfig):
    """Damped Newton on the smooth objective with amplitude signs frozen."""
    keep = a != 0
    if not np.any(keep):
        return a, t
    a_act, t_act = a[keep].copy(), t[keep].copy()
    if config.nonnegative and np.any(a_act < 0):
        return a, t
    signs = np.sign(a_act)
    n, d = t_act.shape
    val = fit.value(a_act, t_act)
    start = val
    for _ in range(config.polish_max_iters):
        grad, hess, _ = fit.newton_system(a_act, t_act, signs)
        scale = max(np.abs(np.diag(hess)).max(), 1e-300)
        shift = 0.0
        for _ in range(30):
            try:
                chol = np.linalg.cholesky(hess + shift * np.eye(len(grad)))
                break
            except np.linalg.LinAlgError:
                shift = max(2 * shift, 1e-10 * scale)
        else:
            break
        step_vec = -np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        step, accepted = 1.0, False
        for _ in range(40):
            a_new = a_act + step * step_vec[:n]
            t_new = t_act + step * step_vec[n:].reshape(n, d)
            if np.all(np.sign(a_new) == signs):
                v_new = fit.value(a_new, t_new)
                if v_new <= val:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        improvement = val - v_new
        a_act, t_act, val = a_new, t_new, v_new
        if np.max(np.abs(step * step_vec)) <= 1e-15 * (1 + np.max(np.abs(t_act))) or improvement <= 0:
            break
    if val > start:
        return a, t
    a_out, t_out = a.copy(), t.copy()
    a_out[keep], t_out[keep] = a_act, t_act
    return a_out, t_out


def _merge_duplicates(a: np.ndarray, t: np.ndarray, tol: float = 1e-8):
    out_a, out_t = [], []
    for ai, ti in zip(a, t):
        for k, tk in enumerate(out_t):
            if np.linalg.norm(ti - tk) <= tol:
                out_a[k] += ai
                break
        else:
            out_a.append(float(ai))
            out_t.append(ti.copy())
    return np.array(out_a), np.array(out_t).reshape(len(out_t), t.shape[1])


def solve_sfw(evaluator: CorrelationEvaluator, data, config: SfwConfig) -> SolveResult:
    """Run Sliding Frank-Wolfe from the zero measure.

    ``data`` is a :class:`Sample`, a truth measure (exact-moment mode) or an
    :class:`Observation`. Non-convergence within ``max_iters`` is reported
    through ``converged``, never raised.
    """
    kappa = config.kappa
    box = _box(config, evaluator, data)
    obs = _prepare(evaluator, data, box)
    ev = obs.evaluator
    d = ev.dim
    a = np.zeros(0)
    t = np.zeros((0, d))
    fit = _Fit(obs, kappa)
    obj_trace, supp_trace = [], []
    converged, dual_sup, iters = False, math.inf, 0
    for it in range(config.max_iters + 1):
        fld = obs.dual_field(t, a, kappa)
        t_star, v_star = _find_spike(fld, box, config)
        score = v_star if config.nonnegative else abs(v_star)
        dual_sup = float(score)
        if score <= 1 + config.dual_tol:
            converged = True
            break
        if it == config.max_iters:
            break
        iters = it + 1
        if len(t) and np.min(np.linalg.norm(t - t_star, axis=1)) <= 1e-8:
            a_half = lasso_step(fit.cache(t), kappa, a, config)
        else:
            t = np.vstack([t, t_star])
            a_half = lasso_step(fit.cache(t), kappa, np.append(a, 0.0), config)
        a, t = slide_step(ev, obs, a_half, t, kappa, config)
        a, t = _merge_duplicates(a, t)
        keep = np.abs(a) > config.prune_threshold
        a, t = a[keep], t[keep]
        obj_trace.append(fit.value(a, t) if len(a) else obs.const_term)
        supp_trace.append(int(len(a)))
    estimate = DiscreteMeasure(a, t, dim=d) if len(a) else DiscreteMeasure.empty(d)
    return SolveResult(estimate, iters, converged, float(dual_sup), obj_trace, supp_trace)
