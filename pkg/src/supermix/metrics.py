"""Error functionals for estimated mixing measures and the rate quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certificate import Certificate, spectral_floor
from .errors import AmbiguousRegionError, SupportMismatchError
from .kernels import MixingKernelSpec
from .measures import DiscreteMeasure, jordan_decompose, merge_close, min_separation, total_variation

# the regularization may be scaled by sqrt(2); the default keeps the plain ratio
KAPPA_FACTOR = 1.0


def bregman_divergence(estimate: DiscreteMeasure, truth: DiscreteMeasure, cert: Certificate) -> float:
    """``||est||_1 - ||truth||_1 - int P d(est - truth)``."""
    if cert.kind != "P":
        raise SupportMismatchError("Bregman divergence needs a certificate of kind P")
    if len(truth) != len(cert.support) or not _same_support(truth.locations, cert.support):
        raise SupportMismatchError("certificate was not built on the truth support")
    out = total_variation(estimate) - total_variation(truth)
    if len(estimate):
        out -= float(estimate.weights @ cert.value(estimate.locations))
    out += float(truth.weights @ cert.value(truth.locations))
    return out


def _same_support(a: np.ndarray, b: np.ndarray) -> bool:
    if a.shape != b.shape:
        return False
    key = lambda arr: sorted(map(tuple, np.round(arr, 12)))
    return key(a) == key(b)


@dataclass(frozen=True)
class RegionSpec:
    """Closed balls of radius ``epsilon`` around the truth support."""

    truth_support: np.ndarray
    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        sup = np.atleast_2d(np.asarray(self.truth_support, dtype=float))
        object.__setattr__(self, "truth_support", sup)
        if len(sup) >= 2 and self.epsilon >= min_separation(sup) / 2:
            raise AmbiguousRegionError("near regions overlap: epsilon must be below half the separation")


def region_masses(estimate: DiscreteMeasure, region: RegionSpec) -> dict:
    """Negative mass, positive far mass and signed near mass per truth atom."""
    plus, minus = jordan_decompose(estimate)
    K = len(region.truth_support)
    near = np.zeros(K)
    pos_far = 0.0
    if len(estimate):
        dist = np.linalg.norm(estimate.locations[:, None, :] - region.truth_support[None, :, :], axis=-1)
        closest = dist.argmin(axis=1)
        inside = dist[np.arange(len(estimate)), closest] <= region.epsilon
        for w, k, ins in zip(estimate.weights, closest, inside):
            if ins:
                near[k] += w
            elif w > 0:
                pos_far += w
    return {
        "neg_mass_total": total_variation(minus),
        "pos_mass_far": float(pos_far),
        "per_k_signed_mass_near": near.tolist(),
        "pos_mass_total": total_variation(plus),
    }


def rate_quantities(K: int, d: int, m: float, n: int, mixing: MixingKernelSpec) -> dict:
    """``rho_n``, ``C_m`` and their product for the cutoff ``1/tau = 4m``."""
    if mixing.dim != d:
        raise ValueError("mixing dimension differs from d")
    rho = 2.0**d * m ** (d / 2) / math.sqrt(n)
    floor = spectral_floor(mixing, m)
    c_m = K**2 * m ** (-d / 2) * 2.0 ** (d / 2) / floor
    return {"rho_n": rho, "C_m": c_m, "product_bound": rho * c_m, "inf_sigma": floor}


def default_kappa(K: int, d: int, m: float, n: int, mixing: MixingKernelSpec, factor: float = KAPPA_FACTOR) -> float:
    """Regularization ``factor * rho_n / C_m``."""
    q = rate_quantities(K, d, m, n, mixing)
    return factor * q["rho_n"] / q["C_m"]


def support_error(estimate: DiscreteMeasure, truth: DiscreteMeasure) -> dict:
    """Hausdorff distance, matched weight error and cluster count.

    The estimate is first merged at a quarter of the truth separation, then
    clusters are greedily matched to truth atoms by increasing distance.
    Unmatched truth atoms contribute their full weight to the error.
    """
    if len(estimate) == 0:
        return {"hausdorff": math.inf, "matched_weight_l1": total_variation(truth), "k_hat": 0}
    if len(truth) >= 2:
        merged = merge_close(estimate, min_separation(truth) / 4)
    else:
        merged = estimate
    loc_e, w_e = merged.locations, merged.weights
    loc_t, w_t = truth.locations, truth.weights
    dist = np.linalg.norm(loc_e[:, None, :] - loc_t[None, :, :], axis=-1)
    hausdorff = float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))
    order = np.argsort(dist, axis=None, kind="stable")
    used_e, used_t = set(), set()
    err = 0.0
    for flat in order:
        i, k = divmod(int(flat), len(truth))
        if i in used_e or k in used_t:
            continue
        used_e.add(i)
        used_t.add(k)
        err += abs(w_e[i] - w_t[k])
    err += sum(abs(w_t[k]) for k in range(len(truth)) if k not in used_t)
    return {"hausdorff": hausdorff, "matched_weight_l1": float(err), "k_hat": len(merged)}
