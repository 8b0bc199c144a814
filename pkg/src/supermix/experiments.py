"""Experiment configuration and drivers shared by the command line."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .certificate import AuditReport, Certificate, admissible_bandwidth, audit_certificate, build_certificate
from .cpgd import CpgdConfig, Trajectory, solve_cpgd
from .errors import InsufficientGridError
from .fidelity import CorrelationEvaluator
from .kernels import FidelitySpec, MixingKernelSpec
from .measures import DiscreteMeasure, Sample, min_separation, sample_mixture
from .metrics import KAPPA_FACTOR, default_kappa, rate_quantities, support_error
from .sfw import SfwConfig, SolveResult, solve_sfw

FIGURE1_TRUTH = DiscreteMeasure([0.36, 0.52, 0.12], [[-13.1], [-0.9], [14.0]])

# sample and particle seed of the reference particle run
FIGURE1_SEED = 2

FIGURE1_CONFIG = {
    "truth": FIGURE1_TRUTH.to_json_dict(),
    "mixing": {"family": "gaussian", "dim": 1, "params": {}},
    "tau": 0.1,
    "kappa": 0.01,
    "n": 200,
    "seeds": [FIGURE1_SEED],
    "cpgd": {"alpha": 0.05, "beta": 1.0, "num_particles": 20, "num_steps": 2500, "record_every": 1},
    "sfw": {},
}


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ExperimentConfig:
    truth: DiscreteMeasure
    mixing: MixingKernelSpec
    tau: float
    m: float
    kappa: float | str = "auto"
    kappa_factor: float = KAPPA_FACTOR
    n: int = 200
    seeds: list = field(default_factory=lambda: [0])
    quad_points_per_dim: int = 64
    exact_moment: bool = False
    sfw: dict = field(default_factory=dict)
    cpgd: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "truth" not in data or "mixing" not in data:
            raise ValueError("config needs 'truth' and 'mixing'")
        tau, m = data.get("tau"), data.get("m")
        if tau is None and m is None:
            raise ValueError("config needs one of 'tau' or 'm'")
        if tau is not None and m is not None and not math.isclose(1.0 / tau, 4.0 * m, rel_tol=1e-9):
            raise ValueError("'tau' and 'm' disagree: expected 1/tau = 4m")
        tau = float(tau) if tau is not None else 1.0 / (4.0 * float(m))
        m = float(m) if m is not None else 1.0 / (4.0 * tau)
        kappa = data.get("kappa", "auto")
        if kappa != "auto":
            kappa = float(kappa)
            if kappa <= 0:
                raise ValueError("kappa must be positive or 'auto'")
        seeds = data.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        truth = DiscreteMeasure.from_json_dict(data["truth"])
        mixing = MixingKernelSpec.from_json_dict(data["mixing"])
        if truth.dim != mixing.dim:
            raise ValueError("truth and mixing dimensions differ")
        return cls(
            truth=truth,
            mixing=mixing,
            tau=tau,
            m=m,
            kappa=kappa,
            kappa_factor=float(data.get("kappa_factor", KAPPA_FACTOR)),
            n=int(data.get("n", 200)),
            seeds=[int(s) for s in seeds],
            quad_points_per_dim=int(data.get("quad_points_per_dim", 64)),
            exact_moment=bool(data.get("exact_moment", False)),
            sfw=dict(data.get("sfw") or {}),
            cpgd=dict(data.get("cpgd") or {}),
            certify=dict(data.get("certify") or {}),
            rates=dict(data.get("rates") or {}),
            raw=dict(data),
        )

    @property
    def dim(self) -> int:
        return self.mixing.dim

    def fidelity(self) -> FidelitySpec:
        return FidelitySpec(self.tau, self.dim, self.quad_points_per_dim)

    def evaluator(self) -> CorrelationEvaluator:
        return CorrelationEvaluator(self.mixing, self.fidelity())

    def resolve_kappa(self, n: int | None = None) -> float:
        if self.kappa != "auto":
            return float(self.kappa)
        return default_kappa(len(self.truth), self.dim, self.m, n or self.n, self.mixing, self.kappa_factor)


def simulate(cfg: ExperimentConfig, seed: int, n: int | None = None) -> Sample:
    return sample_mixture(cfg.truth, cfg.mixing, cfg.n if n is None else n, seed)


def _data(cfg: ExperimentConfig, sample: Sample | None, seed: int):
    if cfg.exact_moment:
        return cfg.truth
    return sample if sample is not None else simulate(cfg, seed)


def run_sfw(cfg: ExperimentConfig, seed: int, sample: Sample | None = None, n: int | None = None) -> SolveResult:
    data = cfg.truth if cfg.exact_moment else (sample if sample is not None else simulate(cfg, seed, n))
    size = n or (sample.n if sample is not None else cfg.n)
    sfw_cfg = SfwConfig(kappa=cfg.resolve_kappa(size), **cfg.sfw)
    return solve_sfw(cfg.evaluator(), data, sfw_cfg)


def run_cpgd(cfg: ExperimentConfig, seed: int, sample: Sample | None = None) -> tuple[DiscreteMeasure, Trajectory]:
    data = _data(cfg, sample, seed)
    size = sample.n if sample is not None else cfg.n
    params = dict(cfg.cpgd)
    params.setdefault("seed", seed)
    cp_cfg = CpgdConfig.from_json_dict({"kappa": cfg.resolve_kappa(size), **params})
    return solve_cpgd(cfg.evaluator(), data, cp_cfg)


def run_certify(cfg: ExperimentConfig) -> tuple[Certificate, AuditReport, dict]:
    spec = cfg.certify
    support = np.asarray(spec.get("support", cfg.truth.locations.tolist()), dtype=float)
    support = support.reshape(len(support), -1)
    m = float(spec.get("m", cfg.m))
    kind = spec.get("kind", "P")
    cert = build_certificate(support, m, kind, spec.get("index"))
    audit = audit_certificate(cert, spec.get("grid"), spec.get("epsilon"))
    K, d = support.shape
    delta = min_separation(support) if K >= 2 else 1.0
    m_adm = admissible_bandwidth(K, d, delta, float(spec.get("c", 1.0)))
    flags = {
        "admissible_bandwidth": m_adm,
        "below_admissible": bool(m < m_adm),
        "condition_number": cert.condition_number,
    }
    return cert, audit, flags


def _replicate(args):
    cfg_dict, n, seed, kappa = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    sample = simulate(cfg, seed, n)
    sfw_cfg = SfwConfig(kappa=kappa, **cfg.sfw)
    res = solve_sfw(cfg.evaluator(), sample, sfw_cfg)
    err = support_error(res.estimate, cfg.truth)
    return {
        "n": n,
        "seed": seed,
        "kappa": kappa,
        "k_hat": err["k_hat"],
        "hausdorff": err["hausdorff"],
        "matched_weight_l1": err["matched_weight_l1"],
        "converged": res.converged,
        "dual_sup": res.dual_sup,
    }


def rate_kappa(cfg: ExperimentConfig, n: int) -> float:
    """Regularization for the rate sweep.

    ``{"type": "rho", "factor": c}`` gives ``c * rho_n``; the default uses the
    experiment's own kappa rule.
    """
    rule = cfg.rates.get("kappa_rule")
    if rule is None:
        return cfg.resolve_kappa(n)
    if rule.get("type") == "rho":
        return float(rule.get("factor", 1.0)) * rate_quantities(len(cfg.truth), cfg.dim, cfg.m, n, cfg.mixing)["rho_n"]
    raise ValueError(f"unknown kappa rule {rule!r}")


def ols_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def run_rates(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[dict], dict]:
    """Per-(n, seed) weight errors and the log-log slope of their medians."""
    n_grid = [int(n) for n in cfg.rates.get("n_grid", [])]
    seeds = cfg.rates.get("seeds", cfg.seeds)
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    if len(n_grid) < 3:
        raise InsufficientGridError("the rate sweep needs at least three sample sizes")
    if len(seeds) < 10:
        raise InsufficientGridError("the rate sweep needs at least ten replicates")
    jobs = [(cfg.raw, n, s, rate_kappa(cfg, n)) for n in n_grid for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_replicate, jobs))
    else:
        rows = [_replicate(j) for j in jobs]
    medians = [float(np.median([r["matched_weight_l1"] for r in rows if r["n"] == n])) for n in n_grid]
    slope = ols_slope(np.log(n_grid), np.log(medians))
    inversions = int(sum(b > a for a, b in zip(medians, medians[1:])))
    summary = {"n_grid": n_grid, "median_weight_error": medians, "slope": slope, "inversions": inversions}
    return rows, summary
