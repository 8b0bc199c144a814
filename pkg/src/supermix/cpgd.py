"""Conic particle gradient descent.

The measure is ``(1/N) sum_i r_i^2 delta_{t_i}``. Square-root masses follow a
multiplicative (mirror) update and positions follow the dual-function
gradient, both driven by the dual function of the current measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fidelity import CorrelationEvaluator, Observation, as_observation, fitted_observation
from .measures import DiscreteMeasure

FINAL_PRUNE = 1e-12


@dataclass
class CpgdConfig:
    kappa: float
    alpha: float = 0.05
    beta: float = 1.0
    num_particles: int = 20
    num_steps: int = 2500
    # explicit initial positions (N, d); overrides the random init
    init_positions: np.ndarray | None = None
    init_box: tuple | None = None
    init_mass: float = 1.0
    seed: int = 0
    record_every: int = 1

    def __post_init__(self):
        for name in ("kappa", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.num_particles < 1:
            raise ValueError("num_particles must be at least 1")
        if self.num_steps < 0 or self.record_every < 1:
            raise ValueError("num_steps must be >= 0 and record_every >= 1")
        if self.init_mass < 0:
            raise ValueError("init_mass must be nonnegative")

    def to_json_dict(self) -> dict:
        out = dict(self.__dict__)
        if self.init_positions is not None:
            out["init_positions"] = np.asarray(self.init_positions).tolist()
        if self.init_box is not None:
            out["init_box"] = [np.atleast_1d(np.asarray(v, dtype=float)).tolist() for v in self.init_box]
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "CpgdConfig":
        data = dict(data)
        if data.get("init_positions") is not None:
            data["init_positions"] = np.asarray(data["init_positions"], dtype=float)
        return cls(**data)


@dataclass
class ParticleState:
    r: np.ndarray
    t: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.t = np.asarray(self.t, dtype=float).reshape(len(self.r), -1)
        if np.any(self.r < 0):
            raise ValueError("square-root masses must be nonnegative")

    @property
    def masses(self) -> np.ndarray:
        return self.r**2 / len(self.r)

    def to_measure(self, prune: float = 0.0) -> DiscreteMeasure:
        w = self.masses
        keep = w > prune
        if not np.any(keep):
            return DiscreteMeasure.empty(self.t.shape[1])
        return DiscreteMeasure(w[keep], self.t[keep], dim=self.t.shape[1])


@dataclass
class Trajectory:
    """Recorded particle states; ``rows`` are (step, particle_id, mass, x...)."""

    dim: int
    rows: list = field(default_factory=list)

    def record(self, state: ParticleState):
        masses = state.masses
        for i, (m, x) in enumerate(zip(masses, state.t)):
            self.rows.append((state.step_index, i, float(m), *map(float, x)))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, 3 + self.dim)

    def to_csv(self, path) -> None:
        header = ["step", "particle_id", "mass"] + [f"x{j + 1}" for j in range(self.dim)]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in self.rows:
                fh.write(f"{int(row[0])},{int(row[1])}," + ",".join(repr(v) for v in row[2:]) + "\n")


def initial_state(evaluator: CorrelationEvaluator, data, config: CpgdConfig) -> ParticleState:
    """Unit square-root masses at seeded uniform positions in the data box."""
    n, d = config.num_particles, evaluator.dim
    if config.init_positions is not None:
        t = np.asarray(config.init_positions, dtype=float).reshape(n, d)
    else:
        if config.init_box is not None:
            lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (d,)) for v in config.init_box)
        else:
            lo, hi = as_observation(evaluator, data).bounding_box()
        gen = np.random.Generator(np.random.PCG64(config.seed))
        t = lo + (hi - lo) * gen.random((n, d))
    return ParticleState(np.full(n, np.sqrt(config.init_mass)), t, 0)


def _span(obs: Observation, t: np.ndarray) -> float:
    lo = np.minimum(obs.centers.min(axis=0), t.min(axis=0))
    hi = np.maximum(obs.centers.max(axis=0), t.max(axis=0))
    return float(np.max(hi - lo))


def cpgd_step(evaluator: CorrelationEvaluator, data, state: ParticleState, config: CpgdConfig) -> ParticleState:
    """One simultaneous update of all particles from the current dual function."""
    if isinstance(data, Observation) and data.evaluator.covering(_span(data, state.t)) is data.evaluator:
        obs = data
    else:
        obs = fitted_observation(evaluator, data, state.t)
    fld = obs.dual_field(state.t, state.masses, config.kappa)
    eta = fld.values(state.t)
    grad = fld.gradients(state.t)
    r = state.r * np.exp(2.0 * config.alpha * config.kappa * (eta - 1.0))
    t = state.t + config.beta * config.kappa * grad
    return ParticleState(r, t, state.step_index + 1)


def solve_cpgd(evaluator: CorrelationEvaluator, data, config: CpgdConfig, state: ParticleState | None = None):
    """Run ``num_steps`` updates; returns the final measure and the trajectory."""
    obs = as_observation(evaluator, data)
    if state is None:
        state = initial_state(evaluator, data, config)
    lo, hi = obs.bounding_box()
    span = np.concatenate([hi - lo, np.ptp(state.t, axis=0)])
    obs = obs.with_evaluator(evaluator.covering(float(np.max(hi - lo) + np.max(span))))
    traj = Trajectory(evaluator.dim)
    traj.record(state)
    for _ in range(config.num_steps):
        state = cpgd_step(obs.evaluator, obs, state, config)
        if state.step_index % config.record_every == 0 or state.step_index == config.num_steps:
            traj.record(state)
    return state.to_measure(FINAL_PRUNE), traj
