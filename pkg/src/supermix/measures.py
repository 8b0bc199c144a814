"""Atomic signed measures on R^d, samples, and mixture sampling."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidMeasureError,
    UndefinedSeparationError,
)

if TYPE_CHECKING:
    from .kernels import MixingKernelSpec


def _as_points(locations, dim: int | None) -> np.ndarray:
    arr = np.asarray(locations, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # A flat list is a list of scalar locations unless dim says otherwise.
        if dim is None or dim == 1:
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(-1, dim)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"locations must be 2-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] and arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {arr.shape[1]}")
    return arr


class DiscreteMeasure:
    """A finite signed combination of Dirac masses ``sum_i w_i delta_{t_i}``.

    Atoms at bitwise-identical locations are merged on construction and atoms
    with weight exactly zero are dropped. Instances are immutable.
    """

    __slots__ = ("_weights", "_locations", "_dim")

    def __init__(self, weights, locations, dim: int | None = None):
        w = np.atleast_1d(np.asarray(weights, dtype=float)).ravel()
        t = _as_points(locations, dim)
        if t.shape[0] != w.shape[0]:
            raise DimensionMismatchError(
                f"{w.shape[0]} weights but {t.shape[0]} locations"
            )
        if dim is None:
            if t.shape[0] == 0 and t.shape[1] == 0:
                raise DimensionMismatchError("empty measure needs an explicit dim")
            dim = t.shape[1]
        if t.shape[0] == 0:
            t = np.zeros((0, dim))

        merged_w: list[float] = []
        merged_t: list[np.ndarray] = []
        index: dict[bytes, int] = {}
        for wi, ti in zip(w, t):
            key = ti.tobytes()
            if key in index:
                merged_w[index[key]] += wi
            else:
                index[key] = len(merged_w)
                merged_w.append(float(wi))
                merged_t.append(ti)
        keep = [i for i, wi in enumerate(merged_w) if wi != 0.0]
        self._weights = np.array([merged_w[i] for i in keep], dtype=float)
        self._locations = (
            np.array([merged_t[i] for i in keep], dtype=float).reshape(-1, dim)
        )
        self._weights.setflags(write=False)
        self._locations.setflags(write=False)
        self._dim = int(dim)

    @classmethod
    def empty(cls, dim: int) -> "DiscreteMeasure":
        return cls([], np.zeros((0, dim)), dim=dim)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, Sequence[float] | float]], dim=None):
        atoms = list(atoms)
        weights = [a[0] for a in atoms]
        locs = [np.atleast_1d(np.asarray(a[1], dtype=float)) for a in atoms]
        if not atoms:
            if dim is None:
                raise DimensionMismatchError("empty measure needs an explicit dim")
            return cls.empty(dim)
        return cls(weights, np.vstack(locs), dim=dim)

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def locations(self) -> np.ndarray:
        return self._locations

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def atoms(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self._weights.tolist(), self._locations))

    def __len__(self) -> int:
        return self._weights.shape[0]

    def __repr__(self) -> str:
        parts = ", ".join(
            f"({w:.6g}, {np.array2string(t, precision=6)})" for w, t in self.atoms
        )
        return f"DiscreteMeasure(dim={self._dim}, [{parts}])"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure) or other.dim != self.dim:
            return NotImplemented
        mine = sorted(zip(map(tuple, self._locations), self._weights))
        theirs = sorted(zip(map(tuple, other._locations), other._weights))
        return mine == theirs

    def __neg__(self) -> "DiscreteMeasure":
        return DiscreteMeasure(-self._weights, self._locations, dim=self._dim)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if other.dim != self.dim:
            raise DimensionMismatchError("cannot add measures of different dimension")
        return DiscreteMeasure(
            np.concatenate([self._weights, other._weights]),
            np.vstack([self._locations, other._locations]),
            dim=self._dim,
        )

    def __sub__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return self + (-other)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(factor * self._weights, self._locations, dim=self._dim)

    def shifted(self, offset) -> "DiscreteMeasure":
        offset = np.asarray(offset, dtype=float).reshape(1, self._dim)
        return DiscreteMeasure(self._weights, self._locations + offset, dim=self._dim)

    def integrate(self, func) -> float:
        """Integrate a vectorised function ``func(points) -> values``."""
        if len(self) == 0:
            return 0.0
        return float(np.dot(self._weights, func(self._locations)))

    # serialisation -------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "dim": self._dim,
            "atoms": [{"w": w, "t": t.tolist()} for w, t in self.atoms],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DiscreteMeasure":
        dim = int(data["dim"])
        atoms = [(a["w"], a["t"]) for a in data["atoms"]]
        return cls.from_atoms(atoms, dim=dim)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["weight"] + [f"x{j + 1}" for j in range(self._dim)])
        for w, t in self.atoms:
            writer.writerow([repr(w)] + [repr(float(v)) for v in t])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        dim = len(header) - 1
        weights = [float(r[0]) for r in body]
        locs = np.array([[float(v) for v in r[1:]] for r in body]).reshape(-1, dim)
        return cls(weights, locs, dim=dim)


@dataclass(frozen=True)
class Sample:
    """``n`` observed points in R^d. ``seed`` is 0 for externally loaded data."""

    points: np.ndarray
    seed: int = 0
    dim: int = field(default=0)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.dim or 1)
        if pts.ndim != 2:
            raise DimensionMismatchError(f"sample points must be 2-D, got {pts.shape}")
        dim = self.dim or pts.shape[1]
        if pts.shape[0] and pts.shape[1] != dim:
            raise DimensionMismatchError(f"expected dimension {dim}, got {pts.shape[1]}")
        pts = pts.reshape(-1, dim).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", int(dim))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n

    def shifted(self, offset) -> "Sample":
        offset = np.asarray(offset, dtype=float).reshape(1, self.dim)
        return Sample(self.points + offset, self.seed, self.dim)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(self.dim)])
        for p in self.points:
            writer.writerow([repr(float(v)) for v in p])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0) -> "Sample":
        rows = list(csv.reader(io.StringIO(text)))
        dim = len(rows[0])
        body = [r for r in rows[1:] if r]
        pts = np.array([[float(v) for v in r] for r in body]).reshape(-1, dim)
        return cls(pts, seed=seed, dim=dim)


def total_variation(measure: DiscreteMeasure) -> float:
    return float(np.abs(measure.weights).sum())


def jordan_decompose(measure: DiscreteMeasure) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Split into ``(mu_plus, mu_minus)`` with ``measure = mu_plus - mu_minus``."""
    w, t = measure.weights, measure.locations
    pos = w > 0
    return (
        DiscreteMeasure(w[pos], t[pos], dim=measure.dim),
        DiscreteMeasure(-w[~pos], t[~pos], dim=measure.dim),
    )


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def min_separation(measure: DiscreteMeasure | np.ndarray) -> float:
    """Smallest Euclidean distance between two distinct atoms."""
    pts = measure.locations if isinstance(measure, DiscreteMeasure) else np.asarray(measure)
    if pts.shape[0] < 2:
        raise UndefinedSeparationError("minimum separation needs at least two atoms")
    dist = pairwise_distances(pts)
    return float(dist[np.triu_indices(pts.shape[0], k=1)].min())


def merge_close(measure: DiscreteMeasure, radius: float) -> DiscreteMeasure:
    """Single-linkage merge of atoms closer than ``radius``.

    Each cluster becomes one atom carrying the summed weight, placed at the
    |weight|-weighted mean of its members.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    k = len(measure)
    if k < 2 or radius == 0:
        return measure
    pts, w = measure.locations, measure.weights
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    dist = pairwise_distances(pts)
    for i, j in zip(*np.nonzero(np.triu(dist <= radius, k=1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    roots = [find(i) for i in range(k)]
    new_w, new_t = [], []
    for root in sorted(set(roots)):
        members = [i for i in range(k) if roots[i] == root]
        aw = np.abs(w[members])
        new_w.append(w[members].sum())
        new_t.append(aw @ pts[members] / aw.sum())
    return DiscreteMeasure(new_w, np.array(new_t), dim=measure.dim)


def is_probability(measure: DiscreteMeasure, atol: float = 1e-9) -> bool:
    return (
        len(measure) > 0
        and bool(np.all(measure.weights > 0))
        and abs(measure.weights.sum() - 1.0) <= atol
    )


def sample_mixture(
    truth: DiscreteMeasure, kernel: "MixingKernelSpec", n: int, seed: int
) -> Sample:
    """Draw ``n`` i.i.d. points ``U + E`` with ``U ~ truth`` and ``E ~ phi``.

    Randomness comes from a PCG64 stream seeded with ``seed``; component labels
    and noise are deterministic transforms of its uniforms.
    """
    if not is_probability(truth):
        raise InvalidMeasureError("truth must have positive weights summing to one")
    if kernel.dim != truth.dim:
        raise DimensionMismatchError("kernel and truth dimensions differ")
    if n < 0:
        raise ValueError("n must be nonnegative")
    gen = np.random.Generator(np.random.PCG64(seed))
    if n == 0:
        return Sample(np.zeros((0, truth.dim)), seed=seed, dim=truth.dim)
    cdf = np.cumsum(truth.weights)
    cdf[-1] = 1.0
    labels = np.searchsorted(cdf, gen.random(n), side="right")
    labels = np.minimum(labels, len(truth) - 1)
    noise = kernel.draw_noise(gen, n)
    return Sample(truth.locations[labels] + noise, seed=seed, dim=truth.dim)
