"""Lattice environment model.

Probability vectors on the 2d signed unit steps of Z^d, finitely supported
i.i.d. site laws, periodic environments, sampled finite windows, and the
nestling classification of a law by the convex hull of its atom drifts.

Conventions used throughout the package and in all serialized output:

* step order is +e_1, -e_1, +e_2, -e_2, ..., +e_d, -e_d;
* residues are the nonnegative representatives (lookup is total on Z^d);
* "interior" for the drift hull means topological interior in R^d
  (affine-rank test plus a strict-positivity LP with tolerance 1e-9).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog

from ._rng import site_uniform
from .errors import ClassificationError, ConfigError

PROB_TOL = 1e-12
INTERIOR_TOL = 1e-9


def unit_vectors(dim: int) -> np.ndarray:
    """The 2d signed unit vectors, ordered +e_1, -e_1, ..., +e_d, -e_d."""
    out = np.zeros((2 * dim, dim), dtype=np.int64)
    for i in range(dim):
        out[2 * i, i] = 1
        out[2 * i + 1, i] = -1
    return out


@dataclass(frozen=True)
class ProbVec:
    """A probability vector on the signed unit steps of Z^d."""

    dim: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64).copy()
        if probs.shape != (2 * self.dim,):
            raise ConfigError(f"expected {2 * self.dim} step probabilities, got shape {probs.shape}")
        if probs.min() < -PROB_TOL:
            raise ConfigError(f"negative step probability {probs.min()}")
        s = probs.sum()
        if abs(s - 1.0) > PROB_TOL:
            raise ConfigError(f"step probabilities sum to {s}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, dim: int) -> "ProbVec":
        return cls(dim, np.full(2 * dim, 1.0 / (2 * dim)))

    def min_entry(self) -> float:
        return float(self.probs.min())

    def is_elliptic(self, kappa: float) -> bool:
        return self.probs.min() >= kappa - PROB_TOL


def sup_distance(a: ProbVec, b: ProbVec) -> float:
    return float(np.abs(a.probs - b.probs).max())


def drift(p: ProbVec) -> np.ndarray:
    """Mean step of p: sum over steps e of p(e) * e."""
    return p.probs[0::2] - p.probs[1::2]


def mix(t, sigmas) -> ProbVec:
    """Entrywise convex combination of probability vectors by weights t."""
    t = np.asarray(t, dtype=np.float64)
    if len(t) != len(sigmas):
        raise ConfigError("weight/vector count mismatch")
    if t.min() < -PROB_TOL or abs(t.sum() - 1.0) > PROB_TOL:
        raise ConfigError(f"weights {t} are not a point of the simplex")
    probs = np.zeros_like(sigmas[0].probs)
    for ti, s in zip(t, sigmas):
        probs = probs + ti * s.probs
    return ProbVec(sigmas[0].dim, probs / probs.sum())


@dataclass(frozen=True)
class EnvironmentLaw:
    """Finitely supported i.i.d. site law: distinct atoms with positive weights."""

    dim: int
    atoms: tuple
    weights: np.ndarray
    kappa: float

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = np.asarray(self.weights, dtype=np.float64).copy()
        if len(atoms) == 0:
            raise ConfigError("a law needs at least one atom")
        if weights.shape != (len(atoms),):
            raise ConfigError("one weight per atom required")
        if weights.min() <= 0.0:
            raise ConfigError("atom weights must be positive")
        if abs(weights.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"atom weights sum to {weights.sum()}, not 1")
        if self.kappa <= 0.0:
            raise ConfigError("ellipticity constant must be positive")
        for a in atoms:
            if a.dim != self.dim:
                raise ConfigError("atom dimension mismatch")
            if not a.is_elliptic(self.kappa):
                raise ConfigError(f"atom with min entry {a.min_entry()} is not elliptic at {self.kappa}")
        for i in range(len(atoms)):
            for k in range(i + 1, len(atoms)):
                if sup_distance(atoms[i], atoms[k]) == 0.0:
                    raise ConfigError("atoms must be pairwise distinct")
        weights.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def cumulative_weights(self) -> np.ndarray:
        return np.cumsum(self.weights)


@dataclass(frozen=True)
class PeriodicEnvironment:
    """Environment determined by its values on the period box.

    table has shape period + (2d,): one probability vector per box site.
    """

    period: tuple
    table: np.ndarray

    def __post_init__(self):
        period = tuple(int(n) for n in self.period)
        if len(period) == 0 or any(n < 1 for n in period):
            raise ConfigError(f"invalid period {period}")
        d = len(period)
        table = np.asarray(self.table, dtype=np.float64).copy()
        if table.shape != period + (2 * d,):
            raise ConfigError(f"table shape {table.shape} does not match period {period}")
        sums = table.sum(axis=-1)
        if np.abs(sums - 1.0).max() > 1e-10:
            raise ConfigError("table rows must be probability vectors")
        if table.min() <= 0.0:
            raise ConfigError("table entries must share a positive ellipticity constant")
        table.flags.writeable = False
        object.__setattr__(self, "period", period)
        object.__setattr__(self, "table", table)

    @property
    def dim(self) -> int:
        return len(self.period)

    @property
    def kappa(self) -> float:
        return float(self.table.min())

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.period))

    def site_probs(self, x) -> np.ndarray:
        idx = tuple(int(xi) % ni for xi, ni in zip(x, self.period))
        return self.table[idx]

    @classmethod
    def homogeneous(cls, sigma: ProbVec) -> "PeriodicEnvironment":
        period = (1,) * sigma.dim
        return cls(period, sigma.probs.reshape(period + (2 * sigma.dim,)))


def periodic_lookup(env: PeriodicEnvironment, x) -> ProbVec:
    """Value at any lattice point, via componentwise nonnegative residues."""
    return ProbVec(env.dim, env.site_probs(x))


@dataclass(frozen=True)
class Box:
    """Axis-aligned lattice box with inclusive corners."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != len(hi) or any(l > h for l, h in zip(lo, hi)):
            raise ConfigError(f"empty or malformed box {lo}..{hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, x) -> bool:
        return all(l <= xi <= h for xi, l, h in zip(x, self.lo, self.hi))

    def coordinate_grid(self) -> np.ndarray:
        """Site coordinates, shape = box shape + (d,)."""
        axes = [np.arange(l, h + 1, dtype=np.int64) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @classmethod
    def centered(cls, dim: int, radius: int) -> "Box":
        return cls((-radius,) * dim, (radius,) * dim)


def atom_indices_at(law: EnvironmentLaw, coords, seed: int) -> np.ndarray:
    """Atom index per site, a pure function of (law weights, site, seed)."""
    u = site_uniform(seed, coords)
    idx = np.searchsorted(law.cumulative_weights(), u, side="right")
    return np.minimum(idx, len(law.atoms) - 1).astype(np.int64)


@dataclass(frozen=True)
class SampledEnvironment:
    """One realization of an i.i.d. law on a finite window."""

    law: EnvironmentLaw
    box: Box
    seed: int
    atom_index: np.ndarray = field(repr=False)

    def site_probs(self, x) -> np.ndarray:
        idx = tuple(int(xi) - l for xi, l in zip(x, self.box.lo))
        return self.law.atoms[int(self.atom_index[idx])].probs

    @property
    def dim(self) -> int:
        return self.box.dim


def sample_environment(law: EnvironmentLaw, box: Box, seed: int) -> SampledEnvironment:
    """Assign an atom independently to each site of the box.

    Deterministic in (law, box, seed); the assignment at a site does not
    depend on the box, so overlapping windows agree.
    """
    if box.dim != law.dim:
        raise ConfigError("box dimension does not match law")
    idx = atom_indices_at(law, box.coordinate_grid(), seed)
    idx.flags.writeable = False
    return SampledEnvironment(law, box, int(seed), idx)


@dataclass(frozen=True)
class TimePeriodicSchedule:
    """A k-tuple of jump laws applied cyclically in time."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ConfigError("schedule needs at least one entry")
        d = entries[0].dim
        if any(e.dim != d for e in entries):
            raise ConfigError("schedule entries must share a dimension")
        object.__setattr__(self, "entries", entries)
        support = []
        counts = []
        for e in entries:
            for i, s in enumerate(support):
                if sup_distance(e, s) == 0.0:
                    counts[i] += 1
                    break
            else:
                support.append(e)
                counts.append(1)
        object.__setattr__(self, "support", tuple(support))
        object.__setattr__(
            self, "frequencies", np.array(counts, dtype=np.float64) / len(entries)
        )

    @property
    def dim(self) -> int:
        return self.entries[0].dim


class NestlingClass(str, Enum):
    NESTLING = "Nestling"
    MARGINALLY_NESTLING = "MarginallyNestling"
    NON_NESTLING = "NonNestling"


def affine_rank(vectors: np.ndarray, tol: float = 1e-9) -> int:
    """Dimension of the affine hull of the rows."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[0] <= 1:
        return 0
    diffs = v[1:] - v[0]
    scale = max(1.0, float(np.abs(diffs).max()))
    return int(np.linalg.matrix_rank(diffs, tol=tol * scale))


def zero_in_hull(vectors: np.ndarray, tol: float = INTERIOR_TOL):
    """Position of the origin relative to the convex hull of the rows.

    Solves  max eps  s.t.  sum(w) = 1, w_i >= eps >= 0, sum_i w_i v_i = 0
    and returns (feasible, eps_star).  Infeasible means 0 is outside the
    hull; eps_star > tol means every generator can carry positive weight.
    """
    v = np.asarray(vectors, dtype=np.float64)
    j, m = v.shape
    # variables: w_1..w_j, eps
    c = np.zeros(j + 1)
    c[-1] = -1.0
    a_eq = np.zeros((m + 1, j + 1))
    a_eq[:m, :j] = v.T
    a_eq[m, :j] = 1.0
    b_eq = np.zeros(m + 1)
    b_eq[m] = 1.0
    a_ub = np.zeros((j, j + 1))
    a_ub[:, :j] = -np.eye(j)
    a_ub[:, -1] = 1.0
    b_ub = np.zeros(j)
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=[(0.0, 1.0)] * j + [(0.0, 1.0)],
        method="highs",
    )
    if res.status == 2:
        return False, 0.0
    if res.status != 0:
        raise ClassificationError(f"hull membership LP did not solve: {res.message}")
    return True, float(-res.fun)


def classify_drifts(drifts: np.ndarray, tol: float = INTERIOR_TOL) -> NestlingClass:
    """Classification of 0 against the convex hull of the given drift vectors."""
    drifts = np.atleast_2d(np.asarray(drifts, dtype=np.float64))
    d = drifts.shape[1]
    feasible, eps = zero_in_hull(drifts, tol)
    if not feasible:
        return NestlingClass.NON_NESTLING
    if eps > tol and affine_rank(drifts) == d:
        return NestlingClass.NESTLING
    return NestlingClass.MARGINALLY_NESTLING


def classify_law(law: EnvironmentLaw) -> NestlingClass:
    """Nestling / marginally nestling / non-nestling, on the drift hull."""
    return classify_drifts(np.array([drift(a) for a in law.atoms]))
