"""Exact computations for walks in periodic environments.

Tilted transfer operator on the period torus, Perron root by power
iteration on the two-step operator, rate function by Legendre transform,
stationary measure of the folded chain, and exact return probabilities by
forward dynamic programming (the brute-force oracle for everything else).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .env_model import PeriodicEnvironment, ProbVec, unit_vectors
from .errors import ConfigError, NonConvergenceError, ResourceCapError
from .rate_solver import solve_saddle

DP_CAPS = {1: 4000, 2: 400, 3: 60}
_DENSE_LIMIT = 2048


def env_id(env: PeriodicEnvironment) -> str:
    h = hashlib.sha1()
    h.update(np.array(env.period, dtype=np.int64).tobytes())
    h.update(env.table.tobytes())
    return h.hexdigest()[:12]


@dataclass(frozen=True)
class TorusOperator:
    """Tilted transition weights of the walk folded onto its period box."""

    env: PeriodicEnvironment
    theta: np.ndarray
    matrix: object = field(repr=False)  # dense ndarray or CSR, shape (S, S)

    @property
    def n_states(self) -> int:
        return self.env.n_sites


def torus_operator(env: PeriodicEnvironment, theta) -> TorusOperator:
    """Build M[x -> x+e mod n] = exp(<theta,e>) * omega(x,e) over the box."""
    d = env.dim
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (d,):
        raise ConfigError(f"tilt must have length {d}")
    period = env.period
    n_states = env.n_sites
    grids = np.meshgrid(*[np.arange(n) for n in period], indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=-1)
    moves = unit_vectors(d)
    rows, cols, vals = [], [], []
    weights = env.table.reshape(n_states, 2 * d)
    for k in range(2 * d):
        dest = (coords + moves[k]) % np.array(period)
        dest_flat = np.ravel_multi_index(dest.T, period)
        rows.append(np.arange(n_states))
        cols.append(dest_flat)
        vals.append(np.exp(theta @ moves[k]) * weights[:, k])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_states, n_states))
    if n_states <= _DENSE_LIMIT:
        mat = mat.toarray()
    return TorusOperator(env, theta, mat)


def _power_two_step(matrix, tol: float, max_iter: int, start=None):
    """Dominant eigenvalue of matrix^2 by power iteration, bipartite-safe."""
    n = matrix.shape[0]
    v = np.full(n, 1.0 / n) if start is None else np.maximum(start, 0.0)
    v = v / v.sum()
    lam = 0.0
    for it in range(max_iter):
        w = matrix @ (matrix @ v)
        nw = float(w.sum())
        w = w / nw
        if abs(nw - lam) < tol * max(1.0, abs(nw)):
            return nw, w, it + 1
        lam = nw
        v = w
    raise NonConvergenceError(f"power iteration did not settle within {max_iter} iterations")


def spectral_log_radius(op: TorusOperator, tol: float = 1e-13, max_iter: int = 200000, start=None) -> float:
    """log of the Perron root of the tilted operator.

    Nearest-neighbor walks make the one-step operator 2-periodic when the
    period has even components, so the iteration runs on the two-step
    operator and the resulting log is halved.
    """
    lam2, _, _ = _power_two_step(op.matrix, tol, max_iter, start)
    return 0.5 * float(np.log(lam2))


@dataclass(frozen=True)
class PeriodicRateReport:
    """Rate at the origin of a periodic environment with its certificates."""

    env_id: str
    rate0: float
    theta_at_min: np.ndarray
    curve: tuple  # sampled (theta, log_perron_root) pairs
    step0_bound: float
    step0_ok: bool
    dp_check: tuple | None = None  # (N, exact probability, fitted slope)


class _PerronObjective:
    """Warm-started Perron log-root as a function of the tilt."""

    def __init__(self, env: PeriodicEnvironment, power_tol: float = 1e-13):
        self.env = env
        self.power_tol = power_tol
        self._warm = None
        self.evals = 0

    def __call__(self, theta) -> float:
        op = torus_operator(self.env, theta)
        lam2, vec, _ = _power_two_step(op.matrix, self.power_tol, 200000, self._warm)
        self._warm = vec
        self.evals += 1
        return 0.5 * float(np.log(lam2))

    def gradient(self, theta, h: float = 1e-4) -> np.ndarray:
        """Central differences with one Richardson refinement step."""
        theta = np.asarray(theta, dtype=np.float64)
        out = np.zeros_like(theta)
        for k in range(len(theta)):
            e = np.zeros_like(theta)
            e[k] = h
            d1 = (self(theta + e) - self(theta - e)) / (2 * h)
            d2 = (self(theta + 2 * e) - self(theta - 2 * e)) / (4 * h)
            out[k] = (4.0 * d1 - d2) / 3.0
        return out


def _distinct_table_vectors(env: PeriodicEnvironment):
    rows = np.unique(env.table.reshape(-1, 2 * env.dim), axis=0)
    return [ProbVec(env.dim, r) for r in rows]


def periodic_rate0(
    env: PeriodicEnvironment,
    tol: float = 1e-6,
    theta0=None,
    dp_check_N: int | None = None,
    with_step0_bound: bool = True,
) -> PeriodicRateReport:
    """-inf over tilts of the Perron log-root, by descent.

    The gradient is estimated by central differences of the Perron root
    (smooth and simple, so finite differences are stable).  The known
    lower bound from the hull of the table entries is recomputed and
    checked against the result.
    """
    from scipy.optimize import minimize

    d = env.dim
    obj = _PerronObjective(env)
    if theta0 is None:
        mean_vec = ProbVec(d, env.table.reshape(-1, 2 * d).mean(axis=0))
        from .rate_solver import minimizer_theta

        theta0 = minimizer_theta(mean_vec)
    res = minimize(
        obj,
        np.asarray(theta0, dtype=np.float64),
        jac=lambda th: obj.gradient(th),
        method="BFGS",
        options={"gtol": max(tol * 1e-2, 1e-9), "maxiter": 300},
    )
    # the untilted operator is stochastic, so 0 tilt gives log-root 0
    candidates = [(float(res.fun), res.x), (0.0, np.zeros(d))]
    best_val, best_theta = min(candidates, key=lambda c: c[0])
    rate0 = -best_val + 0.0

    offsets = (-0.2, -0.1, 0.0, 0.1, 0.2)
    curve = []
    for k in range(d):
        for off in offsets:
            th = best_theta.copy()
            th[k] += off
            curve.append((tuple(th), obj(th) if off != 0.0 else best_val))

    step0 = 0.0
    step0_ok = True
    if with_step0_bound:
        vecs = _distinct_table_vectors(env)
        step0 = -solve_saddle(vecs, tol=max(tol, 1e-8)).value
        step0_ok = bool(rate0 >= step0 - 10 * tol)
    return PeriodicRateReport(
        env_id=env_id(env),
        rate0=float(rate0),
        theta_at_min=best_theta,
        curve=tuple(curve),
        step0_bound=float(step0),
        step0_ok=step0_ok,
        dp_check=_dp_check(env, dp_check_N) if dp_check_N else None,
    )


def _dp_check(env, N):
    Ns, probs, log_probs = return_probability_series(env, N)
    keep = np.isfinite(log_probs)
    rate, _, _ = fit_log_series(Ns[keep], log_probs[keep])
    return (int(Ns[-1]), float(probs[-1]), float(rate))


def periodic_rate(env: PeriodicEnvironment, x, tol: float = 1e-6) -> float:
    """Rate at velocity x: sup over tilts of <theta,x> - log Perron root."""
    from scipy.optimize import minimize

    x = np.asarray(x, dtype=np.float64)
    if np.abs(x).sum() > 1.0 + 1e-12:
        raise ConfigError(f"velocity {x} outside the reachable l1 ball")
    obj = _PerronObjective(env)

    def f(theta):
        return obj(theta) - theta @ x

    def g(theta):
        return obj.gradient(theta) - x

    res = minimize(f, np.zeros(env.dim), jac=g, method="BFGS", options={"gtol": max(tol * 1e-2, 1e-9), "maxiter": 300})
    if not res.success and np.abs(res.jac).max() > 1e-5:
        raise NonConvergenceError(f"Legendre maximization stalled: {res.message}")
    return float(max(-res.fun, 0.0))


def invariant_measure(env: PeriodicEnvironment, tol: float = 1e-12, max_iter: int = 500000) -> np.ndarray:
    """Stationary distribution of the walk folded onto the period box.

    Power iteration on the two-step chain, then averaged over the parity
    classes; the result mu satisfies mu M = mu (C-order over box sites).
    """
    op = torus_operator(env, np.zeros(env.dim))
    mat = op.matrix
    n = op.n_states
    mu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = (mu @ mat) @ mat
        nxt = nxt / nxt.sum()
        if np.abs(nxt - mu).max() < tol:
            mu = nxt
            break
        mu = nxt
    else:
        raise NonConvergenceError("stationary-measure iteration did not settle")
    pi = 0.5 * (mu + mu @ mat)
    pi = pi / pi.sum()
    if np.abs(pi @ mat - pi).max() > 1e-10:
        raise NonConvergenceError("stationary residual above 1e-10")
    return pi


def _site_step_weights(env, grid_lo, grid_shape, theta=None, center=None):
    """Per-site step probabilities over a dense grid, optionally tilted."""
    d = env.dim
    axes = [np.arange(lo, lo + n, dtype=np.int64) for lo, n in zip(grid_lo, grid_shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    if center is None:
        center = (0,) * d
    idx = tuple((m + c) % p for m, c, p in zip(mesh, center, env.period))
    w = env.table[idx]  # grid_shape + (2d,)
    if theta is not None:
        theta = np.asarray(theta, dtype=np.float64)
        moves = unit_vectors(d)
        w = w * np.exp(moves @ theta)
        w = w / w.sum(axis=-1, keepdims=True)
    return w


def _dp_dense(env, n_steps, radius, theta=None, center=None, record_even=False):
    """Forward mass recursion on the box |x|_inf <= radius around center.

    The mass array is renormalized against a running log-scale whenever it
    gets small, so recorded log-probabilities stay exact (to rounding) far
    below the double-precision underflow threshold.  The returned mass is
    the unscaled final array together with its log-scale; series entries
    are log-probabilities of returning to the center.
    """
    d = env.dim
    shape = (2 * radius + 1,) * d
    lo = (-radius,) * d
    w = _site_step_weights(env, lo, shape, theta, center)
    mass = np.zeros(shape)
    origin = (radius,) * d
    mass[origin] = 1.0
    log_scale = 0.0
    moves = unit_vectors(d)
    series = {}
    src = [slice(None)] * d
    dst = [slice(None)] * d
    for step in range(1, n_steps + 1):
        new = np.zeros_like(mass)
        for k in range(2 * d):
            axis = k // 2
            sgn = 1 if k % 2 == 0 else -1
            for a in range(d):
                src[a] = slice(None)
                dst[a] = slice(None)
            if sgn == 1:
                src[axis] = slice(0, shape[axis] - 1)
                dst[axis] = slice(1, shape[axis])
            else:
                src[axis] = slice(1, shape[axis])
                dst[axis] = slice(0, shape[axis] - 1)
            new[tuple(dst)] += mass[tuple(src)] * w[tuple(src) + (k,)]
        mass = new
        peak = float(mass.max())
        if 0.0 < peak < 1e-100:
            mass = mass / peak
            log_scale += float(np.log(peak))
        if record_even and step % 2 == 0:
            p = float(mass[origin])
            series[step] = (np.log(p) + log_scale) if p > 0.0 else -np.inf
    return mass, log_scale, series


def _dp_dense_log(env, n_steps, radius, theta=None, center=None, record_even=False):
    """Log-space variant of the dense recursion.

    Immune to underflow: the origin's log-probability is exact (to float
    rounding) even when it sits hundreds of orders of magnitude under the
    bulk of the distribution.  Slower by the cost of log-add-exp.
    """
    d = env.dim
    shape = (2 * radius + 1,) * d
    lo = (-radius,) * d
    with np.errstate(divide="ignore"):
        logw = np.log(_site_step_weights(env, lo, shape, theta, center))
    logmass = np.full(shape, -np.inf)
    origin = (radius,) * d
    logmass[origin] = 0.0
    series = {}
    src = [slice(None)] * d
    dst = [slice(None)] * d
    for step in range(1, n_steps + 1):
        new = np.full(shape, -np.inf)
        for k in range(2 * d):
            axis = k // 2
            sgn = 1 if k % 2 == 0 else -1
            for a in range(d):
                src[a] = slice(None)
                dst[a] = slice(None)
            if sgn == 1:
                src[axis] = slice(0, shape[axis] - 1)
                dst[axis] = slice(1, shape[axis])
            else:
                src[axis] = slice(1, shape[axis])
                dst[axis] = slice(0, shape[axis] - 1)
            s_idx, d_idx = tuple(src), tuple(dst)
            np.logaddexp(new[d_idx], logmass[s_idx] + logw[s_idx + (k,)], out=new[d_idx])
        logmass = new
        if record_even and step % 2 == 0:
            series[step] = float(logmass[origin])
    return logmass, series


def _dp_sparse(env, n_steps, radius, theta=None, center=None, record_even=False):
    """Dict-addressed front for d >= 3, exact but slower."""
    d = env.dim
    moves = unit_vectors(d)
    if center is None:
        center = (0,) * d
    theta_arr = None if theta is None else np.asarray(theta, dtype=np.float64)

    def site_w(x):
        row = env.site_probs(tuple(xi + c for xi, c in zip(x, center)))
        if theta_arr is None:
            return row
        w = row * np.exp(moves @ theta_arr)
        return w / w.sum()

    front = {(0,) * d: 1.0}
    series = {}
    for step in range(1, n_steps + 1):
        new: dict = {}
        for x, m in front.items():
            w = site_w(x)
            for k in range(2 * d):
                y = tuple(int(xi) + int(mi) for xi, mi in zip(x, moves[k]))
                if max(abs(v) for v in y) > radius:
                    continue
                new[y] = new.get(y, 0.0) + m * w[k]
        front = new
        if record_even and step % 2 == 0:
            p = front.get((0,) * d, 0.0)
            series[step] = float(np.log(p)) if p > 0.0 else -np.inf
    return front, 0.0, series


def exact_return_probability(env: PeriodicEnvironment, N: int, cap: int | None = None) -> float:
    """P(X_N = 0) for the walk started at 0, to double precision.

    Odd N returns exactly 0 by parity.  The dynamic program runs on the
    box |x|_inf <= N, which no N-step path can leave.
    """
    N = int(N)
    if N < 0:
        raise ConfigError("step count must be nonnegative")
    if N % 2 == 1:
        return 0.0
    if N == 0:
        return 1.0
    d = env.dim
    limit = cap if cap is not None else DP_CAPS.get(d, 40)
    if N > limit:
        raise ResourceCapError(f"N={N} exceeds the d={d} dynamic-programming cap {limit}")
    if d <= 2:
        mass, log_scale, _ = _dp_dense(env, N, N)
        p = float(mass[(N,) * d])
    else:
        front, log_scale, _ = _dp_sparse(env, N, N)
        p = float(front.get((0,) * d, 0.0))
    return float(np.exp(np.log(p) + log_scale)) if p > 0.0 else 0.0


def return_probability_series(env: PeriodicEnvironment, N_max: int, cap: int | None = None, center=None):
    """Exact return probabilities for every even N <= N_max, one sweep.

    Returns (Ns, probabilities, log_probabilities); the log column stays
    exact far below the double-precision underflow threshold, where the
    probability column degrades to 0.
    """
    N_max = int(N_max)
    d = env.dim
    limit = cap if cap is not None else DP_CAPS.get(d, 40)
    if N_max > limit:
        raise ResourceCapError(f"N={N_max} exceeds the d={d} dynamic-programming cap {limit}")
    if d <= 2:
        _, _, series = _dp_dense(env, N_max, N_max, center=center, record_even=True)
        if any(not np.isfinite(v) for v in series.values()):
            # the deep tail underflows the linear sweep; redo in log space
            _, series = _dp_dense_log(env, N_max, N_max, center=center, record_even=True)
    else:
        _, _, series = _dp_sparse(env, N_max, N_max, center=center, record_even=True)
    Ns = np.array(sorted(series), dtype=np.int64)
    log_probs = np.array([series[n] for n in Ns])
    with np.errstate(under="ignore"):
        probs = np.exp(log_probs)
    return Ns, probs, log_probs


def confined_return_log_probability(env: PeriodicEnvironment, n_steps: int, radius: int, theta=None, center=None) -> float:
    """log P(X_n = start, path confined to |x - start|_inf <= radius).

    Computed under the site-tilted law when a tilt is given; -inf for odd
    step counts.
    """
    if n_steps % 2 == 1:
        return -np.inf
    d = env.dim
    if d <= 2:
        mass, log_scale, _ = _dp_dense(env, n_steps, radius, theta=theta, center=center)
        p = float(mass[(radius,) * d])
    else:
        front, log_scale, _ = _dp_sparse(env, n_steps, radius, theta=theta, center=center)
        p = float(front.get((0,) * d, 0.0))
    return float(np.log(p) + log_scale) if p > 0.0 else -np.inf


def confined_return_probability(env: PeriodicEnvironment, n_steps: int, radius: int, theta=None, center=None) -> float:
    lp = confined_return_log_probability(env, n_steps, radius, theta, center)
    return float(np.exp(lp)) if lp > -np.inf else 0.0


def fit_log_series(Ns, log_probs):
    """Least-squares fit of log P against (N, log N, 1).

    Returns (rate, logn_coefficient, constant) where rate = -slope; the
    log N column absorbs the polynomial prefactor of the local limit.
    """
    Ns = np.asarray(Ns, dtype=np.float64)
    logp = np.asarray(log_probs, dtype=np.float64)
    A = np.column_stack((Ns, np.log(Ns), np.ones_like(Ns)))
    coef, *_ = np.linalg.lstsq(A, logp, rcond=None)
    return float(-coef[0]), float(coef[1]), float(coef[2])
