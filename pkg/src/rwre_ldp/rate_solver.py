"""Cumulant generating functions and rates at the origin.

Closed-form and numerical rates for a single jump law, exponential tilting,
the concave-convex saddle solver over (mixture weights, tilt), and the
variational rate of an i.i.d. law together with its maximizing mixture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .env_model import (
    INTERIOR_TOL,
    EnvironmentLaw,
    NestlingClass,
    ProbVec,
    TimePeriodicSchedule,
    affine_rank,
    classify_law,
    drift,
    mix,
    sup_distance,
    zero_in_hull,
)
from .errors import DegenerateInputError, NonConvergenceError


def _signed_exponents(theta: np.ndarray) -> np.ndarray:
    # <theta, e> for e in step order +e_1, -e_1, ..., +e_d, -e_d
    theta = np.asarray(theta, dtype=np.float64)
    return np.column_stack((theta, -theta)).ravel()


def log_mgf(sigma: ProbVec, theta) -> float:
    """log of sum_e exp(<theta, e>) sigma(e), overflow-safe."""
    return float(logsumexp(_signed_exponents(theta), b=sigma.probs))


def rate_at_zero_closed(sigma: ProbVec) -> float:
    """-log sum_e sqrt(sigma(e) sigma(-e)); requires strictly positive entries."""
    if sigma.probs.min() <= 0.0:
        raise DegenerateInputError("closed-form rate needs strictly positive entries")
    p = sigma.probs[0::2]
    q = sigma.probs[1::2]
    return float(-np.log(2.0 * np.sum(np.sqrt(p * q))))


def minimizer_theta(sigma: ProbVec) -> np.ndarray:
    """The unique tilt at which the log-MGF attains its minimum."""
    if sigma.probs.min() <= 0.0:
        raise DegenerateInputError("tilt minimizer needs strictly positive entries")
    p = sigma.probs[0::2]
    q = sigma.probs[1::2]
    return 0.5 * np.log(q / p)


def tilt(sigma: ProbVec, theta) -> ProbVec:
    """Exponentially tilted law; normalization is exact by construction."""
    w = sigma.probs * np.exp(_signed_exponents(theta))
    return ProbVec(sigma.dim, w / w.sum())


def _tilted_drift(probs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    w = probs * np.exp(_signed_exponents(theta))
    w = w / w.sum()
    return w[0::2] - w[1::2]


def _log_mgf_hessian(probs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    w = probs * np.exp(_signed_exponents(theta))
    w = w / w.sum()
    diag = w[0::2] + w[1::2]
    dr = w[0::2] - w[1::2]
    return np.diag(diag) - np.outer(dr, dr)


def rate_at_zero_numeric(sigma: ProbVec, grad_tol: float = 1e-10, max_iter: int = 2000) -> float:
    """Rate at the origin by descent on the log-MGF.

    BFGS followed by a Newton polish on the analytic gradient; stops on
    gradient norm <= grad_tol.  Works for degenerate vectors too (their
    infimum may only be attained in the limit of large tilts).
    """
    probs = sigma.probs

    def f(theta):
        return logsumexp(_signed_exponents(theta), b=probs)

    def g(theta):
        return _tilted_drift(probs, theta)

    res = minimize(
        f,
        np.zeros(sigma.dim),
        jac=g,
        method="BFGS",
        options={"gtol": grad_tol, "maxiter": max_iter},
    )
    theta = res.x
    for _ in range(30):
        grad = g(theta)
        if np.abs(grad).max() <= grad_tol:
            break
        hess = _log_mgf_hessian(probs, theta)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if np.abs(step).max() > 1.0:  # degenerate inputs push the minimum to infinity
            step = step / np.abs(step).max()
        theta = theta - step
    value = f(theta)
    if np.abs(g(theta)).max() > 10 * grad_tol:
        raise NonConvergenceError(
            f"log-MGF descent stalled at gradient {np.abs(g(theta)).max():.2e}", best=-value
        )
    return float(-value)


@dataclass(frozen=True)
class SaddlePoint:
    """Saddle of the mixture log-MGF over (simplex weights, tilt)."""

    t_star: np.ndarray
    theta_star: np.ndarray
    value: float
    gap: float
    iterations: int


def mixture_log_mgf(t, sigmas, theta) -> float:
    """log sum_i t_i sum_e exp(<theta,e>) sigma_i(e)."""
    m = mix(t, sigmas)
    return log_mgf(m, theta)


def _sup_log_mgf(sig: np.ndarray, theta: np.ndarray) -> float:
    # max over atoms of the single-atom log-MGF (the outer envelope R_1)
    exps = _signed_exponents(theta)
    return float(np.max(np.log(sig @ np.exp(exps))))


def _mixture_min_value(t: np.ndarray, sig: np.ndarray) -> float:
    # inf over tilts for fixed weights (the inner envelope R_2), closed form
    m = t @ sig
    return float(np.log(2.0 * np.sum(np.sqrt(m[0::2] * m[1::2]))))


def _mixture_min_grad(t: np.ndarray, sig: np.ndarray) -> np.ndarray:
    m = t @ sig
    mo = np.empty_like(m)
    mo[0::2] = m[1::2]
    mo[1::2] = m[0::2]
    z = np.sum(np.sqrt(m * mo))
    return (sig @ np.sqrt(mo / m)) / z


def _smoothed_sup_descent(sig: np.ndarray, dim: int, theta0: np.ndarray):
    """Minimize the atomwise max log-MGF via log-sum-exp smoothing.

    Temperature continuation (beta doubling 8 -> 4096) followed by taking
    the smoothed minimizer as a polish candidate for the true max.
    """
    exps_dir = None
    theta = theta0.copy()
    total_iters = 0

    def make(beta):
        def f(th):
            vals = np.log(sig @ np.exp(_signed_exponents(th)))
            return logsumexp(beta * vals) / beta

        def g(th):
            vals = np.log(sig @ np.exp(_signed_exponents(th)))
            w = np.exp(beta * (vals - vals.max()))
            w /= w.sum()
            out = np.zeros(dim)
            for wi, row in zip(w, sig):
                out += wi * _tilted_drift(row, th)
            return out

        return f, g

    beta = 8.0
    while beta <= 4096.0:
        f, g = make(beta)
        res = minimize(f, theta, jac=g, method="BFGS", options={"gtol": 1e-10, "maxiter": 300})
        theta = res.x
        total_iters += int(res.nit)
        beta *= 2.0
    return theta, total_iters


def _mirror_ascent(sig: np.ndarray, t0: np.ndarray, n_steps: int = 400):
    """Entropic mirror ascent on the inner envelope, step 1/sqrt(k).

    Multiplicative updates keep the iterates strictly inside the simplex.
    """
    t = t0.copy()
    for k in range(1, n_steps + 1):
        g = _mixture_min_grad(t, sig)
        t = t * np.exp((1.0 / np.sqrt(k)) * (g - g.max()))
        t = t / t.sum()
    return t, n_steps


def _simplex_polish(sig: np.ndarray, t0: np.ndarray):
    j = sig.shape[0]
    res = minimize(
        lambda t: -_mixture_min_value(t, sig),
        t0,
        jac=lambda t: -_mixture_min_grad(t, sig),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * j,
        constraints=[{"type": "eq", "fun": lambda t: t.sum() - 1.0, "jac": lambda t: np.ones(j)}],
        options={"ftol": 1e-16, "maxiter": 500},
    )
    t = np.clip(res.x, 0.0, None)
    t[t < 1e-15] = 0.0
    return t / t.sum(), int(res.nit)


def solve_saddle(sigmas, tol: float = 1e-6) -> SaddlePoint:
    """Saddle point of the mixture log-MGF, certified by its duality gap.

    The tilt side descends the smoothed atomwise max with temperature
    continuation; the weight side runs entropic mirror ascent and is then
    polished to solver precision on the simplex.  The reported gap is
    sup-envelope(theta*) minus inf-envelope(t*), always >= 0; the solve
    only succeeds if it is <= tol.
    """
    sigmas = list(sigmas)
    j = len(sigmas)
    if j == 0:
        raise ValueError("need at least one jump law")
    dim = sigmas[0].dim
    for a in range(j):
        if sigmas[a].probs.min() <= 0.0:
            raise DegenerateInputError("saddle solver needs elliptic inputs")
        for b in range(a + 1, j):
            if sup_distance(sigmas[a], sigmas[b]) == 0.0:
                raise ValueError("jump laws must be distinct")
    if j == 1:
        theta = minimizer_theta(sigmas[0])
        value = -rate_at_zero_closed(sigmas[0])
        return SaddlePoint(np.array([1.0]), theta, value, 0.0, 0)

    sig = np.array([s.probs for s in sigmas])
    iterations = 0

    theta0 = minimizer_theta(mix(np.full(j, 1.0 / j), sigmas))
    theta_smooth, it = _smoothed_sup_descent(sig, dim, theta0)
    iterations += it

    t, it = _mirror_ascent(sig, np.full(j, 1.0 / j))
    iterations += it
    t, it = _simplex_polish(sig, t)
    iterations += it

    def assemble(t_hat, theta_candidates):
        r2 = _mixture_min_value(t_hat, sig)
        best_theta, best_r1 = None, np.inf
        for th in theta_candidates:
            r1 = _sup_log_mgf(sig, th)
            if r1 < best_r1:
                best_theta, best_r1 = th, r1
        value = mixture_log_mgf(t_hat, sigmas, best_theta)
        return SaddlePoint(t_hat, best_theta, value, best_r1 - r2, iterations)

    theta_closed = minimizer_theta(mix(t, sigmas))
    point = assemble(t, [theta_closed, theta_smooth])
    if point.gap <= tol:
        return point

    # retry the polish from fresh starts before giving up
    best = point
    for start in [np.full(j, 1.0 / j)] + [np.eye(j)[i] * 0.9 + 0.1 / j for i in range(j)]:
        t_retry, it = _simplex_polish(sig, start / start.sum())
        iterations += it
        cand = assemble(t_retry, [minimizer_theta(mix(t_retry, sigmas)), theta_smooth])
        if cand.gap < best.gap:
            best = cand
        if best.gap <= tol:
            return best
    raise NonConvergenceError(f"duality gap {best.gap:.3e} above tolerance {tol:.1e}", best=best)


@dataclass(frozen=True)
class RateReport:
    """Rate at the origin of an i.i.d. law and its maximizing mixture."""

    i0: float
    p_star: ProbVec
    on_boundary: bool
    classification: NestlingClass
    saddle: SaddlePoint
    drift_is_zero: bool
    consistency_residual: float


def pstar_boundary_check(law: EnvironmentLaw, p_star: ProbVec) -> bool:
    """True iff p_star is not interior to the hull of the law's atoms.

    Interior is relative to the affine hull of the probability simplex,
    decided by the same rank-plus-positivity LP as the classification.
    """
    vectors = np.array([a.probs - p_star.probs for a in law.atoms])
    full_dim = 2 * law.dim - 1
    feasible, eps = zero_in_hull(vectors)
    if not feasible:
        return True
    atoms = np.array([a.probs for a in law.atoms])
    return not (eps > INTERIOR_TOL and affine_rank(atoms) == full_dim)


def variational_I0(law: EnvironmentLaw, tol: float = 1e-6) -> RateReport:
    """Rate at the origin over the convex hull of the law's support."""
    saddle = solve_saddle(list(law.atoms), tol)
    p_star = mix(saddle.t_star, law.atoms)
    i0 = max(0.0, -saddle.value)  # the value is <= 0 up to roundoff
    residual = abs(i0 - rate_at_zero_closed(p_star))
    if residual > tol:
        raise NonConvergenceError(
            f"rate/maximizer inconsistency {residual:.3e} above {tol:.1e}", best=saddle
        )
    return RateReport(
        i0=float(i0),
        p_star=p_star,
        on_boundary=pstar_boundary_check(law, p_star),
        classification=classify_law(law),
        saddle=saddle,
        drift_is_zero=bool(np.abs(drift(p_star)).max() <= 10 * tol),
        consistency_residual=float(residual),
    )


def time_periodic_rate0(schedule: TimePeriodicSchedule, tol: float = 1e-6) -> float:
    """Rate at the origin of a walk whose jump law cycles in time.

    Equals -inf over tilts of the frequency-weighted sum of the support
    log-MGFs; found by smooth descent.
    """
    support = schedule.support
    lam = schedule.frequencies
    sig = np.array([s.probs for s in support])
    dim = schedule.dim

    def f(theta):
        exps = _signed_exponents(theta)
        return float(lam @ np.log(sig @ np.exp(exps)))

    def g(theta):
        out = np.zeros(dim)
        for li, row in zip(lam, sig):
            out += li * _tilted_drift(row, theta)
        return out

    res = minimize(f, np.zeros(dim), jac=g, method="BFGS", options={"gtol": min(1e-10, tol), "maxiter": 2000})
    if np.abs(res.jac).max() > 1e-8:
        raise NonConvergenceError(f"time-periodic descent stalled at gradient {np.abs(res.jac).max():.2e}")
    return float(-res.fun)
