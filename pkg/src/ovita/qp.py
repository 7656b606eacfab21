"""Dense convex quadratic programming.

Solves

    minimize    0.5 x' P x + q' x
    subject to  G x <= h
                A x  = b

with P symmetric positive semidefinite. The algorithm is operator
splitting (ADMM) with over-relaxation and an adaptive penalty, followed by
an active-set polish that solves the KKT system of the identified active
constraints directly. A solve is only reported Optimal when the returned
iterate passes an absolute KKT residual check, so Optimal solutions are
certified, not assumed.

Everything is dense: the intended problem sizes (a few hundred waypoints,
n = 4N up to ~2000) factor in milliseconds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

__all__ = [
    "QpError",
    "DimensionMismatch",
    "NotPsd",
    "QpStatus",
    "QpProblem",
    "QpSolution",
    "SolverConfig",
    "solve",
    "kkt_residuals",
    "objective_value",
]


class QpError(ValueError):
    """Base class for problem construction errors."""


class DimensionMismatch(QpError):
    pass


class NotPsd(QpError):
    pass


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


def _as_matrix(m: Optional[np.ndarray], cols: int, name: str) -> np.ndarray:
    if m is None:
        return np.zeros((0, cols))
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return np.zeros((0, cols))
    if m.shape[1] != cols:
        raise DimensionMismatch(f"{name} has {m.shape[1]} columns, expected {cols}")
    return m


def _as_vector(v: Optional[np.ndarray], rows: int, name: str) -> np.ndarray:
    if v is None:
        if rows != 0:
            raise DimensionMismatch(f"{name} missing, expected length {rows}")
        return np.zeros(0)
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows:
        raise DimensionMismatch(f"{name} has length {v.size}, expected {rows}")
    return v


@dataclass(frozen=True)
class QpProblem:
    """Problem data. G/A may be empty (zero rows)."""

    P: np.ndarray
    q: np.ndarray
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionMismatch(f"P must be square, got shape {P.shape}")
        n = P.shape[0]
        scale = max(1.0, float(np.abs(P).max()) if P.size else 1.0)
        if float(np.abs(P - P.T).max() if P.size else 0.0) > 1e-10 * scale:
            raise QpError("P must be symmetric (within 1e-10 relative)")
        P = 0.5 * (P + P.T)  # kill representational asymmetry
        q = _as_vector(self.q, n, "q")
        G = _as_matrix(self.G, n, "G")
        h = _as_vector(self.h, G.shape[0], "h")
        A = _as_matrix(self.A, n, "A")
        b = _as_vector(self.b, A.shape[0], "b")
        for name, arr in (("P", P), ("q", q), ("G", G), ("h", h), ("A", A), ("b", b)):
            if arr.size and not np.all(np.isfinite(arr)):
                raise QpError(f"{name} contains non-finite entries")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class QpSolution:
    x_star: np.ndarray
    dual_ineq: np.ndarray
    dual_eq: np.ndarray
    status: QpStatus
    primal_residual: float
    dual_residual: float
    comp_residual: float
    iterations: int
    polished: bool


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration limits.

    Optimal status requires absolute KKT residuals below
    (eps_abs, eps_abs, eps_comp); eps_rel only loosens the inner ADMM
    stopping rule, never the final certificate.
    """

    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_comp: float = 1e-6
    max_iterations: int = 20_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6  # over-relaxation
    check_interval: int = 25
    adaptive_rho_interval: int = 100
    eps_infeasible: float = 1e-8
    polish: bool = True


def objective_value(problem: QpProblem, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ problem.P @ x + problem.q @ x)


def kkt_residuals(problem: QpProblem, solution: QpSolution) -> tuple[float, float, float]:
    """(primal, dual, complementarity) residuals of a candidate solution.

    primal: max violation of Gx <= h and |Ax - b| (0 if unconstrained)
    dual:   || Px + q + G'mu + A'nu ||_inf
    comp:   max_i | mu_i * (Gx - h)_i |
    """
    x = np.asarray(solution.x_star, dtype=float)
    mu = np.asarray(solution.dual_ineq, dtype=float)
    nu = np.asarray(solution.dual_eq, dtype=float)
    if x.size != problem.n:
        raise DimensionMismatch(f"x has length {x.size}, expected {problem.n}")
    if mu.size != problem.n_ineq or nu.size != problem.n_eq:
        raise DimensionMismatch("dual lengths inconsistent with problem")

    primal = 0.0
    comp = 0.0
    if problem.n_ineq:
        slack = problem.G @ x - problem.h
        primal = max(primal, float(np.max(slack, initial=0.0)))
        comp = float(np.max(np.abs(mu * slack), initial=0.0))
    if problem.n_eq:
        primal = max(primal, float(np.max(np.abs(problem.A @ x - problem.b), initial=0.0)))
    grad = problem.P @ x + problem.q
    if problem.n_ineq:
        grad = grad + problem.G.T @ mu
    if problem.n_eq:
        grad = grad + problem.A.T @ nu
    dual = float(np.max(np.abs(grad), initial=0.0))
    return primal, dual, comp


def _check_psd(P: np.ndarray) -> None:
    shifted = P + 1e-9 * np.eye(P.shape[0])
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError as exc:
        raise NotPsd("P is not positive semidefinite (Cholesky of P + 1e-9 I failed)") from exc


def _solve_unconstrained(problem: QpProblem, cfg: SolverConfig) -> QpSolution:
    # least-squares handles singular PSD P; residual check below decides status
    x, *_ = np.linalg.lstsq(problem.P, -problem.q, rcond=None)
    dual = float(np.max(np.abs(problem.P @ x + problem.q), initial=0.0))
    status = QpStatus.OPTIMAL if dual <= cfg.eps_abs else QpStatus.MAX_ITERATIONS
    return QpSolution(
        x_star=x,
        dual_ineq=np.zeros(0),
        dual_eq=np.zeros(0),
        status=status,
        primal_residual=0.0,
        dual_residual=dual,
        comp_residual=0.0,
        iterations=0,
        polished=False,
    )


class _KktSolver:
    """Regularized KKT solve with iterative refinement.

    Solves [[P, C'], [C, 0]] [x; lam] = rhs for an active-row matrix C.
    Regularization keeps the factorization well-posed when C has dependent
    rows; refinement iterates against the unregularized system.
    """

    def __init__(self, P: np.ndarray, C: np.ndarray, reg: float = 1e-9):
        n, ma = P.shape[0], C.shape[0]
        self.K = np.zeros((n + ma, n + ma))
        self.K[:n, :n] = P
        self.K[:n, n:] = C.T
        self.K[n:, :n] = C
        K_reg = self.K.copy()
        K_reg[:n, :n] += reg * np.eye(n)
        K_reg[n:, n:] -= reg * np.eye(ma)
        self.lu = scipy.linalg.lu_factor(K_reg, check_finite=False)

    def solve(self, rhs: np.ndarray, refine_steps: int = 3) -> np.ndarray:
        sol = scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)
        for _ in range(refine_steps):
            resid = rhs - self.K @ sol
            sol = sol + scipy.linalg.lu_solve(self.lu, resid, check_finite=False)
        return sol


def _try_polish(
    problem: QpProblem,
    cfg: SolverConfig,
    x: np.ndarray,
    y_ineq: np.ndarray,
) -> Optional[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Solve the KKT system of the guessed active set; None if it fails the check.

    Active inequality rows come from the ADMM duals plus any row with tiny
    slack. A few add/drop passes fix borderline misidentification.
    """
    n = problem.n
    G, h, A, b = problem.G, problem.h, problem.A, problem.b
    mi, me = problem.n_ineq, problem.n_eq

    if mi:
        slack = h - G @ x
        active = (y_ineq > 1e-9) | (slack <= 10 * cfg.eps_abs)
    else:
        active = np.zeros(0, dtype=bool)

    for _ in range(8):
        idx = np.flatnonzero(active)
        C = np.vstack([G[idx], A])
        rhs = np.concatenate([-problem.q, h[idx], b])
        try:
            kkt = _KktSolver(problem.P, C)
            sol = kkt.solve(rhs)
        except (np.linalg.LinAlgError, ValueError):
            return None
        x_pol = sol[:n]
        lam = sol[n:]
        mu_act = lam[: idx.size]
        if not np.all(np.isfinite(x_pol)) or not np.all(np.isfinite(lam)):
            return None

        # drop active rows with clearly negative multipliers
        if mu_act.size and np.min(mu_act) < -cfg.eps_abs:
            worst = idx[int(np.argmin(mu_act))]
            active[worst] = False
            continue
        # add clearly violated inactive rows
        if mi:
            viol = G @ x_pol - h
            viol[idx] = -np.inf
            if viol.size and np.max(viol) > cfg.eps_abs:
                active[int(np.argmax(viol))] = True
                continue

        mu = np.zeros(mi)
        mu[idx] = np.maximum(mu_act, 0.0)
        nu = lam[idx.size :]
        return x_pol, mu, nu
    return None


def _certify(
    problem: QpProblem, cfg: SolverConfig, x: np.ndarray, mu: np.ndarray, nu: np.ndarray
) -> tuple[bool, float, float, float]:
    probe = QpSolution(
        x_star=x,
        dual_ineq=mu,
        dual_eq=nu,
        status=QpStatus.MAX_ITERATIONS,
        primal_residual=np.nan,
        dual_residual=np.nan,
        comp_residual=np.nan,
        iterations=0,
        polished=False,
    )
    prim, dual, comp = kkt_residuals(problem, probe)
    ok = prim <= cfg.eps_abs and dual <= cfg.eps_abs and comp <= cfg.eps_comp
    return ok, prim, dual, comp


def solve(problem: QpProblem, cfg: SolverConfig | None = None) -> QpSolution:
    """Solve the QP. Deterministic: no randomness anywhere in the iteration.

    Returns a solution whose status is OPTIMAL only when the absolute KKT
    residual check passes, MAX_ITERATIONS with the best iterate otherwise,
    or INFEASIBLE when a primal infeasibility certificate is found.
    """
    cfg = cfg or SolverConfig()
    _check_psd(problem.P)

    n, mi, me = problem.n, problem.n_ineq, problem.n_eq
    m = mi + me
    if m == 0:
        return _solve_unconstrained(problem, cfg)

    C = np.vstack([problem.G, problem.A])
    lower = np.concatenate([np.full(mi, -np.inf), problem.b])
    upper = np.concatenate([problem.h, problem.b])

    # per-row penalty: equality rows get a much stiffer rho (standard trick)
    def rho_vec_for(rho: float) -> np.ndarray:
        rv = np.full(m, rho)
        rv[mi:] = rho * 1e3
        return rv

    rho = cfg.rho
    rho_vec = rho_vec_for(rho)

    def factorize(rv: np.ndarray):
        K = problem.P + cfg.sigma * np.eye(n) + (C.T * rv) @ C
        return scipy.linalg.cho_factor(K, check_finite=False)

    chol = factorize(rho_vec)

    x = np.zeros(n)
    z = np.clip(np.zeros(m), lower, upper)
    y = np.zeros(m)
    y_prev_check = y.copy()

    eps_abs_inner = cfg.eps_abs
    eps_rel_inner = cfg.eps_rel

    best = None  # (score, x, mu, nu, prim, dual, comp)

    def snapshot(x, y):
        mu = np.maximum(y[:mi], 0.0)
        nu = y[mi:].copy()
        ok, prim, dual, comp = _certify(problem, cfg, x, mu, nu)
        score = max(prim, dual, comp)
        return ok, (score, x.copy(), mu, nu, prim, dual, comp)

    iterations = 0
    for k in range(1, cfg.max_iterations + 1):
        iterations = k
        rhs = cfg.sigma * x - problem.q + C.T @ (rho_vec * z - y)
        x_tilde = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
        z_tilde = C @ x_tilde
        x_new = cfg.alpha * x_tilde + (1 - cfg.alpha) * x
        w = cfg.alpha * z_tilde + (1 - cfg.alpha) * z + y / rho_vec
        z_new = np.clip(w, lower, upper)
        y = y + rho_vec * (cfg.alpha * z_tilde + (1 - cfg.alpha) * z - z_new)
        x, z = x_new, z_new

        if k % cfg.check_interval == 0 or k == cfg.max_iterations:
            Cx = C @ x
            r_prim = float(np.max(np.abs(Cx - z), initial=0.0))
            grad = problem.P @ x + problem.q + C.T @ y
            r_dual = float(np.max(np.abs(grad), initial=0.0))
            prim_tol = eps_abs_inner + eps_rel_inner * max(
                np.max(np.abs(Cx), initial=0.0), np.max(np.abs(z), initial=0.0)
            )
            dual_tol = eps_abs_inner + eps_rel_inner * max(
                np.max(np.abs(problem.P @ x), initial=0.0),
                np.max(np.abs(problem.q), initial=0.0),
                np.max(np.abs(C.T @ y), initial=0.0),
            )

            # primal infeasibility certificate from the dual update direction
            dy = y - y_prev_check
            dy_norm = float(np.max(np.abs(dy), initial=0.0))
            if dy_norm > 1e-12:
                e = dy / dy_norm
                cert_grad = float(np.max(np.abs(C.T @ e), initial=0.0))
                one_sided_ok = mi == 0 or float(np.min(e[:mi])) >= -cfg.eps_infeasible
                support = float(problem.h @ np.maximum(e[:mi], 0.0)) if mi else 0.0
                support += float(problem.b @ e[mi:]) if me else 0.0
                if cert_grad <= cfg.eps_infeasible and one_sided_ok and support < -cfg.eps_infeasible:
                    mu = np.maximum(y[:mi], 0.0)
                    nu = y[mi:].copy()
                    _, prim, dual, comp = _certify(problem, cfg, x, mu, nu)
                    return QpSolution(
                        x_star=x,
                        dual_ineq=mu,
                        dual_eq=nu,
                        status=QpStatus.INFEASIBLE,
                        primal_residual=prim,
                        dual_residual=dual,
                        comp_residual=comp,
                        iterations=k,
                        polished=False,
                    )
            y_prev_check = y.copy()

            if r_prim <= prim_tol and r_dual <= dual_tol:
                if cfg.polish:
                    polished = _try_polish(problem, cfg, x, y[:mi])
                    if polished is not None:
                        x_pol, mu, nu = polished
                        ok, prim, dual, comp = _certify(problem, cfg, x_pol, mu, nu)
                        if ok:
                            return QpSolution(
                                x_star=x_pol,
                                dual_ineq=mu,
                                dual_eq=nu,
                                status=QpStatus.OPTIMAL,
                                primal_residual=prim,
                                dual_residual=dual,
                                comp_residual=comp,
                                iterations=k,
                                polished=True,
                            )
                ok, snap = snapshot(x, y)
                if best is None or snap[0] < best[0]:
                    best = snap
                if ok:
                    _, x_b, mu, nu, prim, dual, comp = snap
                    return QpSolution(
                        x_star=x_b,
                        dual_ineq=mu,
                        dual_eq=nu,
                        status=QpStatus.OPTIMAL,
                        primal_residual=prim,
                        dual_residual=dual,
                        comp_residual=comp,
                        iterations=k,
                        polished=False,
                    )
                # converged on the loose inner rule but failed the absolute
                # certificate: tighten and keep going
                eps_abs_inner = max(eps_abs_inner * 0.1, 1e-12)
                eps_rel_inner = max(eps_rel_inner * 0.1, 1e-12)

            if k % cfg.adaptive_rho_interval == 0 and r_dual > 0 and r_prim > 0:
                prim_rel = r_prim / max(
                    1e-12, max(np.max(np.abs(Cx), initial=0.0), np.max(np.abs(z), initial=0.0))
                )
                dual_rel = r_dual / max(
                    1e-12,
                    max(
                        np.max(np.abs(problem.P @ x), initial=0.0),
                        np.max(np.abs(problem.q), initial=0.0),
                        np.max(np.abs(C.T @ y), initial=0.0),
                    ),
                )
                ratio = np.sqrt(prim_rel / max(dual_rel, 1e-12))
                if ratio > 5.0 or ratio < 0.2:
                    rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                    rho_vec = rho_vec_for(rho)
                    chol = factorize(rho_vec)

    # out of iterations: one last polish attempt, then best iterate
    if cfg.polish:
        polished = _try_polish(problem, cfg, x, y[:mi])
        if polished is not None:
            x_pol, mu, nu = polished
            ok, prim, dual, comp = _certify(problem, cfg, x_pol, mu, nu)
            if ok:
                return QpSolution(
                    x_star=x_pol,
                    dual_ineq=mu,
                    dual_eq=nu,
                    status=QpStatus.OPTIMAL,
                    primal_residual=prim,
                    dual_residual=dual,
                    comp_residual=comp,
                    iterations=iterations,
                    polished=True,
                )
    _, snap = snapshot(x, y)
    if best is None or snap[0] < best[0]:
        best = snap
    _, x_b, mu, nu, prim, dual, comp = best
    return QpSolution(
        x_star=x_b,
        dual_ineq=mu,
        dual_eq=nu,
        status=QpStatus.MAX_ITERATIONS,
        primal_residual=prim,
        dual_residual=dual,
        comp_residual=comp,
        iterations=iterations,
        polished=False,
    )
