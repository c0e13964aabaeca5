"""Sparse primal-dual interior-point solver for smooth constrained NLPs.

Consumes problem objects exposing::

    n_vars, n_eq, n_ineq            -- sizes
    bounds() -> (lb, ub)            -- +-inf allowed
    evaluate(x) -> (f, c, J, grad)  -- c stacks equalities then inequalities
                                       (inequalities in c_I(x) >= 0 form),
                                       J sparse, grad dense
    lagrangian_hessian(x, obj_w, lam) -> sparse symmetric n_vars x n_vars
                                       (optional; zero curvature assumed
                                       when absent)

Inequalities get slack variables, bounds a log barrier; the barrier
parameter follows a monotone Fiacco-McCormick schedule and steps are
globalized with a filter line search plus a least-squares feasibility
restoration fallback. Everything is deterministic: fixed pivot ordering,
no randomized state.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger("gridimp.solver")

_BIG = 1e20


@dataclass(frozen=True)
class SolveOptions:
    kkt_tolerance: float = 1e-8
    max_iterations: int = 1000
    scaling: bool = True
    # the solver has no stochastic state; the flag documents the contract
    # and is kept for configuration compatibility
    deterministic: bool = True
    mu_init: float = 0.1
    # complementarity is polished below the KKT tolerance so that sums of
    # many epigraph residuals stay small at reported optima
    mu_final_factor: float = 1e-3
    max_regularization: float = 1e40

    def __post_init__(self):
        if self.kkt_tolerance <= 0:
            raise ValueError("kkt_tolerance must be > 0")


@dataclass
class SolveResult:
    status: str  # optimal | max_iter | infeasible | numerical_failure
    x: np.ndarray
    objective: float
    kkt: dict
    iterations: int
    wall_time_s: float
    message: str = ""
    iterate_log: list = field(default_factory=list, repr=False)
    multipliers: dict = field(default_factory=dict, repr=False)


class _Canonical:
    """Slack-augmented, optionally row/objective-scaled view of a problem."""

    def __init__(self, problem, x0: np.ndarray, scaling: bool):
        self.base = problem
        self.nx = problem.n_vars
        self.m_eq = problem.n_eq
        self.m_in = problem.n_ineq
        self.n = self.nx + self.m_in
        self.m = self.m_eq + self.m_in

        lb, ub = problem.bounds()
        self.lb = np.concatenate([np.asarray(lb, dtype=float), np.zeros(self.m_in)])
        self.ub = np.concatenate([np.asarray(ub, dtype=float), np.full(self.m_in, np.inf)])

        f0, c0, j0, g0 = problem.evaluate(x0)
        self.row_scale = np.ones(self.m)
        self.obj_scale = 1.0
        if scaling and self.m:
            row_max = np.abs(j0).max(axis=1).toarray().ravel() if j0.nnz else np.zeros(self.m)
            self.row_scale = np.minimum(1.0, 100.0 / np.maximum(row_max, 1e-12))
        if scaling:
            gmax = np.max(np.abs(g0)) if g0.size else 1.0
            self.obj_scale = min(1.0, 100.0 / max(gmax, 1e-12))
        self._slack_eye = sp.eye(self.m_in, format="csr")

    def split(self, x_aug: np.ndarray) -> np.ndarray:
        return x_aug[: self.nx]

    def evaluate(self, x_aug: np.ndarray):
        x = x_aug[: self.nx]
        s = x_aug[self.nx :]
        f, c, j, g = self.base.evaluate(x)
        c = c * self.row_scale
        j = sp.diags(self.row_scale) @ j
        cc = c.copy()
        cc[self.m_eq :] -= s  # inequalities become c_I(x) - s = 0, s >= 0
        # build augmented Jacobian [[J_E, 0], [J_I, -I]]
        j = j.tocsr()
        if self.m_in:
            top = sp.hstack([j[: self.m_eq], sp.csr_matrix((self.m_eq, self.m_in))])
            bot = sp.hstack([j[self.m_eq :], -self._slack_eye])
            j_aug = sp.vstack([top, bot], format="csr") if self.m_eq else bot.tocsr()
        else:
            j_aug = j
        g_aug = np.concatenate([g * self.obj_scale, np.zeros(self.m_in)])
        return f * self.obj_scale, cc, j_aug, g_aug

    def objective_unscaled(self, x_aug: np.ndarray) -> float:
        f, _, _, _ = self.base.evaluate(x_aug[: self.nx])
        return f

    def hessian(self, x_aug: np.ndarray, lam: np.ndarray) -> sp.csr_matrix:
        if not hasattr(self.base, "lagrangian_hessian"):
            return sp.csr_matrix((self.n, self.n))
        h = self.base.lagrangian_hessian(
            x_aug[: self.nx], self.obj_scale, lam * self.row_scale
        )
        if self.m_in:
            h = sp.bmat(
                [[h, None], [None, sp.csr_matrix((self.m_in, self.m_in))]], format="csr"
            )
        return h.tocsr()


def _push_interior(x, lb, ub, kappa1=1e-2, kappa2=1e-2):
    x = np.array(x, dtype=float)
    has_lo = lb > -_BIG
    has_up = ub < _BIG
    both = has_lo & has_up
    width = np.where(both, ub - lb, np.inf)
    pl = np.where(has_lo, np.minimum(kappa1 * np.maximum(1.0, np.abs(lb)), kappa2 * width), 0.0)
    pu = np.where(has_up, np.minimum(kappa1 * np.maximum(1.0, np.abs(ub)), kappa2 * width), 0.0)
    x = np.where(has_lo, np.maximum(x, lb + pl), x)
    x = np.where(has_up, np.minimum(x, ub - pu), x)
    return x


class _Ipm:
    def __init__(self, canon: _Canonical, opts: SolveOptions):
        self.c = canon
        self.o = opts
        self.has_lo = canon.lb > -_BIG
        self.has_up = canon.ub < _BIG
        self.n_bnd = int(self.has_lo.sum() + self.has_up.sum())
        self.mu_final = (
            max(1e-13, opts.kkt_tolerance * opts.mu_final_factor) if self.n_bnd else np.inf
        )

    # margins with +inf placeholders on absent bounds
    def _margins(self, x):
        dl = np.where(self.has_lo, x - self.c.lb, np.inf)
        du = np.where(self.has_up, self.c.ub - x, np.inf)
        return dl, du

    def _barrier(self, f, dl, du, mu):
        t = 0.0
        if self.has_lo.any():
            t += np.sum(np.log(dl[self.has_lo]))
        if self.has_up.any():
            t += np.sum(np.log(du[self.has_up]))
        return f - mu * t

    def _kkt_error(self, g, j, c, y, zl, zu, dl, du, mu):
        r_stat = g + (j.T @ y if c.size else 0.0) - zl + zu
        denom = max(1, self.c.m + self.n_bnd)
        s_d = max(100.0, (np.abs(y).sum() + zl.sum() + zu.sum()) / denom) / 100.0
        s_c = max(100.0, (zl.sum() + zu.sum()) / max(1, self.n_bnd)) / 100.0
        comp = 0.0
        if self.has_lo.any():
            comp = max(comp, np.max(np.abs(dl[self.has_lo] * zl[self.has_lo] - mu)))
        if self.has_up.any():
            comp = max(comp, np.max(np.abs(du[self.has_up] * zu[self.has_up] - mu)))
        inf_pr = np.max(np.abs(c)) if c.size else 0.0
        inf_du = np.max(np.abs(r_stat)) / s_d if r_stat.size else 0.0
        return max(inf_du, inf_pr, comp / s_c), inf_pr, inf_du, comp / s_c

    def solve(self, x0: np.ndarray) -> SolveResult:
        t_start = time.perf_counter()
        o, c = self.o, self.c
        tol = o.kkt_tolerance

        x = _push_interior(x0, c.lb, c.ub)
        mu = o.mu_init
        f, cv, j, g = c.evaluate(x)
        dl, du = self._margins(x)
        y = np.zeros(c.m)
        zl = np.where(self.has_lo, mu / np.where(self.has_lo, dl, 1.0), 0.0)
        zu = np.where(self.has_up, mu / np.where(self.has_up, du, 1.0), 0.0)

        theta = np.abs(cv).sum() if cv.size else 0.0
        theta_min = 1e-4 * max(1.0, theta)
        theta_max = 1e4 * max(1.0, theta)
        filt: list[tuple[float, float]] = [(theta_max, -np.inf)]
        phi = self._barrier(f, dl, du, mu)

        delta_w_last = 0.0
        iterate_log = []
        status, message = "max_iter", ""
        it = 0
        for it in range(1, o.max_iterations + 1):
            err0, inf_pr, inf_du, comp0 = self._kkt_error(g, j, cv, y, zl, zu, dl, du, 0.0)
            if err0 <= tol and mu <= self.mu_final:
                status, message = "optimal", "KKT conditions satisfied"
                break
            if self.n_bnd:
                err_mu, _, _, _ = self._kkt_error(g, j, cv, y, zl, zu, dl, du, mu)
                while err_mu <= 10.0 * mu and mu > self.mu_final:
                    mu = max(self.mu_final, min(0.2 * mu, mu**1.5))
                    phi = self._barrier(f, dl, du, mu)
                    filt = [(theta_max, -np.inf)]
                    err_mu, _, _, _ = self._kkt_error(g, j, cv, y, zl, zu, dl, du, mu)

            sigma = np.zeros(c.n)
            sigma[self.has_lo] += zl[self.has_lo] / dl[self.has_lo]
            sigma[self.has_up] += zu[self.has_up] / du[self.has_up]
            grad_phi = g.copy()
            grad_phi[self.has_lo] -= mu / dl[self.has_lo]
            grad_phi[self.has_up] += mu / du[self.has_up]

            try:
                w = c.hessian(x, y)
            except Exception as exc:  # domain errors at extreme trial points
                return self._fail(x, f, it, t_start, iterate_log, f"hessian failure: {exc}")

            dx = dy = None
            delta_w = 0.0
            delta_c = 1e-10
            for attempt in range(60):
                kkt = sp.bmat(
                    [
                        [w + sp.diags(sigma + delta_w), j.T if c.m else None],
                        [j if c.m else None, -delta_c * sp.eye(c.m) if c.m else None],
                    ],
                    format="csc",
                )
                rhs = -np.concatenate([grad_phi + (j.T @ y if c.m else 0.0), cv])
                try:
                    lu = spla.splu(kkt, permc_spec="COLAMD")
                    sol = lu.solve(rhs)
                except (RuntimeError, ValueError):
                    sol = None
                if sol is not None and np.all(np.isfinite(sol)):
                    dx = sol[: c.n]
                    dy = sol[c.n :]
                    # inertia surrogate: demand positive curvature along the
                    # step, as an LDL' inertia count would
                    wdx = w @ dx
                    curv = dx @ wdx + np.sum((sigma + delta_w) * dx * dx)
                    if curv > -1e-12 * max(1.0, abs(dx @ wdx)) or np.linalg.norm(dx) < 1e-14:
                        break
                if delta_w == 0.0:
                    delta_w = 1e-4 if delta_w_last == 0.0 else max(1e-6, delta_w_last / 3.0)
                else:
                    delta_w *= 8.0
                delta_c = max(delta_c, 1e-8 * max(1.0, mu**0.25))
                if delta_w > o.max_regularization:
                    return self._fail(
                        x, f, it, t_start, iterate_log, "regularization limit reached"
                    )
            else:
                return self._fail(x, f, it, t_start, iterate_log, "no usable step direction")
            if delta_w > 0.0:
                delta_w_last = delta_w

            dzl = np.zeros_like(zl)
            dzu = np.zeros_like(zu)
            dzl[self.has_lo] = (
                mu / dl[self.has_lo] - zl[self.has_lo] - zl[self.has_lo] / dl[self.has_lo] * dx[self.has_lo]
            )
            dzu[self.has_up] = (
                mu / du[self.has_up] - zu[self.has_up] + zu[self.has_up] / du[self.has_up] * dx[self.has_up]
            )

            tau = max(0.99, 1.0 - mu)
            alpha_max = _fraction_to_boundary(dl, du, dx, self.has_lo, self.has_up, tau)
            alpha_z = min(
                _max_step_nonneg(zl[self.has_lo], dzl[self.has_lo], tau),
                _max_step_nonneg(zu[self.has_up], dzu[self.has_up], tau),
            )

            accepted = False
            alpha = alpha_max
            m_phi = grad_phi @ dx
            soc_tried = False
            theta_cap = max(10.0 * theta, 100.0 * tol)
            for _ls in range(60):
                x_t = x + alpha * dx
                try:
                    f_t, c_t, j_t, g_t = c.evaluate(x_t)
                except Exception:
                    alpha *= 0.5
                    continue
                if not (np.isfinite(f_t) and np.all(np.isfinite(c_t))):
                    alpha *= 0.5
                    continue
                dl_t, du_t = self._margins(x_t)
                theta_t = np.abs(c_t).sum() if c_t.size else 0.0
                ok_cap = theta_t <= min(theta_max, theta_cap)
                if not ok_cap and not soc_tried and alpha == alpha_max and c.m:
                    # one second-order correction from the same factorization
                    soc_tried = True
                    rhs_soc = -np.concatenate([np.zeros(c.n), c_t])
                    corr = lu.solve(rhs_soc)[: c.n]
                    a_soc = _fraction_to_boundary(
                        dl, du, alpha * dx + corr, self.has_lo, self.has_up, tau
                    )
                    x_s = x + a_soc * (alpha * dx + corr)
                    try:
                        f_s, c_s, j_s, g_s = c.evaluate(x_s)
                        th_s = np.abs(c_s).sum()
                        if np.isfinite(f_s) and np.all(np.isfinite(c_s)) and th_s < theta_t:
                            x_t, f_t, c_t, j_t, g_t, theta_t = x_s, f_s, c_s, j_s, g_s, th_s
                            dl_t, du_t = self._margins(x_t)
                    except Exception:
                        pass
                phi_t = self._barrier(f_t, dl_t, du_t, mu)
                if theta_t > min(theta_max, theta_cap) or _in_filter(filt, theta_t, phi_t):
                    alpha *= 0.5
                    continue
                f_type = (
                    m_phi < 0
                    and theta <= theta_min
                    and alpha * (-m_phi) ** 2.3 > 1.0 * theta**1.1
                )
                if f_type:
                    if phi_t <= phi + 1e-4 * alpha * m_phi:
                        accepted = True
                else:
                    if theta_t <= (1 - 1e-5) * theta or phi_t <= phi - 1e-5 * theta:
                        accepted = True
                        filt.append(((1 - 1e-5) * theta, phi - 1e-5 * theta))
                if accepted:
                    break
                alpha *= 0.5
                if alpha < 1e-12:
                    break

            if not accepted:
                # feasibility restoration, then resume
                x_r, ok = self._restore(x, theta)
                if not ok:
                    elapsed = time.perf_counter() - t_start
                    kkt_d = {
                        "stationarity": inf_du,
                        "primal_feasibility": inf_pr,
                        "complementarity": comp0,
                    }
                    return SolveResult(
                        "infeasible",
                        c.split(x),
                        c.objective_unscaled(x),
                        kkt_d,
                        it,
                        elapsed,
                        "restoration could not reduce constraint violation",
                        iterate_log,
                    )
                x = x_r
                f, cv, j, g = c.evaluate(x)
                dl, du = self._margins(x)
                theta = np.abs(cv).sum() if cv.size else 0.0
                phi = self._barrier(f, dl, du, mu)
                filt = [(theta_max, -np.inf)]
                zl = np.where(self.has_lo, np.maximum(zl, 1e-8), 0.0)
                zu = np.where(self.has_up, np.maximum(zu, 1e-8), 0.0)
                iterate_log.append((it, f, theta, np.nan, mu, np.nan))
                continue

            x = x_t
            y = y + alpha * dy
            zl = np.where(self.has_lo, zl + alpha_z * dzl, 0.0)
            zu = np.where(self.has_up, zu + alpha_z * dzu, 0.0)
            f, cv, j, g = f_t, c_t, j_t, g_t
            dl, du = dl_t, du_t
            # dual safeguard keeps z in a band around mu/margin
            kap = 1e10
            zl[self.has_lo] = np.clip(
                zl[self.has_lo], mu / (kap * dl[self.has_lo]), kap * mu / dl[self.has_lo]
            )
            zu[self.has_up] = np.clip(
                zu[self.has_up], mu / (kap * du[self.has_up]), kap * mu / du[self.has_up]
            )
            theta, phi = theta_t, self._barrier(f, dl, du, mu)
            iterate_log.append((it, f / max(c.obj_scale, 1e-300), inf_pr, inf_du, mu, alpha))
            log.debug(
                "iter %4d obj %.8e inf_pr %.3e inf_du %.3e mu %.1e alpha %.2e",
                it, f, inf_pr, inf_du, mu, alpha,
            )

        elapsed = time.perf_counter() - t_start
        err0, inf_pr, inf_du, comp0 = self._kkt_error(g, j, cv, y, zl, zu, dl, du, 0.0)
        kkt_d = {
            "stationarity": float(inf_du),
            "primal_feasibility": float(inf_pr),
            "complementarity": float(comp0),
        }
        mults = {
            "constraints": y * self.c.row_scale / max(self.c.obj_scale, 1e-300),
            "lower": zl[: self.c.nx],
            "upper": zu[: self.c.nx],
        }
        return SolveResult(
            status,
            c.split(x),
            c.objective_unscaled(x),
            kkt_d,
            it,
            elapsed,
            message,
            iterate_log,
            mults,
        )

    def _restore(self, x, theta_enter):
        """Damped Gauss-Newton on 0.5 * ||c||^2 within the bounds."""
        c = self.c
        x = x.copy()
        lam = 1e-4
        target = max(1e-2 * theta_enter, 1e-12)
        _, cv, j, _ = c.evaluate(x)
        start = np.abs(cv).sum()
        for _ in range(60):
            if np.abs(cv).sum() <= target:
                return x, True
            try:
                d = _damped_least_squares(j, -cv, np.sqrt(lam))
            except (RuntimeError, ValueError):
                lam *= 10.0
                continue
            dl, du = self._margins(x)
            alpha = _fraction_to_boundary(dl, du, d, self.has_lo, self.has_up, 0.995)
            improved = False
            for _ls in range(30):
                x_t = x + alpha * d
                try:
                    _, c_t, j_t, _ = c.evaluate(x_t)
                except Exception:
                    alpha *= 0.5
                    continue
                if np.all(np.isfinite(c_t)) and np.abs(c_t).sum() < np.abs(cv).sum():
                    x, cv, j = x_t, c_t, j_t
                    improved = True
                    break
                alpha *= 0.5
            if improved:
                lam = max(lam / 10.0, 1e-10)
            else:
                lam *= 10.0
                if lam > 1e12:
                    break
        final = np.abs(cv).sum()
        return x, final <= max(0.5 * theta_enter, target) and final < start

    def _fail(self, x, f, it, t_start, iterate_log, msg) -> SolveResult:
        elapsed = time.perf_counter() - t_start
        return SolveResult(
            "numerical_failure",
            self.c.split(x),
            self.c.objective_unscaled(x),
            {"stationarity": np.inf, "primal_feasibility": np.inf, "complementarity": np.inf},
            it,
            elapsed,
            msg,
            iterate_log,
        )


def _damped_least_squares(j: sp.spmatrix, b: np.ndarray, damp: float) -> np.ndarray:
    """argmin ||J d - b||^2 + damp^2 ||d||^2 via a direct sparse solve of the
    augmented system (robust to the wide coefficient ranges lsqr chokes on)."""
    m, n = j.shape
    aug = sp.bmat(
        [[sp.eye(m), j], [j.T, -max(damp, 1e-14) ** 2 * sp.eye(n)]], format="csc"
    )
    sol = spla.splu(aug, permc_spec="COLAMD").solve(np.concatenate([b, np.zeros(n)]))
    return sol[m:]


def _fraction_to_boundary(dl, du, dx, has_lo, has_up, tau):
    alpha = 1.0
    neg = has_lo & (dx < 0)
    if neg.any():
        alpha = min(alpha, np.min(-tau * dl[neg] / dx[neg]))
    pos = has_up & (dx > 0)
    if pos.any():
        alpha = min(alpha, np.min(tau * du[pos] / dx[pos]))
    return float(min(alpha, 1.0))


def _max_step_nonneg(z, dz, tau):
    neg = dz < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * z[neg] / dz[neg])))


def solve_nlp(problem, opts: SolveOptions | None = None, x0: np.ndarray | None = None) -> SolveResult:
    """Solve a constrained NLP to the scaled KKT tolerance.

    ``x0`` falls back to ``problem.initial_point`` when omitted; the point
    must lie within the variable bounds (it is pushed strictly inside).
    """
    opts = opts or SolveOptions()
    if x0 is None:
        x0 = getattr(problem, "initial_point", None)
        if x0 is None:
            raise ValueError("no initial point: pass x0 or set problem.initial_point")
    x0 = np.asarray(x0, dtype=float)
    canon = _Canonical(problem, x0, opts.scaling)
    # initial slacks at the inequality values, pushed strictly positive so
    # the first fraction-to-boundary steps are not throttled
    _, c0, _, _ = problem.evaluate(x0)
    s0 = c0[problem.n_eq :] * canon.row_scale[problem.n_eq :] if problem.n_ineq else np.zeros(0)
    s0 = np.maximum(s0, 1e-2 * np.maximum(1.0, np.abs(s0)))
    x_aug0 = np.concatenate([x0, s0])
    result = _Ipm(canon, opts).solve(x_aug0)
    log.info(
        "solve_nlp: status=%s objective=%.6e iterations=%d time=%.2fs",
        result.status, result.objective, result.iterations, result.wall_time_s,
    )
    return result


def _in_filter(filt, theta, phi):
    return any(theta >= tf and phi >= pf for tf, pf in filt)


def kkt_check(problem, x: np.ndarray, tolerance: float) -> dict:
    """Independent KKT diagnostics at a point (no solver internals).

    Multipliers are re-estimated by least squares over the active set, so
    the report does not depend on how the point was produced. Returns
    stationarity, primal feasibility, complementarity and the worst
    multiplier sign violation.
    """
    x = np.asarray(x, dtype=float)
    f, c, j, g = problem.evaluate(x)
    lb, ub = problem.bounds()
    m_eq = problem.n_eq
    c_eq, c_in = c[:m_eq], c[m_eq:]
    j = j.tocsr()

    act_tol = max(np.sqrt(tolerance), 10.0 * tolerance)
    bound_viol = 0.0
    if np.isfinite(lb).any():
        bound_viol = max(bound_viol, float(np.max(np.where(np.isfinite(lb), lb - x, 0.0))))
    if np.isfinite(ub).any():
        bound_viol = max(bound_viol, float(np.max(np.where(np.isfinite(ub), x - ub, 0.0))))
    primal = max(
        float(np.max(np.abs(c_eq))) if m_eq else 0.0,
        float(max(0.0, -np.min(c_in))) if c_in.size else 0.0,
        bound_viol,
    )

    # columns of the least-squares multiplier system
    cols = [j[:m_eq].T] if m_eq else []
    act_in = np.where(c_in <= act_tol * np.maximum(1.0, np.abs(c_in)))[0] if c_in.size else np.array([], int)
    if act_in.size:
        cols.append(j[m_eq + act_in].T)
    act_lo = np.where(np.isfinite(lb) & (x - lb <= act_tol * np.maximum(1.0, np.abs(lb))))[0]
    act_up = np.where(np.isfinite(ub) & (ub - x <= act_tol * np.maximum(1.0, np.abs(ub))))[0]
    n = x.size
    if act_lo.size:
        cols.append(sp.csr_matrix((np.ones(act_lo.size), (act_lo, np.arange(act_lo.size))), shape=(n, act_lo.size)))
    if act_up.size:
        cols.append(sp.csr_matrix((-np.ones(act_up.size), (act_up, np.arange(act_up.size))), shape=(n, act_up.size)))

    if cols:
        a = sp.hstack(cols, format="csc")
        lam = spla.lsqr(a, -g, atol=1e-14, btol=1e-14, iter_lim=10000)[0]
        stationarity = float(np.max(np.abs(g + a @ lam)))
    else:
        lam = np.zeros(0)
        stationarity = float(np.max(np.abs(g))) if g.size else 0.0

    # complementarity on inactive inequalities is structurally zero (they
    # get no multiplier); active ones contribute |lambda * c|
    comp = 0.0
    sign_viol = 0.0
    off = m_eq
    if act_in.size:
        lam_in = lam[off : off + act_in.size]
        comp = max(comp, float(np.max(np.abs(lam_in * c_in[act_in]))) if act_in.size else 0.0)
        # inequality multipliers must push the right way: c_I >= 0 active
        # constraints need lambda <= 0 in the g + A lam = 0 convention
        sign_viol = max(sign_viol, float(max(0.0, np.max(lam_in))) if lam_in.size else 0.0)
    return {
        "stationarity": stationarity,
        "primal_feasibility": primal,
        "complementarity": comp,
        "dual_sign_violation": sign_viol,
        "objective": float(f),
    }
