"""Multiconductor power flow in rectangular current-voltage variables.

Explicit neutral, ground-referenced phasors, constant-PQ loads on the
phase-to-neutral voltage. Used to synthesize ground-truth states and to
validate estimated impedance models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .netmodel import ConductorIndex, NetworkModel

SLACK_VOLTAGE_V = 230.0


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadSpec:
    """Constant-PQ loads per (user, phase) and time step.

    Arrays are shaped (n_user_phase, n_steps) in ``ConductorIndex.user_phase``
    order; values in W and var.
    """

    p_w: np.ndarray
    q_var: np.ndarray

    def at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.p_w[:, t], dtype=float), np.asarray(self.q_var[:, t], dtype=float)


@dataclass(frozen=True)
class OperatingPoint:
    """One time slice of the network state.

    ``u`` is complex per bus conductor (ground referenced), ``i_branch``
    complex per branch conductor (from -> to), ``i_user`` complex per
    metered (user, phase) pair (drawn from the bus, returning on the
    neutral). The driving injections are kept so the point is
    self-contained for residual checks.
    """

    index: ConductorIndex
    u: np.ndarray
    i_branch: np.ndarray
    i_user: np.ndarray
    p_w: np.ndarray
    q_var: np.ndarray

    def user_neutral_current(self, user_pos: int) -> complex:
        sel = [k for k, (ui, _) in enumerate(self.index.user_phase) if ui == user_pos]
        return -np.sum(self.i_user[sel])


def _branch_impedances(model: NetworkModel) -> sp.csr_matrix:
    """Block-diagonal complex impedance map over branch conductors."""
    idx = model.index
    rows, cols, vals = [], [], []
    for li, br in enumerate(model.branches):
        z = model.branch_impedance(br)
        conds = br.phase_set
        for i, p in enumerate(conds):
            for j, q in enumerate(conds):
                rows.append(idx.branch_cond_idx[(li, p)])
                cols.append(idx.branch_cond_idx[(li, q)])
                vals.append(z[i, j])
    n = idx.n_branch_cond
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _incidence(model: NetworkModel) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    idx = model.index
    nb, nc, nu = idx.n_bus_cond, idx.n_branch_cond, idx.n_user_phase
    s_br = sp.csr_matrix(
        (
            np.r_[np.ones(nc), -np.ones(nc)],
            (np.r_[idx.from_bus_cond, idx.to_bus_cond], np.r_[np.arange(nc), np.arange(nc)]),
        ),
        shape=(nb, nc),
    )
    s_u = sp.csr_matrix(
        (
            np.r_[np.ones(nu), -np.ones(nu)],
            (np.r_[idx.user_bus_cond, idx.user_neutral_cond], np.r_[np.arange(nu), np.arange(nu)]),
        ),
        shape=(nb, nu),
    )
    return s_br, s_u


def _shunt_vector(model: NetworkModel) -> np.ndarray:
    idx = model.index
    y = np.zeros(idx.n_bus_cond, dtype=complex)
    for k, (bi, c) in enumerate(idx.bus_cond):
        bus = model.buses[bi]
        y[k] = bus.shunt()[bus.phase_set.index(c)]
    return y


def network_residuals(model: NetworkModel, point: OperatingPoint) -> np.ndarray:
    """Stacked Ohm, KCL and load-equation residuals of an operating point.

    Zero (to solver tolerance) iff the point is an exact solution. Order:
    ohm_re, ohm_im, kcl_re, kcl_im, p, q; KCL rows cover non-slack bus
    conductors only (the slack source balances its own bus).
    """
    idx = model.index
    if point.u.shape != (idx.n_bus_cond,):
        raise ValueError("operating point does not match the model dimensions")
    zmap = _branch_impedances(model)
    s_br, s_u = _incidence(model)
    y = _shunt_vector(model)

    ohm = point.u[idx.from_bus_cond] - point.u[idx.to_bus_cond] - zmap @ point.i_branch
    kcl = s_br @ point.i_branch + s_u @ point.i_user + y * point.u
    keep = ~idx.is_slack_bus_cond
    du = point.u[idx.user_bus_cond] - point.u[idx.user_neutral_cond]
    s_user = du * np.conj(point.i_user)
    return np.concatenate(
        [
            ohm.real,
            ohm.imag,
            kcl.real[keep],
            kcl.imag[keep],
            s_user.real - point.p_w,
            s_user.imag - point.q_var,
        ]
    )


def phase_to_neutral_magnitude(point: OperatingPoint, bus_id: str, phase: str) -> float:
    """|U_phase - U_neutral| at a bus, V."""
    idx = point.index
    bi = idx.model.bus_pos[bus_id]
    bus = idx.model.buses[bi]
    if phase not in bus.phase_set or "n" not in bus.phase_set:
        raise ValueError(f"bus {bus_id!r} lacks conductor {phase!r} or its neutral")
    du = point.u[idx.bus_cond_idx[(bi, phase)]] - point.u[idx.bus_cond_idx[(bi, "n")]]
    return float(abs(du))


def solve_power_flow(
    model: NetworkModel,
    loads: LoadSpec,
    t: int,
    u_slack: float = SLACK_VOLTAGE_V,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> OperatingPoint:
    """Newton solution of one time step; raises on non-convergence."""
    idx = model.index
    p_w, q_var = loads.at(t)
    if p_w.shape != (idx.n_user_phase,):
        raise ValueError("load vector does not match the model's metered phases")

    zmap = _branch_impedances(model)
    s_br, s_u = _incidence(model)
    y_sh = _shunt_vector(model)
    keep = ~idx.is_slack_bus_cond
    n_red = int(keep.sum())
    red_of = -np.ones(idx.n_bus_cond, dtype=int)
    red_of[keep] = np.arange(n_red)

    nc, nu = idx.n_branch_cond, idx.n_user_phase
    # unknown layout: u_re, u_im (reduced), i_br_re, i_br_im, i_u_re, i_u_im
    o_ure, o_uim = 0, n_red
    o_ibr, o_ibi = 2 * n_red, 2 * n_red + nc
    o_iur, o_iui = 2 * n_red + 2 * nc, 2 * n_red + 2 * nc + nu
    n_unknown = 2 * n_red + 2 * nc + 2 * nu

    u_slack_vec = idx.slack_voltage(u_slack)

    def unpack(xv):
        u = u_slack_vec.copy()
        u[keep] = xv[o_ure : o_ure + n_red] + 1j * xv[o_uim : o_uim + n_red]
        i_br = xv[o_ibr : o_ibr + nc] + 1j * xv[o_ibi : o_ibi + nc]
        i_u = xv[o_iur : o_iur + nu] + 1j * xv[o_iui : o_iui + nu]
        return u, i_br, i_u

    def residual(xv):
        u, i_br, i_u = unpack(xv)
        pt = OperatingPoint(idx, u, i_br, i_u, p_w, q_var)
        return network_residuals(model, pt)

    # constant Jacobian part: Ohm and KCL rows are linear in the unknowns
    n_ohm = nc
    r_ohm_re, r_ohm_im = 0, n_ohm
    r_kcl_re, r_kcl_im = 2 * n_ohm, 2 * n_ohm + n_red
    r_p, r_q = 2 * n_ohm + 2 * n_red, 2 * n_ohm + 2 * n_red + nu
    n_rows = 2 * n_ohm + 2 * n_red + 2 * nu

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    zcoo = zmap.tocoo()
    for k in range(nc):
        fc, tc = idx.from_bus_cond[k], idx.to_bus_cond[k]
        if red_of[fc] >= 0:
            add(r_ohm_re + k, o_ure + red_of[fc], 1.0)
            add(r_ohm_im + k, o_uim + red_of[fc], 1.0)
        if red_of[tc] >= 0:
            add(r_ohm_re + k, o_ure + red_of[tc], -1.0)
            add(r_ohm_im + k, o_uim + red_of[tc], -1.0)
    for r, c, z in zip(zcoo.row, zcoo.col, zcoo.data):
        add(r_ohm_re + r, o_ibr + c, -z.real)
        add(r_ohm_re + r, o_ibi + c, z.imag)
        add(r_ohm_im + r, o_ibi + c, -z.real)
        add(r_ohm_im + r, o_ibr + c, -z.imag)
    sb = s_br.tocoo()
    for r, c, v in zip(sb.row, sb.col, sb.data):
        if red_of[r] >= 0:
            add(r_kcl_re + red_of[r], o_ibr + c, v)
            add(r_kcl_im + red_of[r], o_ibi + c, v)
    su = s_u.tocoo()
    for r, c, v in zip(su.row, su.col, su.data):
        if red_of[r] >= 0:
            add(r_kcl_re + red_of[r], o_iur + c, v)
            add(r_kcl_im + red_of[r], o_iui + c, v)
    for k in range(idx.n_bus_cond):
        if red_of[k] >= 0 and y_sh[k] != 0:
            g, b = y_sh[k].real, y_sh[k].imag
            add(r_kcl_re + red_of[k], o_ure + red_of[k], g)
            add(r_kcl_re + red_of[k], o_uim + red_of[k], -b)
            add(r_kcl_im + red_of[k], o_uim + red_of[k], g)
            add(r_kcl_im + red_of[k], o_ure + red_of[k], b)
    j_const = sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_unknown))

    def jacobian(xv):
        u, _, i_u = unpack(xv)
        rr, cc, vv = [], [], []

        def addl(r, c, v):
            rr.append(r)
            cc.append(c)
            vv.append(v)

        du = u[idx.user_bus_cond] - u[idx.user_neutral_cond]
        for m in range(nu):
            pc, ncd = idx.user_bus_cond[m], idx.user_neutral_cond[m]
            ir, ii = i_u[m].real, i_u[m].imag
            dur, dui = du[m].real, du[m].imag
            for sgn, bc in ((1.0, pc), (-1.0, ncd)):
                if red_of[bc] >= 0:
                    addl(r_p + m, o_ure + red_of[bc], sgn * ir)
                    addl(r_p + m, o_uim + red_of[bc], sgn * ii)
                    addl(r_q + m, o_uim + red_of[bc], sgn * ir)
                    addl(r_q + m, o_ure + red_of[bc], -sgn * ii)
            addl(r_p + m, o_iur + m, dur)
            addl(r_p + m, o_iui + m, dui)
            addl(r_q + m, o_iur + m, dui)
            addl(r_q + m, o_iui + m, -dur)
        j_load = sp.csr_matrix((vv, (rr, cc)), shape=(n_rows, n_unknown))
        return (j_const + j_load).tocsc()

    # flat start: slack phasor replicated, zero currents
    x = np.zeros(n_unknown)
    u0 = np.empty(idx.n_bus_cond, dtype=complex)
    for k, (bi, c) in enumerate(idx.bus_cond):
        ang = {"a": 0.0, "b": -2 * np.pi / 3, "c": 2 * np.pi / 3, "n": 0.0}[c]
        u0[k] = 0.0 if c == "n" else u_slack * np.exp(1j * ang)
    x[o_ure : o_ure + n_red] = u0[keep].real
    x[o_uim : o_uim + n_red] = u0[keep].imag

    res = residual(x)
    for _ in range(max_iter):
        if np.max(np.abs(res)) < tol:
            break
        jac = jacobian(x)
        try:
            dx = spla.splu(jac).solve(-res)
        except RuntimeError as exc:
            raise PowerFlowError(f"singular power-flow Jacobian: {exc}") from exc
        # damped Newton: halve until the residual norm improves
        alpha, best = 1.0, None
        norm0 = np.linalg.norm(res)
        for _ls in range(30):
            trial = x + alpha * dx
            r_trial = residual(trial)
            if np.linalg.norm(r_trial) < norm0 or np.max(np.abs(r_trial)) < tol:
                best = (trial, r_trial)
                break
            alpha *= 0.5
        if best is None:
            raise PowerFlowError(
                f"power flow line search stalled, |residual| = {np.max(np.abs(res)):.3e}"
            )
        x, res = best
    else:
        raise PowerFlowError(
            f"power flow did not converge in {max_iter} iterations, "
            f"max |residual| = {np.max(np.abs(res)):.3e}"
        )

    u, i_br, i_u = unpack(x)
    return OperatingPoint(idx, u, i_br, i_u, p_w, q_var)


def solve_many(
    model: NetworkModel,
    loads: LoadSpec,
    indices,
    u_slack: float = SLACK_VOLTAGE_V,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> dict[int, OperatingPoint]:
    """Solve a set of independent time steps; raises listing every failure."""
    points: dict[int, OperatingPoint] = {}
    failures: list[int] = []
    for t in indices:
        try:
            points[int(t)] = solve_power_flow(model, loads, int(t), u_slack, tol, max_iter)
        except PowerFlowError:
            failures.append(int(t))
    if failures:
        raise PowerFlowError(f"power flow failed at time indices {failures}")
    return points
