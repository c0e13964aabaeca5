"""Joint state + impedance estimation problem.

Builds the constrained NLP whose decision variables are, per time step,
the rectangular network state (voltages, branch and user currents), the
measured-quantity projections and their absolute-value residuals, and,
time-invariant, the construction-code geometry (cross-sections,
conductor coordinates or spacings) plus per-branch lengths. Impedance
entries are never free parameters: every Ohm-law coefficient is a Carson
function of the geometry variables times the branch length.

The objective is the weighted least-absolute-value sum of measurement
residuals, written exactly through epigraph inequalities, which keeps
every inequality linear: all nonlinearity lives in equality constraints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import carson
from .carson import (
    C1,
    C2,
    GROUND_RESISTANCE,
    REACTANCE_COEFF,
    ConductorGeometry,
    ConstructionCode,
)
from .measurements import MeasurementSet, QUANTITIES, SIGMA_FLOOR
from .netmodel import NetworkModel
from .powerflow import LoadSpec, PowerFlowError, solve_power_flow

log = logging.getLogger("gridimp.estimator")

_SQRT2 = math.sqrt(2.0)
# additive constants of the reactance entries: X_pp = KXD - (C/2) ln A,
# X_pq = KXO - C ln D (distances in mm, areas in mm^2)
_KX_DIAG = REACTANCE_COEFF * (C2 - math.log(C1) + 0.25 + 0.5 * math.log(math.pi))
_KX_OFF = REACTANCE_COEFF * (C2 - math.log(C1))


class RestrictionMode(Enum):
    NO_REST = "no-rest"
    AP_REST = "ap-rest"
    G_REST = "g-rest"
    G_AP_REST = "g-ap-rest"

    @property
    def shares_phase_areas(self) -> bool:
        return self in (RestrictionMode.AP_REST, RestrictionMode.G_AP_REST)

    @property
    def fixes_layout(self) -> bool:
        return self in (RestrictionMode.G_REST, RestrictionMode.G_AP_REST)


@dataclass(frozen=True)
class RestrictionSet:
    mode: RestrictionMode = RestrictionMode.NO_REST


def restriction_variable_names(mode: RestrictionMode, n_conductors: int = 4) -> tuple[str, ...]:
    """Independent impedance variables per construction code (plus the
    per-branch length symbol), matching the published accounting."""
    mode = RestrictionMode(mode)
    if n_conductors == 2:
        return ("l", "A_p", "A_n", "D_pn")
    areas = ("A_p", "A_n") if mode.shares_phase_areas else ("A_a", "A_b", "A_c", "A_n")
    if mode.fixes_layout:
        geom = ("D_ab", "D_an", "D_cn")
    else:
        geom = ("x_b", "x_c", "x_n", "y_b", "y_c", "y_n")
    return ("l",) + areas + geom


@dataclass(frozen=True)
class BuildOptions:
    u_slack: float = 230.0
    sigma_floor: float = SIGMA_FLOOR
    area_bounds: tuple[float, float] = (10.0, 400.0)
    coord_bound: float = 100.0
    distance_bounds: tuple[float, float] = (1.0, 100.0)
    init_area: float = 50.0
    init_spacing: float = 20.0


@dataclass
class CodeVars:
    """Column bookkeeping of one construction code's geometry variables."""

    code_id: str
    conds: tuple[str, ...]
    acol: dict[str, int]
    coord_col: dict[str, tuple[int, int]]
    # (p, q) -> (column, factor): the pair's spacing is factor * x[column]
    dcol: dict[tuple[str, str], tuple[int, float]]
    kr: dict[str, float]
    d_def_pairs: list[tuple[str, str]] = field(default_factory=list)
    g_link: bool = False
    ap_band: bool = False


class VariableLayout:
    """Index map from (block, entity, time) to one contiguous vector."""

    def __init__(self, model: NetworkModel, mset: MeasurementSet, mode: RestrictionMode,
                 options: BuildOptions):
        idx = model.index
        self.mode = mode
        self.options = options
        self.train_times = np.sort(mset.select("train"))
        if self.train_times.size == 0:
            raise ValueError("training split is empty")
        self.n_steps = len(self.train_times)

        # metered (user, phase) pairs, in conductor-index order, matched to
        # measurement columns
        col_of = {c: k for k, c in enumerate(mset.columns)}
        self.meas_userphase: list[int] = []
        self.meas_col: list[int] = []
        for m, (ui, p) in enumerate(idx.user_phase):
            if not model.users[ui].has_meter:
                continue
            key = (model.users[ui].user_id, p)
            if key not in col_of:
                raise ValueError(f"measurement set lacks user {key[0]!r} phase {key[1]!r}")
            self.meas_userphase.append(m)
            self.meas_col.append(col_of[key])
        self.n_meas = len(self.meas_userphase)
        if self.n_meas == 0:
            raise ValueError("no metered users")

        # impedance block: branch lengths, then per-code geometry
        n = 0
        self.col_length = np.arange(len(model.branches))
        n += len(model.branches)
        self.codevars: dict[str, CodeVars] = {}
        for cid, code in model.code_catalog.items():
            cv = self._alloc_code(code, n, mode)
            n = self._code_end
            self.codevars[cid] = cv
        self.n_imp = n

        # per-step state block
        self.n_red = int((~idx.is_slack_bus_cond).sum())
        self.red_of = -np.ones(idx.n_bus_cond, dtype=int)
        self.red_of[~idx.is_slack_bus_cond] = np.arange(self.n_red)
        nc, nu = idx.n_branch_cond, idx.n_user_phase
        nm = self.n_meas
        self.o_ure = 0
        self.o_uim = self.n_red
        self.o_ibr = 2 * self.n_red
        self.o_ibi = self.o_ibr + nc
        self.o_iur = self.o_ibi + nc
        self.o_iui = self.o_iur + nu
        self.o_xp = self.o_iui + nu
        self.o_xq = self.o_xp + nm
        self.o_ua = self.o_xq + nm
        self.o_rp = self.o_ua + nm
        self.o_rq = self.o_rp + nm
        self.o_ru = self.o_rq + nm
        self.step_size = self.o_ru + nm
        self.n_vars = self.n_imp + self.n_steps * self.step_size
        self.step_base = self.n_imp + np.arange(self.n_steps) * self.step_size

    def _alloc_code(self, code: ConstructionCode, n0: int, mode: RestrictionMode) -> CodeVars:
        conds = tuple(code.phase_set)
        phases = [c for c in conds if c != "n"]
        n = n0
        acol: dict[str, int] = {}
        if len(conds) == 4 and mode.shares_phase_areas:
            for p in phases:
                acol[p] = n
            acol["n"] = n + 1
            n += 2
        else:
            for c in conds:
                acol[c] = n
                n += 1
        coord_col: dict[str, tuple[int, int]] = {}
        dcol: dict[tuple[str, str], tuple[int, float]] = {}
        d_def_pairs: list[tuple[str, str]] = []
        if len(conds) == 2:
            dcol[(conds[0], "n")] = (n, 1.0)
            n += 1
        elif mode.fixes_layout:
            c_ab, c_an, c_cn = n, n + 1, n + 2
            n += 3
            dcol[("a", "b")] = (c_ab, 1.0)
            dcol[("a", "c")] = (c_ab, 1.0)
            dcol[("b", "c")] = (c_ab, _SQRT2)
            dcol[("a", "n")] = (c_an, 1.0)
            dcol[("b", "n")] = (c_cn, 1.0)
            dcol[("c", "n")] = (c_cn, 1.0)
        else:
            for c in ("b", "c", "n"):
                coord_col[c] = (n, n + 1)
                n += 2
            for i, p in enumerate(conds):
                for q in conds[i + 1 :]:
                    dcol[(p, q)] = (n, 1.0)
                    d_def_pairs.append((p, q))
                    n += 1
        kr = {
            c: 1000.0
            * code.conductors[c].material.resistivity
            * (1.0 + code.conductors[c].material.temperature_coefficient * (code.temperature - 20.0))
            for c in conds
        }
        self._code_end = n
        return CodeVars(
            code_id=code.code_id,
            conds=conds,
            acol=acol,
            coord_col=coord_col,
            dcol=dcol,
            kr=kr,
            d_def_pairs=d_def_pairs,
            g_link=len(conds) == 4 and mode.fixes_layout,
            ap_band=mode.shares_phase_areas and "n" in conds and len(conds) >= 2,
        )


class EstimationProblem:
    """Assembled NLP implementing the solver problem protocol.

    Rows stack equalities first (code-geometry definitions, then per step:
    Ohm, KCL, measurement projections), then inequalities (cross-section
    band, then the per-step epigraph rows, which are all linear).
    """

    def __init__(self, model: NetworkModel, mset: MeasurementSet,
                 restriction: RestrictionSet | RestrictionMode = RestrictionMode.NO_REST,
                 options: BuildOptions | None = None):
        if isinstance(restriction, RestrictionSet):
            restriction = restriction.mode
        self.mode = RestrictionMode(restriction)
        self.options = options or BuildOptions()
        self.model = model
        self.measurements = mset
        if self.mode.fixes_layout and not any(
            len(c.phase_set) == 4 for c in model.code_catalog.values()
        ):
            raise ValueError(
                f"restriction {self.mode.value!r} requires at least one four-wire code"
            )
        self.layout = VariableLayout(model, mset, self.mode, self.options)
        self._build_static()
        self.initial_point: np.ndarray | None = None

    # ------------------------------------------------------------------
    # static structure
    # ------------------------------------------------------------------

    def _build_static(self):
        lay, idx, model = self.layout, self.model.index, self.model
        opt = self.options
        T, nm = lay.n_steps, lay.n_meas
        nc, nu, nbc = idx.n_branch_cond, idx.n_user_phase, idx.n_bus_cond

        # -- bounds ------------------------------------------------------
        lb = np.full(lay.n_vars, -np.inf)
        ub = np.full(lay.n_vars, np.inf)
        for li, br in enumerate(model.branches):
            lb[lay.col_length[li]] = 0.7 * br.length_nominal_km
            ub[lay.col_length[li]] = 1.3 * br.length_nominal_km
        for cv in lay.codevars.values():
            for col in set(cv.acol.values()):
                lb[col], ub[col] = opt.area_bounds
            for cx, cy in cv.coord_col.values():
                lb[cx], ub[cx] = -opt.coord_bound, opt.coord_bound
                lb[cy], ub[cy] = -opt.coord_bound, opt.coord_bound
            for col, _fac in set(cv.dcol.values()):
                lb[col], ub[col] = opt.distance_bounds
        for k in range(T):
            b = lay.step_base[k]
            lb[b + lay.o_ua : b + lay.o_ua + nm] = 0.0
            lb[b + lay.o_rp : b + lay.o_ru + nm] = 0.0
        self._lb, self._ub = lb, ub

        # -- impedance pair tables ----------------------------------------
        pair_branch, pair_row, pair_col, pair_diag = [], [], [], []
        pair_acol, pair_kr, pair_dcol, pair_kx = [], [], [], []
        for li, br in enumerate(model.branches):
            cv = lay.codevars[br.code_id]
            bconds = br.phase_set
            for i, p in enumerate(bconds):
                for j, q in enumerate(bconds):
                    pair_branch.append(li)
                    pair_row.append(idx.branch_cond_idx[(li, p)])
                    pair_col.append(idx.branch_cond_idx[(li, q)])
                    cp, cq = cv.conds[i], cv.conds[j]  # positional map onto code
                    if i == j:
                        pair_diag.append(True)
                        pair_acol.append(cv.acol[cp])
                        pair_kr.append(cv.kr[cp])
                        pair_dcol.append(-1)
                        pair_kx.append(_KX_DIAG)
                    else:
                        pair_diag.append(False)
                        pair_acol.append(-1)
                        pair_kr.append(0.0)
                        key = (cp, cq) if (cp, cq) in cv.dcol else (cq, cp)
                        col, fac = cv.dcol[key]
                        pair_dcol.append(col)
                        pair_kx.append(_KX_OFF - REACTANCE_COEFF * math.log(fac))
        self.pair_branch = np.array(pair_branch)
        self.pair_row = np.array(pair_row)
        self.pair_col = np.array(pair_col)
        self.pair_diag = np.array(pair_diag, dtype=bool)
        self.pair_acol = np.array(pair_acol)
        self.pair_kr = np.array(pair_kr)
        self.pair_dcol = np.array(pair_dcol)
        self.pair_kx = np.array(pair_kx)
        self.n_pairs = len(pair_branch)
        # pair -> row accumulation matrix (dense: both dims are small)
        self.sum_rows = np.zeros((nc, self.n_pairs))
        self.sum_rows[self.pair_row, np.arange(self.n_pairs)] = 1.0

        # -- incidence (dense, small) --------------------------------------
        self.inc_branch = np.zeros((nbc, nc))
        self.inc_branch[idx.from_bus_cond, np.arange(nc)] += 1.0
        self.inc_branch[idx.to_bus_cond, np.arange(nc)] -= 1.0
        self.inc_user = np.zeros((nbc, nu))
        self.inc_user[idx.user_bus_cond, np.arange(nu)] += 1.0
        self.inc_user[idx.user_neutral_cond, np.arange(nu)] -= 1.0
        y = np.zeros(nbc, dtype=complex)
        for k, (bi, c) in enumerate(idx.bus_cond):
            bus = model.buses[bi]
            y[k] = bus.shunt()[bus.phase_set.index(c)]
        self.y_shunt = y
        self.keep_cond = ~idx.is_slack_bus_cond
        self.u_slack_pad = idx.slack_voltage(opt.u_slack)

        # -- measured data (train split, step-major) ------------------------
        jtrain = np.array([self.measurements.time_pos(t) for t in lay.train_times])
        cols = np.array(lay.meas_col)
        self.z = {}
        self.sig = {}
        for q in QUANTITIES:
            zq = self.measurements.z[q][np.ix_(cols, jtrain)].T  # (T, nm)
            srel = self.measurements.noise.sigma_rel(q)
            self.z[q] = zq
            self.sig[q] = np.maximum(srel * np.abs(zq), opt.sigma_floor)
        self.meas_up = np.array(lay.meas_userphase)
        self.meas_pcond = idx.user_bus_cond[self.meas_up]
        self.meas_ncond = idx.user_neutral_cond[self.meas_up]

        # -- constraint row layout -----------------------------------------
        rows_d_def, rows_g_link, rows_ap = [], [], []
        r = 0
        self.code_eq = []  # (kind, payload) in row order
        for cv in lay.codevars.values():
            for p, q in cv.d_def_pairs:
                self.code_eq.append(("d_def", cv, (p, q)))
                rows_d_def.append(r)
                r += 1
            if cv.g_link:
                self.code_eq.append(("g_an", cv, None))
                rows_g_link.append(r)
                self.code_eq.append(("g_cn", cv, None))
                rows_g_link.append(r + 1)
                r += 2
        self.n_code_eq = r
        self.step_eq = 2 * nc + 2 * lay.n_red + 3 * nm
        self.n_eq = self.n_code_eq + T * self.step_eq
        self.ap_codes = [cv for cv in lay.codevars.values() if cv.ap_band]
        self.n_ap = 2 * len(self.ap_codes)
        self.step_in = 6 * nm
        self.n_ineq = self.n_ap + T * self.step_in
        self.n_vars = lay.n_vars

        base = self.n_code_eq + np.arange(T)[:, None] * self.step_eq
        self.r_ohm_re = base + np.arange(nc)[None, :]
        self.r_ohm_im = base + nc + np.arange(nc)[None, :]
        self.r_kcl_re = base + 2 * nc + np.arange(lay.n_red)[None, :]
        self.r_kcl_im = base + 2 * nc + lay.n_red + np.arange(lay.n_red)[None, :]
        mbase = base + 2 * nc + 2 * lay.n_red
        self.r_pdef = mbase + np.arange(nm)[None, :]
        self.r_qdef = mbase + nm + np.arange(nm)[None, :]
        self.r_udef = mbase + 2 * nm + np.arange(nm)[None, :]
        ibase = self.n_eq + self.n_ap + np.arange(T)[:, None] * self.step_in
        self.r_epi = {}
        for qi, q in enumerate(QUANTITIES):
            self.r_epi[q] = (
                ibase + 2 * qi * nm + np.arange(nm)[None, :],
                ibase + (2 * qi + 1) * nm + np.arange(nm)[None, :],
            )

        # -- state column index matrices -------------------------------------
        sb = lay.step_base[:, None]
        self.c_ure = np.where(
            lay.red_of[None, :] >= 0, sb + lay.o_ure + lay.red_of[None, :], -1
        )
        self.c_uim = np.where(
            lay.red_of[None, :] >= 0, sb + lay.o_uim + lay.red_of[None, :], -1
        )
        self.c_ibr = sb + lay.o_ibr + np.arange(nc)[None, :]
        self.c_ibi = sb + lay.o_ibi + np.arange(nc)[None, :]
        self.c_iur = sb + lay.o_iur + np.arange(nu)[None, :]
        self.c_iui = sb + lay.o_iui + np.arange(nu)[None, :]
        self.c_xp = sb + lay.o_xp + np.arange(nm)[None, :]
        self.c_xq = sb + lay.o_xq + np.arange(nm)[None, :]
        self.c_ua = sb + lay.o_ua + np.arange(nm)[None, :]
        self.c_rp = sb + lay.o_rp + np.arange(nm)[None, :]
        self.c_rq = sb + lay.o_rq + np.arange(nm)[None, :]
        self.c_ru = sb + lay.o_ru + np.arange(nm)[None, :]

        self._assemble_static_jacobian()

        self.grad = np.zeros(lay.n_vars)
        for cmat in (self.c_rp, self.c_rq, self.c_ru):
            self.grad[cmat.ravel()] = 1.0

    def _emit_static(self, rows, cols, vals):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        vals = np.broadcast_to(vals, rows.shape).ravel() if np.isscalar(vals) else np.asarray(vals).ravel()
        keep = cols >= 0
        self._srows.append(rows[keep])
        self._scols.append(cols[keep])
        self._svals.append(vals[keep])

    def _assemble_static_jacobian(self):
        """Entries whose values never change: voltage incidences in Ohm
        rows, KCL, the unit coefficients of projection rows, layout-link
        equalities, cross-section bands and epigraph rows."""
        lay, idx = self.layout, self.model.index
        T = lay.n_steps
        nc, nu, nm = idx.n_branch_cond, idx.n_user_phase, lay.n_meas
        self._srows, self._scols, self._svals = [], [], []

        # code equality rows with constant coefficients
        for r, (kind, cv, payload) in enumerate(self.code_eq):
            if kind == "g_an":
                self._emit_static([r], [cv.dcol[("a", "n")][0]], np.array([1.0]))
                self._emit_static([r], [cv.dcol[("a", "b")][0]], np.array([-(1.0 + 1.0 / _SQRT2)]))
            elif kind == "g_cn":
                self._emit_static([r], [cv.dcol[("c", "n")][0]], np.array([1.0]))
                self._emit_static([r], [cv.dcol[("a", "b")][0]], np.array([-math.sqrt(1.5)]))

        # Ohm voltage terms
        fu = self.c_ure[:, idx.from_bus_cond]
        tu = self.c_ure[:, idx.to_bus_cond]
        self._emit_static(self.r_ohm_re, fu, 1.0)
        self._emit_static(self.r_ohm_re, tu, -1.0)
        self._emit_static(self.r_ohm_im, self.c_uim[:, idx.from_bus_cond], 1.0)
        self._emit_static(self.r_ohm_im, self.c_uim[:, idx.to_bus_cond], -1.0)

        # KCL incidence
        br_r, br_c = np.nonzero(self.inc_branch[self.keep_cond])
        vals = self.inc_branch[self.keep_cond][br_r, br_c]
        self._emit_static(self.r_kcl_re[:, br_r], self.c_ibr[:, br_c], np.tile(vals, (T, 1)))
        self._emit_static(self.r_kcl_im[:, br_r], self.c_ibi[:, br_c], np.tile(vals, (T, 1)))
        us_r, us_c = np.nonzero(self.inc_user[self.keep_cond])
        uvals = self.inc_user[self.keep_cond][us_r, us_c]
        self._emit_static(self.r_kcl_re[:, us_r], self.c_iur[:, us_c], np.tile(uvals, (T, 1)))
        self._emit_static(self.r_kcl_im[:, us_r], self.c_iui[:, us_c], np.tile(uvals, (T, 1)))
        if np.any(self.y_shunt != 0):
            g = self.y_shunt.real[self.keep_cond]
            b = self.y_shunt.imag[self.keep_cond]
            nz = np.nonzero((g != 0) | (b != 0))[0]
            red = self.c_ure[:, self.keep_cond]
            red_i = self.c_uim[:, self.keep_cond]
            for k in nz:
                self._emit_static(self.r_kcl_re[:, [k]], red[:, [k]], np.full((T, 1), g[k]))
                self._emit_static(self.r_kcl_re[:, [k]], red_i[:, [k]], np.full((T, 1), -b[k]))
                self._emit_static(self.r_kcl_im[:, [k]], red_i[:, [k]], np.full((T, 1), g[k]))
                self._emit_static(self.r_kcl_im[:, [k]], red[:, [k]], np.full((T, 1), b[k]))

        # unit coefficients of the projection rows
        self._emit_static(self.r_pdef, self.c_xp, 1.0)
        self._emit_static(self.r_qdef, self.c_xq, 1.0)

        # cross-section band
        for i, cv in enumerate(self.ap_codes):
            phase = next(c for c in cv.conds if c != "n")
            r0 = self.n_eq + 2 * i
            self._emit_static([r0, r0], [cv.acol["n"], cv.acol[phase]], np.array([1.0, -0.5]))
            self._emit_static([r0 + 1, r0 + 1], [cv.acol[phase], cv.acol["n"]], np.array([1.0, -1.0]))

        # epigraph rows: rho -+ (x - z)/sigma >= 0
        for q, (xc,) in zip(QUANTITIES, [(self.c_xp,), (self.c_xq,), (self.c_ua,)]):
            rc = {"p": self.c_rp, "q": self.c_rq, "u_mag": self.c_ru}[q]
            lo, hi = self.r_epi[q]
            w = 1.0 / self.sig[q]
            self._emit_static(lo, rc, 1.0)
            self._emit_static(lo, xc, -w)
            self._emit_static(hi, rc, 1.0)
            self._emit_static(hi, xc, w)

        self.static_rows = np.concatenate(self._srows)
        self.static_cols = np.concatenate(self._scols)
        self.static_vals = np.concatenate(self._svals)
        del self._srows, self._scols, self._svals

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def bounds(self):
        return self._lb, self._ub

    def _state(self, x: np.ndarray):
        """Gathered, broadcast views of the point used by both the residual
        and the derivative assembly."""
        lay, idx = self.layout, self.model.index
        T = lay.n_steps
        s = x[lay.n_imp :].reshape(T, lay.step_size)
        st = {}
        u_re = np.tile(self.u_slack_pad.real, (T, 1))
        u_im = np.tile(self.u_slack_pad.imag, (T, 1))
        u_re[:, self.keep_cond] = s[:, lay.o_ure : lay.o_ure + lay.n_red]
        u_im[:, self.keep_cond] = s[:, lay.o_uim : lay.o_uim + lay.n_red]
        st["u_re"], st["u_im"] = u_re, u_im
        nc, nu, nm = idx.n_branch_cond, idx.n_user_phase, lay.n_meas
        st["ibr_re"] = s[:, lay.o_ibr : lay.o_ibr + nc]
        st["ibr_im"] = s[:, lay.o_ibi : lay.o_ibi + nc]
        st["iu_re"] = s[:, lay.o_iur : lay.o_iur + nu]
        st["iu_im"] = s[:, lay.o_iui : lay.o_iui + nu]
        st["xp"] = s[:, lay.o_xp : lay.o_xp + nm]
        st["xq"] = s[:, lay.o_xq : lay.o_xq + nm]
        st["ua"] = s[:, lay.o_ua : lay.o_ua + nm]
        st["rp"] = s[:, lay.o_rp : lay.o_rp + nm]
        st["rq"] = s[:, lay.o_rq : lay.o_rq + nm]
        st["ru"] = s[:, lay.o_ru : lay.o_ru + nm]

        # Carson entries per branch-conductor pair
        a = np.where(self.pair_diag, x[np.maximum(self.pair_acol, 0)], 1.0)
        d = np.where(~self.pair_diag, x[np.maximum(self.pair_dcol, 0)], 1.0)
        if np.any(a[self.pair_diag] <= 0.0) or np.any(d[~self.pair_diag] <= 0.0):
            raise carson.CarsonDomainError("geometry variable at or below zero")
        st["rn"] = np.where(self.pair_diag, self.pair_kr / a + GROUND_RESISTANCE, GROUND_RESISTANCE)
        st["xn"] = np.where(
            self.pair_diag,
            self.pair_kx - 0.5 * REACTANCE_COEFF * np.log(a),
            self.pair_kx - REACTANCE_COEFF * np.log(d),
        )
        st["drn"] = np.where(self.pair_diag, -self.pair_kr / a**2, 0.0)
        st["dxn"] = np.where(
            self.pair_diag, -0.5 * REACTANCE_COEFF / a, -REACTANCE_COEFF / d
        )
        st["d2rn"] = np.where(self.pair_diag, 2.0 * self.pair_kr / a**3, 0.0)
        st["d2xn"] = np.where(
            self.pair_diag, 0.5 * REACTANCE_COEFF / a**2, REACTANCE_COEFF / d**2
        )
        st["len"] = x[lay.col_length[self.pair_branch]]
        st["ire_p"] = st["ibr_re"][:, self.pair_col]
        st["iim_p"] = st["ibr_im"][:, self.pair_col]

        st["du_re"] = u_re[:, self.meas_pcond] - u_re[:, self.meas_ncond]
        st["du_im"] = u_im[:, self.meas_pcond] - u_im[:, self.meas_ncond]
        st["imr"] = st["iu_re"][:, self.meas_up]
        st["imi"] = st["iu_im"][:, self.meas_up]
        return st

    def evaluate(self, x: np.ndarray):
        """Objective, stacked constraint values, sparse Jacobian and
        objective gradient at a point."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.n_vars},)")
        lay = self.layout
        st = self._state(x)
        c = np.empty(self.n_eq + self.n_ineq)

        # code-geometry equalities
        for r, (kind, cv, payload) in enumerate(self.code_eq):
            if kind == "d_def":
                p, q = payload
                dc = x[cv.dcol[(p, q)][0]]
                xp_, yp_ = self._coords(x, cv, p)
                xq_, yq_ = self._coords(x, cv, q)
                c[r] = dc**2 - (xp_ - xq_) ** 2 - (yp_ - yq_) ** 2
            elif kind == "g_an":
                c[r] = x[cv.dcol[("a", "n")][0]] - (1.0 + 1.0 / _SQRT2) * x[cv.dcol[("a", "b")][0]]
            elif kind == "g_cn":
                c[r] = x[cv.dcol[("c", "n")][0]] - math.sqrt(1.5) * x[cv.dcol[("a", "b")][0]]

        lrn = st["len"] * st["rn"]
        lxn = st["len"] * st["xn"]
        ohm_re = (
            st["u_re"][:, self.model.index.from_bus_cond]
            - st["u_re"][:, self.model.index.to_bus_cond]
            - (lrn * st["ire_p"] - lxn * st["iim_p"]) @ self.sum_rows.T
        )
        ohm_im = (
            st["u_im"][:, self.model.index.from_bus_cond]
            - st["u_im"][:, self.model.index.to_bus_cond]
            - (lrn * st["iim_p"] + lxn * st["ire_p"]) @ self.sum_rows.T
        )
        c[self.r_ohm_re.ravel()] = ohm_re.ravel()
        c[self.r_ohm_im.ravel()] = ohm_im.ravel()

        kcl_re = st["ibr_re"] @ self.inc_branch.T + st["iu_re"] @ self.inc_user.T
        kcl_im = st["ibr_im"] @ self.inc_branch.T + st["iu_im"] @ self.inc_user.T
        if np.any(self.y_shunt != 0):
            kcl_re = kcl_re + st["u_re"] * self.y_shunt.real[None, :] - st["u_im"] * self.y_shunt.imag[None, :]
            kcl_im = kcl_im + st["u_im"] * self.y_shunt.real[None, :] + st["u_re"] * self.y_shunt.imag[None, :]
        c[self.r_kcl_re.ravel()] = kcl_re[:, self.keep_cond].ravel()
        c[self.r_kcl_im.ravel()] = kcl_im[:, self.keep_cond].ravel()

        c[self.r_pdef.ravel()] = (
            st["xp"] - st["du_re"] * st["imr"] - st["du_im"] * st["imi"]
        ).ravel()
        c[self.r_qdef.ravel()] = (
            st["xq"] - st["du_im"] * st["imr"] + st["du_re"] * st["imi"]
        ).ravel()
        c[self.r_udef.ravel()] = (st["ua"] ** 2 - st["du_re"] ** 2 - st["du_im"] ** 2).ravel()

        # cross-section band inequalities
        for i, cv in enumerate(self.ap_codes):
            phase = next(cc for cc in cv.conds if cc != "n")
            r0 = self.n_eq + 2 * i
            c[r0] = x[cv.acol["n"]] - 0.5 * x[cv.acol[phase]]
            c[r0 + 1] = x[cv.acol[phase]] - x[cv.acol["n"]]

        for q, xv, rv in (("p", st["xp"], st["rp"]), ("q", st["xq"], st["rq"]), ("u_mag", st["ua"], st["ru"])):
            lo, hi = self.r_epi[q]
            e = (xv - self.z[q]) / self.sig[q]
            c[lo.ravel()] = (rv - e).ravel()
            c[hi.ravel()] = (rv + e).ravel()

        jac = self._jacobian(x, st)
        f = float(st["rp"].sum() + st["rq"].sum() + st["ru"].sum())
        return f, c, jac, self.grad.copy()

    def _coords(self, x, cv: CodeVars, cond: str) -> tuple[float, float]:
        # the reference conductor is pinned at the origin by convention
        if cond in cv.coord_col:
            cx, cy = cv.coord_col[cond]
            return x[cx], x[cy]
        return 0.0, 0.0

    def _jacobian(self, x, st) -> sp.csr_matrix:
        lay, idx = self.layout, self.model.index
        T = lay.n_steps
        rows = [self.static_rows]
        cols = [self.static_cols]
        vals = [self.static_vals]

        def emit(r, cmat, v):
            r = np.asarray(r)
            cmat = np.asarray(cmat)
            keep = cmat >= 0
            if keep.all():
                rows.append(np.broadcast_to(r, v.shape).ravel())
                cols.append(np.broadcast_to(cmat, v.shape).ravel())
                vals.append(np.asarray(v).ravel())
            else:
                rb = np.broadcast_to(r, v.shape)[keep]
                cb = np.broadcast_to(cmat, v.shape)[keep]
                rows.append(rb.ravel())
                cols.append(cb.ravel())
                vals.append(np.asarray(v)[keep].ravel())

        # dynamic code-geometry rows
        for r, (kind, cv, payload) in enumerate(self.code_eq):
            if kind != "d_def":
                continue
            p, q = payload
            dc = cv.dcol[(p, q)][0]
            xp_, yp_ = self._coords(x, cv, p)
            xq_, yq_ = self._coords(x, cv, q)
            emit(np.array([r]), np.array([dc]), np.array([2.0 * x[dc]]))
            for cond, sgn_x in ((p, 1.0), (q, -1.0)):
                if cond in cv.coord_col:
                    cx, cy = cv.coord_col[cond]
                    emit(np.array([r]), np.array([cx]), np.array([-2.0 * sgn_x * (xp_ - xq_)]))
                    emit(np.array([r]), np.array([cy]), np.array([-2.0 * sgn_x * (yp_ - yq_)]))

        lrn = st["len"] * st["rn"]
        lxn = st["len"] * st["xn"]
        pr = self.pair_row

        # Ohm wrt currents
        emit(self.r_ohm_re[:, pr], self.c_ibr[:, self.pair_col], np.broadcast_to(-lrn, (T, self.n_pairs)))
        emit(self.r_ohm_re[:, pr], self.c_ibi[:, self.pair_col], np.broadcast_to(lxn, (T, self.n_pairs)))
        emit(self.r_ohm_im[:, pr], self.c_ibi[:, self.pair_col], np.broadcast_to(-lrn, (T, self.n_pairs)))
        emit(self.r_ohm_im[:, pr], self.c_ibr[:, self.pair_col], np.broadcast_to(-lxn, (T, self.n_pairs)))

        # Ohm wrt lengths
        dlen_re = -(st["rn"] * st["ire_p"] - st["xn"] * st["iim_p"]) @ self.sum_rows.T
        dlen_im = -(st["rn"] * st["iim_p"] + st["xn"] * st["ire_p"]) @ self.sum_rows.T
        lcols = lay.col_length[idx.branch_of_cond][None, :]
        emit(self.r_ohm_re, np.broadcast_to(lcols, dlen_re.shape), dlen_re)
        emit(self.r_ohm_im, np.broadcast_to(lcols, dlen_im.shape), dlen_im)

        # Ohm wrt geometry (diagonal entries through A, off-diagonal
        # through the spacing variables)
        dg = self.pair_diag
        og = ~dg
        if dg.any():
            acols = self.pair_acol[dg][None, :]
            va_re = -st["len"][dg] * (
                st["drn"][dg] * st["ire_p"][:, dg] - st["dxn"][dg] * st["iim_p"][:, dg]
            )
            va_im = -st["len"][dg] * (
                st["drn"][dg] * st["iim_p"][:, dg] + st["dxn"][dg] * st["ire_p"][:, dg]
            )
            emit(self.r_ohm_re[:, pr[dg]], np.broadcast_to(acols, va_re.shape), va_re)
            emit(self.r_ohm_im[:, pr[dg]], np.broadcast_to(acols, va_im.shape), va_im)
        if og.any():
            dcols = self.pair_dcol[og][None, :]
            vd_re = st["len"][og] * st["dxn"][og] * st["iim_p"][:, og]
            vd_im = -st["len"][og] * st["dxn"][og] * st["ire_p"][:, og]
            emit(self.r_ohm_re[:, pr[og]], np.broadcast_to(dcols, vd_re.shape), vd_re)
            emit(self.r_ohm_im[:, pr[og]], np.broadcast_to(dcols, vd_im.shape), vd_im)

        # projection rows
        pc, ncd = self.meas_pcond, self.meas_ncond
        c_urep = self.c_ure[:, pc]
        c_uren = self.c_ure[:, ncd]
        c_uimp = self.c_uim[:, pc]
        c_uimn = self.c_uim[:, ncd]
        c_imr = self.c_iur[:, self.meas_up]
        c_imi = self.c_iui[:, self.meas_up]
        emit(self.r_pdef, c_urep, -st["imr"])
        emit(self.r_pdef, c_uren, st["imr"])
        emit(self.r_pdef, c_uimp, -st["imi"])
        emit(self.r_pdef, c_uimn, st["imi"])
        emit(self.r_pdef, c_imr, -st["du_re"])
        emit(self.r_pdef, c_imi, -st["du_im"])
        emit(self.r_qdef, c_uimp, -st["imr"])
        emit(self.r_qdef, c_uimn, st["imr"])
        emit(self.r_qdef, c_urep, st["imi"])
        emit(self.r_qdef, c_uren, -st["imi"])
        emit(self.r_qdef, c_imr, -st["du_im"])
        emit(self.r_qdef, c_imi, st["du_re"])
        emit(self.r_udef, self.c_ua, 2.0 * st["ua"])
        emit(self.r_udef, c_urep, -2.0 * st["du_re"])
        emit(self.r_udef, c_uren, 2.0 * st["du_re"])
        emit(self.r_udef, c_uimp, -2.0 * st["du_im"])
        emit(self.r_udef, c_uimn, 2.0 * st["du_im"])

        m = self.n_eq + self.n_ineq
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m, self.n_vars),
        ).tocsr()

    def lagrangian_hessian(self, x: np.ndarray, obj_weight: float, lam: np.ndarray) -> sp.csr_matrix:
        """Weighted Hessian of obj_weight * f + lam . c (the objective is
        linear, so only constraint curvature contributes)."""
        x = np.asarray(x, dtype=float)
        st = self._state(x)
        lay = self.layout
        T = lay.n_steps
        rows, cols, vals = [], [], []

        def emit(i, j, v):
            i = np.broadcast_to(i, np.shape(v)).ravel()
            j = np.broadcast_to(j, np.shape(v)).ravel()
            v = np.asarray(v).ravel()
            keep = (i >= 0) & (j >= 0)
            rows.append(i[keep])
            cols.append(j[keep])
            vals.append(v[keep])

        for r, (kind, cv, payload) in enumerate(self.code_eq):
            if kind != "d_def":
                continue
            lr = lam[r]
            if lr == 0.0:
                continue
            p, q = payload
            dc = cv.dcol[(p, q)][0]
            emit(np.array([dc]), np.array([dc]), np.array([2.0 * lr]))
            for axis in (0, 1):
                cp = cv.coord_col.get(p, (-1, -1))[axis]
                cq = cv.coord_col.get(q, (-1, -1))[axis]
                if cp >= 0:
                    emit(np.array([cp]), np.array([cp]), np.array([-2.0 * lr]))
                if cq >= 0:
                    emit(np.array([cq]), np.array([cq]), np.array([-2.0 * lr]))
                if cp >= 0 and cq >= 0:
                    emit(np.array([cp]), np.array([cq]), np.array([2.0 * lr]))
                    emit(np.array([cq]), np.array([cp]), np.array([2.0 * lr]))

        pr = self.pair_row
        lam_ore = lam[self.r_ohm_re][:, pr]  # (T, P) multipliers of the rows
        lam_oim = lam[self.r_ohm_im][:, pr]
        lcols = lay.col_length[self.pair_branch][None, :]
        geom_col = np.where(self.pair_diag, self.pair_acol, self.pair_dcol)[None, :]

        # (length, I) cross terms
        v = -lam_ore * st["rn"] - lam_oim * st["xn"]
        emit(lcols, self.c_ibr[:, self.pair_col], v)
        emit(self.c_ibr[:, self.pair_col], lcols, v)
        v = lam_ore * st["xn"] - lam_oim * st["rn"]
        emit(lcols, self.c_ibi[:, self.pair_col], v)
        emit(self.c_ibi[:, self.pair_col], lcols, v)
        # (geometry, I) cross terms
        v = -lam_ore * st["len"] * st["drn"] - lam_oim * st["len"] * st["dxn"]
        emit(geom_col, self.c_ibr[:, self.pair_col], v)
        emit(self.c_ibr[:, self.pair_col], geom_col, v)
        v = lam_ore * st["len"] * st["dxn"] - lam_oim * st["len"] * st["drn"]
        emit(geom_col, self.c_ibi[:, self.pair_col], v)
        emit(self.c_ibi[:, self.pair_col], geom_col, v)
        # (length, geometry) cross terms
        v = lam_ore * (-st["drn"] * st["ire_p"] + st["dxn"] * st["iim_p"]) + lam_oim * (
            -st["drn"] * st["iim_p"] - st["dxn"] * st["ire_p"]
        )
        emit(lcols, geom_col, v)
        emit(geom_col, lcols, v)
        # pure geometry curvature
        v = lam_ore * st["len"] * (-st["d2rn"] * st["ire_p"] + st["d2xn"] * st["iim_p"]) + (
            lam_oim * st["len"] * (-st["d2rn"] * st["iim_p"] - st["d2xn"] * st["ire_p"])
        )
        emit(geom_col, geom_col, v)

        # projection bilinearities
        lam_p = lam[self.r_pdef]
        lam_q = lam[self.r_qdef]
        lam_u = lam[self.r_udef]
        pc, ncd = self.meas_pcond, self.meas_ncond
        c_urep, c_uren = self.c_ure[:, pc], self.c_ure[:, ncd]
        c_uimp, c_uimn = self.c_uim[:, pc], self.c_uim[:, ncd]
        c_imr, c_imi = self.c_iur[:, self.meas_up], self.c_iui[:, self.meas_up]
        for ua, ub_, sgn in ((c_urep, c_imr, -1.0), (c_uren, c_imr, 1.0)):
            emit(ua, ub_, sgn * lam_p)
            emit(ub_, ua, sgn * lam_p)
        for ua, ub_, sgn in ((c_uimp, c_imi, -1.0), (c_uimn, c_imi, 1.0)):
            emit(ua, ub_, sgn * lam_p)
            emit(ub_, ua, sgn * lam_p)
        for ua, ub_, sgn in (
            (c_uimp, c_imr, -1.0),
            (c_uimn, c_imr, 1.0),
            (c_urep, c_imi, 1.0),
            (c_uren, c_imi, -1.0),
        ):
            emit(ua, ub_, sgn * lam_q)
            emit(ub_, ua, sgn * lam_q)
        emit(self.c_ua, self.c_ua, 2.0 * lam_u)
        for ua, ub_ in ((c_urep, c_uren), (c_uimp, c_uimn)):
            emit(ua, ua, -2.0 * lam_u)
            emit(ub_, ub_, -2.0 * lam_u)
            emit(ua, ub_, 2.0 * lam_u)
            emit(ub_, ua, 2.0 * lam_u)

        h = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_vars, self.n_vars),
        )
        return h.tocsr()

    # ------------------------------------------------------------------
    # inspection helpers
    # ------------------------------------------------------------------

    def stats(self) -> dict:
        f0 = self.initial_point
        nnz = None
        if f0 is not None:
            nnz = int(self.evaluate(f0)[2].nnz)
        return {
            "restriction": self.mode.value,
            "n_vars": int(self.n_vars),
            "n_eq": int(self.n_eq),
            "n_ineq": int(self.n_ineq),
            "n_impedance_vars": int(self.layout.n_imp),
            "n_steps": int(self.layout.n_steps),
            "n_measurements": int(self.layout.n_meas * self.layout.n_steps * 3),
            "jacobian_nnz": nnz,
        }

    def jacobian_structure(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.initial_point
        if x is None:
            x = np.clip(np.zeros(self.n_vars), self._lb, self._ub)
            x = np.where(np.isfinite(x), x, 0.0)
        j = self.evaluate(np.asarray(x, dtype=float))[2].tocoo()
        order = np.lexsort((j.col, j.row))
        return j.row[order], j.col[order]

    def extract_lengths(self, x: np.ndarray) -> dict[str, float]:
        return {
            br.id: float(x[self.layout.col_length[li]])
            for li, br in enumerate(self.model.branches)
        }

    def extract_code_estimates(self, x: np.ndarray) -> dict[str, dict]:
        """Per-code cross-sections, spacings and the nominal matrix implied
        by the geometry variables (through the same Carson kernel)."""
        out = {}
        for cid, cv in self.layout.codevars.items():
            code = self.model.code_catalog[cid]
            conds = cv.conds
            areas = {c: float(x[cv.acol[c]]) for c in conds}
            dmat = np.zeros((len(conds), len(conds)))
            dists = {}
            for i, p in enumerate(conds):
                for j, q in enumerate(conds):
                    if i == j:
                        continue
                    key = (p, q) if (p, q) in cv.dcol else (q, p)
                    col, fac = cv.dcol[key]
                    dmat[i, j] = fac * float(x[col])
                    dists[key] = dmat[i, j]
            res = np.array(
                [carson.self_resistance(code.conductors[c].material, areas[c], code.temperature) for c in conds]
            )
            gmrs = np.array([carson.gmr_round(areas[c]) for c in conds])
            nominal = carson.nominal_matrix(conds, res, gmrs, dmat)
            out[cid] = {"areas": areas, "distances": dists, "nominal": nominal}
        return out

    def branch_nominals(self, x: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """(R, X) per-km matrices per branch as used inside the Ohm rows."""
        st = self._state(np.asarray(x, dtype=float))
        out = {}
        for li, br in enumerate(self.model.branches):
            m = len(br.phase_set)
            sel = self.pair_branch == li
            out[br.id] = (st["rn"][sel].reshape(m, m), st["xn"][sel].reshape(m, m))
        return out

    def measurement_arrays(self, x: np.ndarray) -> dict:
        """Measured-quantity projections, residual variables, z and sigma
        (all (n_steps, n_meas)) for residual-exactness checks."""
        st = self._state(np.asarray(x, dtype=float))
        return {
            "x": {"p": st["xp"], "q": st["xq"], "u_mag": st["ua"]},
            "rho": {"p": st["rp"], "q": st["rq"], "u_mag": st["ru"]},
            "z": self.z,
            "sigma": self.sig,
        }


def build_problem(
    model: NetworkModel,
    measurements: MeasurementSet,
    restriction: RestrictionSet | RestrictionMode = RestrictionMode.NO_REST,
    options: BuildOptions | None = None,
) -> EstimationProblem:
    """Assemble the estimation NLP over the training split."""
    return EstimationProblem(model, measurements, restriction, options)


def apply_restrictions(problem: EstimationProblem, mode: RestrictionMode) -> EstimationProblem:
    """Rebuild the problem under a different domain-knowledge mode."""
    return EstimationProblem(problem.model, problem.measurements, mode, problem.options)


def evaluate(problem: EstimationProblem, point: np.ndarray):
    """(objective, constraint values, sparse Jacobian, objective gradient)."""
    return problem.evaluate(point)


def _initial_codes(model: NetworkModel, options: BuildOptions, mode: RestrictionMode) -> dict:
    """Mid-bound geometry guesses: every cross-section at ``init_area``,
    conductors on an ``init_spacing`` square (layout-restricted modes use
    the exactly feasible triangular arrangement instead)."""
    from .feeders import cable_layout

    s = options.init_spacing
    guesses = {}
    for cid, code in model.code_catalog.items():
        if len(code.phase_set) == 4:
            if mode.fixes_layout:
                centers = cable_layout(s)
            else:
                centers = {"a": (0.0, 0.0), "b": (s, 0.0), "c": (0.0, s), "n": (s, s)}
        else:
            centers = {code.phase_set[0]: (0.0, 0.0), "n": (s, 0.0)}
        conductors = {
            c: ConductorGeometry(
                cross_section=options.init_area,
                center=centers[c],
                material=code.conductors[c].material,
            )
            for c in code.phase_set
        }
        guesses[cid] = ConstructionCode(cid, code.phase_set, conductors, code.temperature)
    return guesses


def initialize(problem: EstimationProblem, model: NetworkModel | None = None,
               measurements: MeasurementSet | None = None) -> np.ndarray:
    """Initial point: geometry at mid-bounds, lengths at nominal, states
    seeded from one power flow at the median-load training step, residuals
    at their epigraph values plus a strict-interior margin."""
    model = model or problem.model
    mset = measurements or problem.measurements
    lay = problem.layout
    opt = problem.options
    x = np.zeros(problem.n_vars)

    for li, br in enumerate(model.branches):
        x[lay.col_length[li]] = br.length_nominal_km
    s = opt.init_spacing
    for cid, cv in lay.codevars.items():
        for col in set(cv.acol.values()):
            x[col] = opt.init_area
        if cv.coord_col:
            centers = {"a": (0.0, 0.0), "b": (s, 0.0), "c": (0.0, s), "n": (s, s)}
            for c, (cx, cy) in cv.coord_col.items():
                x[cx], x[cy] = centers[c]
            for (p, q), (col, _f) in cv.dcol.items():
                x[col] = math.dist(centers[p], centers[q])
        elif cv.g_link:
            x[cv.dcol[("a", "b")][0]] = s
            x[cv.dcol[("a", "n")][0]] = (1.0 + 1.0 / _SQRT2) * s
            x[cv.dcol[("c", "n")][0]] = math.sqrt(1.5) * s
        else:
            for col, _f in set(cv.dcol.values()):
                x[col] = s

    # seed all step states from one power flow at the median-load training
    # step, run on the guessed geometry and nominal lengths
    import dataclasses

    guess_model = NetworkModel(
        model.buses,
        [dataclasses.replace(br, length_km=br.length_nominal_km) for br in model.branches],
        model.users,
        _initial_codes(model, opt, problem.mode),
        validate=False,
    )
    jtrain = np.array([mset.time_pos(t) for t in lay.train_times])
    cols = np.array(lay.meas_col)
    zp = mset.z["p"][np.ix_(cols, jtrain)]
    zq = mset.z["q"][np.ix_(cols, jtrain)]
    totals = zp.sum(axis=0)
    med_j = int(np.argsort(totals, kind="stable")[len(totals) // 2])

    idx = model.index
    p_full = np.zeros((idx.n_user_phase, 1))
    q_full = np.zeros((idx.n_user_phase, 1))
    p_full[lay.meas_userphase, 0] = zp[:, med_j]
    q_full[lay.meas_userphase, 0] = zq[:, med_j]
    try:
        pt = solve_power_flow(guess_model, LoadSpec(p_full, q_full), 0, u_slack=opt.u_slack)
        u, ibr, iu = pt.u, pt.i_branch, pt.i_user
    except PowerFlowError as exc:
        log.warning("seeding power flow failed (%s); falling back to a flat start", exc)
        u = idx.slack_voltage(opt.u_slack)
        for k, (bi, cc) in enumerate(idx.bus_cond):
            ang = {"a": 0.0, "b": -2 * math.pi / 3, "c": 2 * math.pi / 3, "n": 0.0}[cc]
            u[k] = 0.0 if cc == "n" else opt.u_slack * np.exp(1j * ang)
        ibr = np.zeros(idx.n_branch_cond, dtype=complex)
        iu = np.zeros(idx.n_user_phase, dtype=complex)

    keep = ~idx.is_slack_bus_cond
    du = u[idx.user_bus_cond[lay.meas_userphase]] - u[idx.user_neutral_cond[lay.meas_userphase]]
    imr, imi = iu[lay.meas_userphase].real, iu[lay.meas_userphase].imag
    xp0 = du.real * imr + du.imag * imi
    xq0 = du.imag * imr - du.real * imi
    ua0 = np.abs(du)
    for k in range(lay.n_steps):
        b = lay.step_base[k]
        x[b + lay.o_ure : b + lay.o_ure + lay.n_red] = u[keep].real
        x[b + lay.o_uim : b + lay.o_uim + lay.n_red] = u[keep].imag
        x[b + lay.o_ibr : b + lay.o_ibr + idx.n_branch_cond] = ibr.real
        x[b + lay.o_ibi : b + lay.o_ibi + idx.n_branch_cond] = ibr.imag
        x[b + lay.o_iur : b + lay.o_iur + idx.n_user_phase] = iu.real
        x[b + lay.o_iui : b + lay.o_iui + idx.n_user_phase] = iu.imag
        x[b + lay.o_xp : b + lay.o_xp + lay.n_meas] = xp0
        x[b + lay.o_xq : b + lay.o_xq + lay.n_meas] = xq0
        x[b + lay.o_ua : b + lay.o_ua + lay.n_meas] = ua0
        for q, x0v, off in (("p", xp0, lay.o_rp), ("q", xq0, lay.o_rq), ("u_mag", ua0, lay.o_ru)):
            e = np.abs(x0v - problem.z[q][k]) / problem.sig[q][k]
            x[b + off : b + off + lay.n_meas] = 1.1 * e + 1.0
    problem.initial_point = x
    return x
