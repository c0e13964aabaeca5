"""Load-profile generation, time-step ranking and synthetic smart-meter
measurement creation with multiplicative Gaussian noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netmodel import NetworkModel
from .powerflow import LoadSpec, OperatingPoint, solve_many

RESOLUTION_MINUTES = 15
STEPS_PER_DAY = 24 * 60 // RESOLUTION_MINUTES
SIGMA_FLOOR = 1e-6
# relative noise draws are clamped here; a >20 sigma event would otherwise
# be able to flip the sign of small P samples
NOISE_CLAMP = 1.0 / 3.0

QUANTITIES = ("p", "q", "u_mag")


@dataclass(frozen=True)
class ProfileSpec:
    """Generator configuration for synthetic residential profiles."""

    user_phases: tuple[tuple[str, str], ...]  # (user_id, phase)
    horizon_steps: int = 365 * STEPS_PER_DAY
    seed: int = 0
    peak_kw_range: tuple[float, float] = (2.0, 6.0)
    power_factor_range: tuple[float, float] = (0.90, 0.98)
    n_train: int = 200
    n_val: int = 400


@dataclass(frozen=True)
class ProfileSet:
    """Active-power series per (user, phase) plus one power factor per user."""

    columns: tuple[tuple[str, str], ...]
    p_w: np.ndarray  # (n_columns, horizon)
    power_factor: dict[str, float]
    resolution_minutes: int = RESOLUTION_MINUTES

    @property
    def horizon(self) -> int:
        return self.p_w.shape[1]

    def q_var(self) -> np.ndarray:
        pf = np.array([self.power_factor[u] for u, _ in self.columns])
        return self.p_w * np.tan(np.arccos(pf))[:, None]

    def scaled(self, multiplier: float) -> "ProfileSet":
        return ProfileSet(self.columns, self.p_w * multiplier, dict(self.power_factor))

    def total_p(self) -> np.ndarray:
        return self.p_w.sum(axis=0)


@dataclass(frozen=True)
class NoiseSpec:
    """Maximum relative errors under the 3-sigma convention."""

    u_mag_max_rel: float = 0.005
    p_max_rel: float = 0.01
    q_max_rel: float = 0.02
    seed: int = 0

    def sigma_rel(self, quantity: str) -> float:
        return {
            "u_mag": self.u_mag_max_rel,
            "p": self.p_max_rel,
            "q": self.q_max_rel,
        }[quantity] / 3.0


@dataclass(frozen=True)
class MeasurementSet:
    """Per (user, phase, time) measurements with per-measurement sigma.

    ``times`` is sorted ascending; ``split`` tags each time as train or
    validation. Value arrays are shaped (n_columns, n_times).
    """

    columns: tuple[tuple[str, str], ...]
    times: np.ndarray
    split: tuple[str, ...]
    z: dict[str, np.ndarray]
    sigma: dict[str, np.ndarray]
    noise: NoiseSpec
    truth: dict[str, np.ndarray] = field(repr=False, default=None)

    def time_pos(self, t: int) -> int:
        pos = int(np.searchsorted(self.times, t))
        if pos >= len(self.times) or self.times[pos] != t:
            raise KeyError(f"time index {t} not in measurement set")
        return pos

    def select(self, which: str) -> np.ndarray:
        return self.times[np.array([s == which for s in self.split])]


class SynthesisError(RuntimeError):
    pass


def generate_profiles(spec: ProfileSpec) -> ProfileSet:
    """Reproducible daily-shaped pseudo-random profiles.

    Each user gets a peak level, power factor, and its own randomized
    morning/evening bump mix; samples stay inside [0, peak].
    """
    if spec.horizon_steps < spec.n_train + spec.n_val:
        raise ValueError(
            f"horizon {spec.horizon_steps} shorter than requested "
            f"train+validation size {spec.n_train + spec.n_val}"
        )
    t = np.arange(spec.horizon_steps)
    hour = (t % STEPS_PER_DAY) * (24.0 / STEPS_PER_DAY)
    day = t // STEPS_PER_DAY
    weekend = (day % 7) >= 5

    p = np.zeros((len(spec.user_phases), spec.horizon_steps))
    pf: dict[str, float] = {}
    for k, (user_id, _phase) in enumerate(spec.user_phases):
        rng = np.random.default_rng([spec.seed, k])
        peak = rng.uniform(*spec.peak_kw_range) * 1e3
        if user_id not in pf:
            pf[user_id] = float(rng.uniform(*spec.power_factor_range))
        else:
            rng.uniform(*spec.power_factor_range)  # keep the stream aligned
        m_amp = rng.uniform(0.15, 0.35)
        e_amp = rng.uniform(0.45, 0.60)
        m_h = rng.uniform(6.5, 9.0)
        e_h = rng.uniform(17.5, 20.5)
        shape = (
            0.12
            + m_amp * np.exp(-((hour - m_h) ** 2) / (2 * 2.0**2))
            + e_amp * np.exp(-((hour - e_h) ** 2) / (2 * 2.5**2))
        )
        shape = shape * np.where(weekend, 1.15, 1.0)
        jitter = rng.uniform(0.5, 1.25, size=spec.horizon_steps)
        p[k] = np.clip(peak * shape * jitter, 0.0, peak)
    return ProfileSet(tuple(spec.user_phases), p, pf)


def profiles_for_model(model: NetworkModel, **kwargs) -> ProfileSet:
    """Profiles with one column per metered (user, phase) of a model."""
    cols = tuple(
        (model.users[ui].user_id, p)
        for ui, p in model.index.user_phase
        if model.users[ui].has_meter
    )
    return generate_profiles(ProfileSpec(user_phases=cols, **kwargs))


def rank_and_split(
    profiles: ProfileSet, n_train: int = 200, n_val: int = 400
) -> tuple[np.ndarray, np.ndarray]:
    """Most-loaded time-step split.

    Steps are ranked by total network active power, descending; ties break
    toward the earlier time index. The first ``n_train`` become the
    training set, the next ``n_val`` the validation set.
    """
    if profiles.horizon < n_train + n_val:
        raise ValueError(
            f"horizon {profiles.horizon} too short for split {n_train}+{n_val}"
        )
    order = np.argsort(-profiles.total_p(), kind="stable")
    return order[:n_train].copy(), order[n_train : n_train + n_val].copy()


def load_spec_from_profiles(model: NetworkModel, profiles: ProfileSet) -> LoadSpec:
    """Map profile columns onto the model's metered (user, phase) order."""
    idx = model.index
    col_of = {c: k for k, c in enumerate(profiles.columns)}
    rows = []
    for ui, p in idx.user_phase:
        key = (model.users[ui].user_id, p)
        if key not in col_of:
            raise SynthesisError(f"profiles missing column for user {key[0]!r} phase {key[1]!r}")
        rows.append(col_of[key])
    p_w = profiles.p_w[rows]
    q_var = profiles.q_var()[rows]
    return LoadSpec(p_w=p_w, q_var=q_var)


def _noise_eps(seed: int, col: int, t: int, quantity: int, sigma_rel: float) -> float:
    if sigma_rel == 0.0:
        return 0.0
    draw = np.random.default_rng([seed, col, t, quantity]).standard_normal()
    return float(np.clip(sigma_rel * draw, -NOISE_CLAMP, NOISE_CLAMP))


def synthesize(
    model: NetworkModel,
    profiles: ProfileSet,
    noise: NoiseSpec,
    indices: tuple[np.ndarray, np.ndarray],
    u_slack: float = 230.0,
    pf_tol: float = 1e-11,
) -> tuple[MeasurementSet, dict[int, OperatingPoint]]:
    """Create noisy measurements plus the noise-free ground-truth states.

    ``indices`` is the (train, validation) pair from :func:`rank_and_split`.
    Noise draws are keyed per (column, time, quantity) from the seed, so
    the result does not depend on evaluation order.
    """
    train_idx, val_idx = (np.asarray(ix, dtype=int) for ix in indices)
    loads = load_spec_from_profiles(model, profiles)
    all_times = np.concatenate([train_idx, val_idx])
    points = solve_many(model, loads, all_times, u_slack=u_slack, tol=pf_tol)

    order = np.argsort(all_times)
    times = all_times[order]
    tags = np.array(["train"] * len(train_idx) + ["val"] * len(val_idx))[order]
    idx = model.index
    metered = [m for m, (ui, _p) in enumerate(idx.user_phase) if model.users[ui].has_meter]
    cols = tuple((model.users[ui].user_id, p) for ui, p in (idx.user_phase[m] for m in metered))
    n_up, n_t = len(cols), len(times)

    truth = {q: np.zeros((n_up, n_t)) for q in QUANTITIES}
    z = {q: np.zeros((n_up, n_t)) for q in QUANTITIES}
    sigma = {q: np.zeros((n_up, n_t)) for q in QUANTITIES}
    for j, t in enumerate(times):
        pt = points[int(t)]
        du = pt.u[idx.user_bus_cond[metered]] - pt.u[idx.user_neutral_cond[metered]]
        truth["p"][:, j] = pt.p_w[metered]
        truth["q"][:, j] = pt.q_var[metered]
        truth["u_mag"][:, j] = np.abs(du)
    for qi, q in enumerate(QUANTITIES):
        srel = noise.sigma_rel(q)
        for m in range(n_up):
            for j, t in enumerate(times):
                x = truth[q][m, j]
                eps = _noise_eps(noise.seed, m, int(t), qi, srel)
                z[q][m, j] = x * (1.0 + eps)
                sigma[q][m, j] = max(srel * abs(x), SIGMA_FLOOR)

    mset = MeasurementSet(
        columns=cols,
        times=times,
        split=tuple(tags),
        z=z,
        sigma=sigma,
        noise=noise,
        truth=truth,
    )
    return mset, points


# -- CSV interfaces ------------------------------------------------------------


def profiles_to_csv(profiles: ProfileSet, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"{u}:{p}" for u, p in profiles.columns])
        for t in range(profiles.horizon):
            w.writerow([t] + [f"{v:.10g}" for v in profiles.p_w[:, t]])


def profiles_from_csv(path, power_factor: dict[str, float] | None = None) -> ProfileSet:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:]
    columns = tuple((h.split(":")[0], h.split(":")[1]) for h in header)
    p = np.array([[float(v) for v in row[1:]] for row in rows[1:]]).T
    pf = power_factor or {u: 0.95 for u, _ in columns}
    return ProfileSet(columns, p, pf)


def measurements_to_csv(mset: MeasurementSet, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "time", "phase", "quantity", "value", "sigma", "split"])
        for m, (user, phase) in enumerate(mset.columns):
            for j, t in enumerate(mset.times):
                for q in QUANTITIES:
                    w.writerow(
                        [
                            user,
                            int(t),
                            phase,
                            q,
                            f"{mset.z[q][m, j]:.12g}",
                            f"{mset.sigma[q][m, j]:.12g}",
                            mset.split[j],
                        ]
                    )
