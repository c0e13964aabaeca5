"""Feeder topology model: buses, branches, user connections, construction
code assignments, series-bus reduction and impedance-variable accounting.

Models are immutable after construction; every operation returns a new
model or plain data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import carson
from .carson import ConductorGeometry, ConstructionCode, Material, material_table

CONDUCTORS = ("a", "b", "c", "n")
PHASES = ("a", "b", "c")

_VALID_PHASE_SETS = {
    ("a", "b", "c", "n"),
    ("a", "n"),
    ("b", "n"),
    ("c", "n"),
}


class NetworkError(ValueError):
    pass


class NetworkParseError(NetworkError):
    """Malformed network file."""


class NetworkValidationError(NetworkError):
    """Structurally valid file violating a model invariant."""


class NetworkTopologyError(NetworkError):
    """Operation requires a radial network."""


def normalize_phase_set(phases) -> tuple[str, ...]:
    """Canonical (a, b, c, n)-ordered conductor tuple.

    Accepts an iterable of labels or a compact string like ``"abcn"``.
    Only four-wire mains and two-wire (phase + neutral) services are valid.
    """
    if isinstance(phases, str):
        labels = tuple(phases)
    else:
        labels = tuple(phases)
    unknown = [p for p in labels if p not in CONDUCTORS]
    if unknown:
        raise NetworkValidationError(f"unknown conductor labels {unknown}")
    ordered = tuple(c for c in CONDUCTORS if c in labels)
    if ordered not in _VALID_PHASE_SETS:
        raise NetworkValidationError(
            f"phase set {list(labels)} is not four-wire or two-wire (phase + neutral)"
        )
    return ordered


@dataclass(frozen=True)
class Bus:
    id: str
    phase_set: tuple[str, ...]
    is_slack: bool = False
    # complex shunt admittance (S) per conductor; zero everywhere except the
    # slack neutral, which is modeled as a hard voltage pin instead.
    shunt_admittance: tuple[complex, ...] | None = None

    def shunt(self) -> np.ndarray:
        if self.shunt_admittance is None:
            return np.zeros(len(self.phase_set), dtype=complex)
        return np.asarray(self.shunt_admittance, dtype=complex)


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    phase_set: tuple[str, ...]
    code_id: str
    length_km: float
    length_nominal_km: float


@dataclass(frozen=True)
class UserConnection:
    user_id: str
    bus_id: str
    phases: tuple[str, ...]
    has_meter: bool = True


class NetworkModel:
    """Validated, immutable feeder model.

    Buses, branches and users keep file order; ``code_catalog`` maps
    code ids to their construction codes.
    """

    def __init__(self, buses, branches, users, code_catalog, validate: bool = True):
        self.buses: tuple[Bus, ...] = tuple(buses)
        self.branches: tuple[Branch, ...] = tuple(branches)
        self.users: tuple[UserConnection, ...] = tuple(users)
        self.code_catalog: dict[str, ConstructionCode] = dict(code_catalog)
        self.bus_pos = {b.id: i for i, b in enumerate(self.buses)}
        self.branch_pos = {b.id: i for i, b in enumerate(self.branches)}
        self.user_pos = {u.user_id: i for i, u in enumerate(self.users)}
        if validate:
            self._validate()

    # -- invariants ---------------------------------------------------------

    def _validate(self):
        if len(self.bus_pos) != len(self.buses):
            raise NetworkValidationError("duplicate bus ids")
        if len(self.branch_pos) != len(self.branches):
            raise NetworkValidationError("duplicate branch ids")
        if len(self.user_pos) != len(self.users):
            raise NetworkValidationError("duplicate user ids")
        slacks = [b.id for b in self.buses if b.is_slack]
        if len(slacks) != 1:
            raise NetworkValidationError(
                f"exactly one slack bus required, found {slacks or 'none'}"
            )
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in self.bus_pos:
                    raise NetworkValidationError(f"branch {br.id!r}: unknown bus {end!r}")
            if br.length_km <= 0.0:
                raise NetworkValidationError(f"branch {br.id!r}: length must be > 0")
            lo, hi = 0.7 * br.length_nominal_km, 1.3 * br.length_nominal_km
            if not (lo <= br.length_km <= hi):
                raise NetworkValidationError(
                    f"branch {br.id!r}: length {br.length_km} km outside "
                    f"[0.7, 1.3] x nominal ({br.length_nominal_km} km)"
                )
            if br.code_id not in self.code_catalog:
                raise NetworkValidationError(
                    f"branch {br.id!r}: construction code {br.code_id!r} missing from catalog"
                )
            # two-wire codes are generic (phase, neutral) pairs reused on any
            # phase, so conductors map positionally onto the branch phase set
            code = self.code_catalog[br.code_id]
            if len(code.phase_set) != len(br.phase_set):
                raise NetworkValidationError(
                    f"branch {br.id!r}: phase set {br.phase_set} does not match "
                    f"code {br.code_id!r} ({tuple(code.phase_set)})"
                )
            for end in (br.from_bus, br.to_bus):
                bus = self.buses[self.bus_pos[end]]
                if not set(br.phase_set) <= set(bus.phase_set):
                    raise NetworkValidationError(
                        f"branch {br.id!r}: conductors {br.phase_set} not all present "
                        f"at bus {end!r} ({bus.phase_set})"
                    )
        for u in self.users:
            if u.bus_id not in self.bus_pos:
                raise NetworkValidationError(f"user {u.user_id!r}: unknown bus {u.bus_id!r}")
            if not u.phases or not set(u.phases) <= set(PHASES):
                raise NetworkValidationError(
                    f"user {u.user_id!r}: phases must be a non-empty subset of a/b/c"
                )
            bus = self.buses[self.bus_pos[u.bus_id]]
            missing = [p for p in u.phases if p not in bus.phase_set]
            if missing or "n" not in bus.phase_set:
                raise NetworkValidationError(
                    f"user {u.user_id!r}: bus {u.bus_id!r} lacks conductors "
                    f"{missing + ([] if 'n' in bus.phase_set else ['n'])}"
                )
        self._check_connected()

    def _check_connected(self):
        if not self.buses:
            raise NetworkValidationError("empty network")
        seen = {self.slack_bus().id}
        frontier = [self.slack_bus().id]
        adj: dict[str, list[str]] = {}
        for br in self.branches:
            adj.setdefault(br.from_bus, []).append(br.to_bus)
            adj.setdefault(br.to_bus, []).append(br.from_bus)
        while frontier:
            nxt = []
            for b in frontier:
                for other in adj.get(b, ()):
                    if other not in seen:
                        seen.add(other)
                        nxt.append(other)
            frontier = nxt
        orphans = [b.id for b in self.buses if b.id not in seen]
        if orphans:
            raise NetworkValidationError(f"buses not connected to the slack: {orphans}")

    # -- simple accessors ----------------------------------------------------

    def slack_bus(self) -> Bus:
        return next(b for b in self.buses if b.is_slack)

    def users_at(self, bus_id: str) -> list[UserConnection]:
        return [u for u in self.users if u.bus_id == bus_id]

    def is_zero_injection(self, bus_id: str) -> bool:
        bus = self.buses[self.bus_pos[bus_id]]
        return not bus.is_slack and not self.users_at(bus_id)

    def branches_at(self, bus_id: str) -> list[Branch]:
        return [b for b in self.branches if bus_id in (b.from_bus, b.to_bus)]

    def is_radial(self) -> bool:
        return len(self.branches) == len(self.buses) - 1

    def branch_impedance(self, branch: Branch) -> np.ndarray:
        """Complex impedance matrix (ohm) from the catalog geometry."""
        nom = carson.carson_nominal(self.code_catalog[branch.code_id])
        return carson.scale_by_length(nom, branch.length_km)

    @property
    def index(self) -> "ConductorIndex":
        if not hasattr(self, "_index"):
            self._index = ConductorIndex(self)
        return self._index


# -- file I/O ---------------------------------------------------------------


def _parse_material(spec, table) -> Material:
    if isinstance(spec, str):
        if spec not in table:
            raise NetworkParseError(f"unknown material {spec!r}")
        return table[spec]
    return Material(
        name=spec.get("name", "custom"),
        resistivity=spec["resistivity_ohm_mm2_per_m"],
        temperature_coefficient=spec["temperature_coefficient_per_c"],
        relative_permeability=spec.get("relative_permeability", 1.0),
    )


def _parse_code(code_id: str, raw: dict, table) -> ConstructionCode:
    phase_set = normalize_phase_set(raw["phases"])
    conductors = {}
    for label, c in raw["conductors"].items():
        strands = None
        if c.get("strands"):
            strands = tuple(
                (s["area_mm2"], (s["center_mm"][0], s["center_mm"][1]))
                for s in c["strands"]
            )
        conductors[label] = ConductorGeometry(
            cross_section=c["area_mm2"],
            center=(c["center_mm"][0], c["center_mm"][1]),
            material=_parse_material(c["material"], table),
            strand_layout=strands,
        )
    return ConstructionCode(
        code_id=code_id,
        phase_set=phase_set,
        conductors=conductors,
        temperature=raw.get("temperature_c", carson.DEFAULT_TEMPERATURE_C),
    )


def load_network(path) -> NetworkModel:
    """Load and validate a network model from its JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise NetworkParseError(f"cannot read network file {path}: {exc}") from exc
    return network_from_dict(raw)


def network_from_dict(raw: dict) -> NetworkModel:
    version = raw.get("format_version")
    if version != 1:
        raise NetworkParseError(f"unsupported format_version {version!r}")
    for key in ("buses", "branches", "users", "codes", "slack"):
        if key not in raw:
            raise NetworkParseError(f"missing top-level key {key!r}")
    table = material_table()
    try:
        codes = {cid: _parse_code(cid, spec, table) for cid, spec in raw["codes"].items()}
        slack_id = raw["slack"]
        buses = [
            Bus(
                id=b["id"],
                phase_set=normalize_phase_set(b["phases"]),
                is_slack=b["id"] == slack_id,
            )
            for b in raw["buses"]
        ]
        branches = [
            Branch(
                id=b["id"],
                from_bus=b["from"],
                to_bus=b["to"],
                phase_set=normalize_phase_set(b["phases"]),
                code_id=b["code"],
                length_km=b["length_km"],
                length_nominal_km=b.get("length_nominal_km", b["length_km"]),
            )
            for b in raw["branches"]
        ]
        users = [
            UserConnection(
                user_id=u["id"],
                bus_id=u["bus"],
                phases=tuple(p for p in PHASES if p in tuple(u["phases"])),
                has_meter=u.get("meter", True),
            )
            for u in raw["users"]
        ]
    except (KeyError, TypeError) as exc:
        raise NetworkParseError(f"malformed network entry: {exc}") from exc
    if not any(b.id == slack_id for b in buses):
        raise NetworkValidationError(f"slack bus {slack_id!r} not among buses")
    return NetworkModel(buses, branches, users, codes)


def network_to_dict(model: NetworkModel) -> dict:
    def code_dict(code: ConstructionCode) -> dict:
        conds = {}
        for label, g in code.conductors.items():
            entry = {
                "area_mm2": g.cross_section,
                "center_mm": list(g.center),
                "material": g.material.name,
            }
            if g.strand_layout:
                entry["strands"] = [
                    {"area_mm2": a, "center_mm": list(c)} for a, c in g.strand_layout
                ]
            conds[label] = entry
        return {
            "phases": "".join(code.phase_set),
            "temperature_c": code.temperature,
            "conductors": conds,
        }

    return {
        "format_version": 1,
        "slack": model.slack_bus().id,
        "buses": [{"id": b.id, "phases": "".join(b.phase_set)} for b in model.buses],
        "branches": [
            {
                "id": b.id,
                "from": b.from_bus,
                "to": b.to_bus,
                "phases": "".join(b.phase_set),
                "code": b.code_id,
                "length_km": b.length_km,
                "length_nominal_km": b.length_nominal_km,
            }
            for b in model.branches
        ],
        "users": [
            {"id": u.user_id, "bus": u.bus_id, "phases": "".join(u.phases), "meter": u.has_meter}
            for u in model.users
        ],
        "codes": {cid: code_dict(code) for cid, code in model.code_catalog.items()},
    }


def save_network(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(model), indent=1, sort_keys=True))


# -- series-bus reduction -----------------------------------------------------


def reduce_series_buses(model: NetworkModel) -> NetworkModel:
    """Merge series chains through zero-injection buses.

    A bus is removed when it carries no user, is not the slack, has exactly
    two incident branches and those branches share construction code and
    phase set; the merged branch length is the sum of the two. This is the
    only merge that leaves every cumulative path impedance unchanged.
    Idempotent: returns an equivalent model when nothing can be merged.
    """
    buses = list(model.buses)
    branches = list(model.branches)
    users = model.users

    def find_candidate():
        user_buses = {u.bus_id for u in users}
        degree: dict[str, list[Branch]] = {}
        for br in branches:
            degree.setdefault(br.from_bus, []).append(br)
            degree.setdefault(br.to_bus, []).append(br)
        for bus in buses:
            if bus.is_slack or bus.id in user_buses:
                continue
            incident = degree.get(bus.id, [])
            if len(incident) != 2:
                continue
            b1, b2 = incident
            if b1.code_id == b2.code_id and b1.phase_set == b2.phase_set:
                return bus, b1, b2
        return None

    changed = False
    while True:
        hit = find_candidate()
        if hit is None:
            break
        changed = True
        bus, b1, b2 = hit
        end1 = b1.from_bus if b1.to_bus == bus.id else b1.to_bus
        end2 = b2.from_bus if b2.to_bus == bus.id else b2.to_bus
        merged = Branch(
            id=f"{b1.id}+{b2.id}",
            from_bus=end1,
            to_bus=end2,
            phase_set=b1.phase_set,
            code_id=b1.code_id,
            length_km=b1.length_km + b2.length_km,
            length_nominal_km=b1.length_nominal_km + b2.length_nominal_km,
        )
        branches = [b for b in branches if b.id not in (b1.id, b2.id)] + [merged]
        buses = [b for b in buses if b.id != bus.id]
    if not changed:
        return model
    return NetworkModel(buses, branches, users, model.code_catalog)


def path_to_source(model: NetworkModel, bus_id: str) -> list[Branch]:
    """Ordered branch list from the slack bus to ``bus_id`` (radial only)."""
    if bus_id not in model.bus_pos:
        raise NetworkValidationError(f"unknown bus {bus_id!r}")
    if not model.is_radial():
        raise NetworkTopologyError(
            "network is meshed; no unique path exists - supply an explicit branch path"
        )
    parent: dict[str, tuple[str, Branch]] = {}
    seen = {model.slack_bus().id}
    frontier = [model.slack_bus().id]
    while frontier:
        nxt = []
        for b in frontier:
            for br in model.branches_at(b):
                other = br.to_bus if br.from_bus == b else br.from_bus
                if other not in seen:
                    seen.add(other)
                    parent[other] = (b, br)
                    nxt.append(other)
        frontier = nxt
    path = []
    cur = bus_id
    while cur in parent:
        prev, br = parent[cur]
        path.append(br)
        cur = prev
    return list(reversed(path))


# -- impedance-variable accounting -------------------------------------------


class CountMethod(Enum):
    LLE = "LLE"
    IME3 = "IME3"
    IME3_TRANSP_R = "IME3_transpR"
    IME4 = "IME4"
    IME4_TRANSP_R = "IME4_transpR"
    CARSON = "CARSON"
    CARSON_WORST = "CARSON_worst"


@dataclass(frozen=True)
class VariableCount:
    n_length: int
    n_r: int
    n_x: int
    n_r_code: int
    n_x_code: int

    @property
    def total(self) -> int:
        return self.n_length + self.n_r + self.n_x + self.n_r_code + self.n_x_code


def count_impedance_variables(model: NetworkModel, method: CountMethod) -> VariableCount:
    """Impedance-variable counts of the competing estimation formulations.

    Counts follow the per-method row formulas; three-phase means a
    four-conductor phase set, single-phase a two-conductor one. The
    published per-row example totals are known to assume mutually
    inconsistent feeder splits, so only the formulas are normative.
    """
    e3 = sum(1 for b in model.branches if len(b.phase_set) == 4)
    e1 = sum(1 for b in model.branches if len(b.phase_set) == 2)
    k3 = sum(1 for c in model.code_catalog.values() if len(c.phase_set) == 4)
    k1 = sum(1 for c in model.code_catalog.values() if len(c.phase_set) == 2)
    n_e = e3 + e1
    method = CountMethod(method)
    if method is CountMethod.LLE:
        return VariableCount(n_e, 0, 0, 0, 0)
    if method is CountMethod.IME3:
        return VariableCount(0, 6 * e3 + e1, 6 * e3 + e1, 0, 0)
    if method is CountMethod.IME3_TRANSP_R:
        return VariableCount(0, 4 * e3 + e1, 6 * e3 + e1, 0, 0)
    if method is CountMethod.IME4:
        return VariableCount(0, 10 * e3 + 3 * e1, 10 * e3 + 3 * e1, 0, 0)
    if method is CountMethod.IME4_TRANSP_R:
        return VariableCount(0, 5 * e3 + 3 * e1, 10 * e3 + 3 * e1, 0, 0)
    if method is CountMethod.CARSON:
        return VariableCount(n_e, 0, 0, 4 * k3 + 2 * k1, 10 * k3 + 3 * k1)
    if method is CountMethod.CARSON_WORST:
        return VariableCount(n_e, 0, 0, 4 * e3 + 2 * e1, 10 * e3 + 3 * e1)
    raise ValueError(f"unknown counting method {method!r}")


# -- conductor indexing --------------------------------------------------------


class ConductorIndex:
    """Flat enumeration of (bus, conductor), (branch, conductor) and
    (user, phase) pairs, with the incidence maps used to assemble KCL.

    The same ordering underpins the power-flow solver and the estimation
    problem, so operating points can be moved between them without
    translation.
    """

    def __init__(self, model: NetworkModel):
        self.model = model
        self.bus_cond: list[tuple[int, str]] = []
        self.bus_cond_idx: dict[tuple[int, str], int] = {}
        for bi, bus in enumerate(model.buses):
            for c in bus.phase_set:
                self.bus_cond_idx[(bi, c)] = len(self.bus_cond)
                self.bus_cond.append((bi, c))
        self.n_bus_cond = len(self.bus_cond)

        self.branch_cond: list[tuple[int, str]] = []
        self.branch_cond_idx: dict[tuple[int, str], int] = {}
        for li, br in enumerate(model.branches):
            for c in br.phase_set:
                self.branch_cond_idx[(li, c)] = len(self.branch_cond)
                self.branch_cond.append((li, c))
        self.n_branch_cond = len(self.branch_cond)

        self.user_phase: list[tuple[int, str]] = []
        self.user_phase_idx: dict[tuple[int, str], int] = {}
        for ui, user in enumerate(model.users):
            for p in user.phases:
                self.user_phase_idx[(ui, p)] = len(self.user_phase)
                self.user_phase.append((ui, p))
        self.n_user_phase = len(self.user_phase)

        slack_pos = model.bus_pos[model.slack_bus().id]
        self.slack_pos = slack_pos
        self.is_slack_bus_cond = np.array(
            [bi == slack_pos for bi, _ in self.bus_cond], dtype=bool
        )

        # branch conductor k runs from `from_bus_cond[k]` to `to_bus_cond[k]`
        self.from_bus_cond = np.array(
            [
                self.bus_cond_idx[(model.bus_pos[model.branches[li].from_bus], c)]
                for li, c in self.branch_cond
            ],
            dtype=int,
        )
        self.to_bus_cond = np.array(
            [
                self.bus_cond_idx[(model.bus_pos[model.branches[li].to_bus], c)]
                for li, c in self.branch_cond
            ],
            dtype=int,
        )
        # user phase m draws current from `user_bus_cond[m]`, returning on
        # `user_neutral_cond[m]`
        self.user_bus_cond = np.array(
            [
                self.bus_cond_idx[(model.bus_pos[model.users[ui].bus_id], p)]
                for ui, p in self.user_phase
            ],
            dtype=int,
        )
        self.user_neutral_cond = np.array(
            [
                self.bus_cond_idx[(model.bus_pos[model.users[ui].bus_id], "n")]
                for ui, p in self.user_phase
            ],
            dtype=int,
        )
        self.branch_of_cond = np.array([li for li, _ in self.branch_cond], dtype=int)

    def slack_voltage(self, u_mag: float = 230.0) -> np.ndarray:
        """Ground-referenced slack phasors over bus conductors (a, b, c at
        ``u_mag`` with 0/-120/+120 degrees, neutral pinned at 0)."""
        angles = {"a": 0.0, "b": -2.0 * np.pi / 3.0, "c": 2.0 * np.pi / 3.0, "n": 0.0}
        mags = {"a": u_mag, "b": u_mag, "c": u_mag, "n": 0.0}
        out = np.zeros(self.n_bus_cond, dtype=complex)
        for k, (bi, c) in enumerate(self.bus_cond):
            if bi == self.slack_pos:
                out[k] = mags[c] * np.exp(1j * angles[c])
        return out
