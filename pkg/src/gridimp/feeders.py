"""Synthetic test feeders.

Stand-ins for real GIS exports with the same statistical shape: a
four-wire main built from one or two construction codes plus two-wire
service drops. Used by the test suite and as demo inputs for the CLI.
"""

from __future__ import annotations

import math

import numpy as np

from .carson import ConductorGeometry, ConstructionCode, material_table
from .netmodel import Branch, Bus, NetworkModel, UserConnection

_MATERIALS = material_table()

_SQRT2 = math.sqrt(2.0)


def cable_layout(side_mm: float) -> dict[str, tuple[float, float]]:
    """Four-wire cable cross-section layout.

    Phases form a right isosceles triangle with legs ``side_mm`` (a at the
    reference corner) and the neutral sits on the a-diagonal. This is the
    one planar arrangement that satisfies the layout restriction equations
    exactly: D_ab = D_ac = D_bc/sqrt(2), D_an = D_ab/sqrt(2) + D_ac and
    D_bn = D_cn = sqrt(D_ac^2 + D_ab^2/2).
    """
    d = side_mm * (1.0 / _SQRT2 + 0.5)
    return {
        "a": (0.0, 0.0),
        "b": (side_mm, 0.0),
        "c": (0.0, side_mm),
        "n": (d, d),
    }


def four_wire_code(
    code_id: str,
    a_phase_mm2: float,
    a_neutral_mm2: float,
    side_mm: float,
    material: str = "aluminium",
    temperature: float = 65.0,
) -> ConstructionCode:
    mat = _MATERIALS[material]
    centers = cable_layout(side_mm)
    conductors = {
        p: ConductorGeometry(
            cross_section=a_neutral_mm2 if p == "n" else a_phase_mm2,
            center=centers[p],
            material=mat,
        )
        for p in ("a", "b", "c", "n")
    }
    return ConstructionCode(code_id, ("a", "b", "c", "n"), conductors, temperature)


def two_wire_code(
    code_id: str,
    a_phase_mm2: float,
    a_neutral_mm2: float,
    spacing_mm: float,
    material: str = "aluminium",
    temperature: float = 65.0,
) -> ConstructionCode:
    mat = _MATERIALS[material]
    conductors = {
        "a": ConductorGeometry(a_phase_mm2, (0.0, 0.0), mat),
        "n": ConductorGeometry(a_neutral_mm2, (spacing_mm, 0.0), mat),
    }
    return ConstructionCode(code_id, ("a", "n"), conductors, temperature)


def desk_feeder() -> NetworkModel:
    """Reduced nine-branch feeder: four-bus four-wire main (two codes),
    five single-phase service drops (two codes), five metered users."""
    codes = {
        "ug4_main_a": four_wire_code("ug4_main_a", 150.0, 95.0, 18.0, "aluminium"),
        "ug4_main_b": four_wire_code("ug4_main_b", 95.0, 50.0, 15.0, "aluminium"),
        "svc_al_25": two_wire_code("svc_al_25", 25.0, 16.0, 12.0, "aluminium"),
        "svc_cu_16": two_wire_code("svc_cu_16", 16.0, 12.0, 10.0, "copper"),
    }
    buses = [
        Bus("sub", ("a", "b", "c", "n"), is_slack=True),
        Bus("m1", ("a", "b", "c", "n")),
        Bus("m2", ("a", "b", "c", "n")),
        Bus("m3", ("a", "b", "c", "n")),
        Bus("m4", ("a", "b", "c", "n")),
        Bus("s1", ("a", "n")),
        Bus("s2", ("b", "n")),
        Bus("s3", ("c", "n")),
        Bus("s4", ("a", "n")),
        Bus("s5", ("b", "n")),
    ]
    abcn = ("a", "b", "c", "n")
    branches = [
        Branch("L1", "sub", "m1", abcn, "ug4_main_a", 0.120, 0.112),
        Branch("L2", "m1", "m2", abcn, "ug4_main_a", 0.100, 0.106),
        Branch("L3", "m2", "m3", abcn, "ug4_main_b", 0.080, 0.076),
        Branch("L4", "m3", "m4", abcn, "ug4_main_b", 0.060, 0.063),
        Branch("S1", "m1", "s1", ("a", "n"), "svc_al_25", 0.030, 0.028),
        Branch("S2", "m2", "s2", ("b", "n"), "svc_al_25", 0.025, 0.027),
        Branch("S3", "m3", "s3", ("c", "n"), "svc_al_25", 0.035, 0.033),
        Branch("S4", "m4", "s4", ("a", "n"), "svc_cu_16", 0.020, 0.021),
        Branch("S5", "m4", "s5", ("b", "n"), "svc_cu_16", 0.030, 0.029),
    ]
    users = [
        UserConnection("u1", "s1", ("a",)),
        UserConnection("u2", "s2", ("b",)),
        UserConnection("u3", "s3", ("c",)),
        UserConnection("u4", "s4", ("a",)),
        UserConnection("u5", "s5", ("b",)),
    ]
    return NetworkModel(buses, branches, users, codes)


def mini_feeder() -> NetworkModel:
    """Five-bus instance (two-branch main, two services, two users) for
    derivative checks and solver unit tests."""
    codes = {
        "main": four_wire_code("main", 120.0, 70.0, 16.0, "aluminium"),
        "svc": two_wire_code("svc", 25.0, 16.0, 12.0, "aluminium"),
    }
    abcn = ("a", "b", "c", "n")
    buses = [
        Bus("sub", abcn, is_slack=True),
        Bus("m1", abcn),
        Bus("m2", abcn),
        Bus("s1", ("a", "n")),
        Bus("s2", ("b", "n")),
    ]
    branches = [
        Branch("L1", "sub", "m1", abcn, "main", 0.15, 0.14),
        Branch("L2", "m1", "m2", abcn, "main", 0.10, 0.11),
        Branch("S1", "m1", "s1", ("a", "n"), "svc", 0.03, 0.028),
        Branch("S2", "m2", "s2", ("b", "n"), "svc", 0.04, 0.041),
    ]
    users = [UserConnection("u1", "s1", ("a",)), UserConnection("u2", "s2", ("b",))]
    return NetworkModel(buses, branches, users, codes)


def four_wire_test_feeder(n_buses: int = 10) -> NetworkModel:
    """All-four-wire chain with mixed single- and three-phase users."""
    codes = {"main": four_wire_code("main", 150.0, 95.0, 18.0, "aluminium")}
    abcn = ("a", "b", "c", "n")
    buses = [Bus("b0", abcn, is_slack=True)]
    branches = []
    for k in range(1, n_buses):
        buses.append(Bus(f"b{k}", abcn))
        branches.append(
            Branch(f"L{k}", f"b{k - 1}", f"b{k}", abcn, "main", 0.05 + 0.005 * k, 0.05 + 0.005 * k)
        )
    users = [
        UserConnection("u1", "b2", ("a",)),
        UserConnection("u2", "b4", ("b",)),
        UserConnection("u3", "b6", ("c",)),
        UserConnection("u4", f"b{n_buses - 1}", ("a", "b", "c")),
    ]
    return NetworkModel(buses, branches, users, codes)


def random_feeder(n_users: int = 30, seed: int = 7) -> NetworkModel:
    """Larger radial feeder for smoke tests: a four-wire main laid out as a
    random tree with one two-wire service drop per user."""
    rng = np.random.default_rng(seed)
    codes = {
        "main_a": four_wire_code("main_a", 240.0, 150.0, 20.0, "aluminium"),
        "main_b": four_wire_code("main_b", 120.0, 70.0, 16.0, "aluminium"),
        "svc_a": two_wire_code("svc_a", 25.0, 16.0, 12.0, "aluminium"),
        "svc_b": two_wire_code("svc_b", 16.0, 12.0, 10.0, "copper"),
    }
    abcn = ("a", "b", "c", "n")
    n_main = max(4, n_users // 2)
    buses = [Bus("sub", abcn, is_slack=True)]
    branches = []
    for k in range(1, n_main + 1):
        parent = 0 if k == 1 else int(rng.integers(max(1, k - 3), k))
        parent_id = "sub" if parent == 0 else f"m{parent}"
        buses.append(Bus(f"m{k}", abcn))
        length = float(rng.uniform(0.02, 0.08))
        code = "main_a" if k <= n_main // 2 else "main_b"
        branches.append(
            Branch(
                f"L{k}",
                parent_id,
                f"m{k}",
                abcn,
                code,
                length,
                length * float(rng.uniform(0.9, 1.1)),
            )
        )
    users = []
    for k in range(n_users):
        phase = "abc"[k % 3]
        host = f"m{int(rng.integers(1, n_main + 1))}"
        buses.append(Bus(f"s{k}", (phase, "n")))
        length = float(rng.uniform(0.01, 0.04))
        code = "svc_a" if k % 2 == 0 else "svc_b"
        branches.append(
            Branch(
                f"S{k}",
                host,
                f"s{k}",
                (phase, "n"),
                code,
                length,
                length * float(rng.uniform(0.9, 1.1)),
            )
        )
        users.append(UserConnection(f"u{k}", f"s{k}", (phase,)))
    return NetworkModel(buses, branches, users, codes)


def split_branch(model: NetworkModel, branch_id: str, n_parts: int = 2) -> NetworkModel:
    """Insert zero-injection buses splitting one branch into equal parts;
    the inverse of the series-bus reduction (for equivalence tests)."""
    br = model.branches[model.branch_pos[branch_id]]
    buses = list(model.buses)
    branches = [b for b in model.branches if b.id != branch_id]
    prev = br.from_bus
    for k in range(n_parts):
        last = k == n_parts - 1
        nxt = br.to_bus if last else f"{branch_id}_mid{k}"
        if not last:
            buses.append(Bus(nxt, br.phase_set))
        branches.append(
            Branch(
                f"{branch_id}_part{k}",
                prev,
                nxt,
                br.phase_set,
                br.code_id,
                br.length_km / n_parts,
                br.length_nominal_km / n_parts,
            )
        )
        prev = nxt
    return NetworkModel(buses, branches, model.users, model.code_catalog)
