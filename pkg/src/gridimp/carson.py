"""Forward evaluation of Carson's equations (50 Hz, SI units).

Maps conductor geometry and material data to nominal per-km series
impedance matrices, and branch impedances via length scaling.

Unit conventions (chosen so the published constants apply directly):
resistivity in ohm*mm^2/m, cross-sections in mm^2, distances and
coordinates in mm, temperatures in degC, outputs in ohm/km.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

# Ground-return contribution to every resistance entry, ohm/km.
GROUND_RESISTANCE = 0.049348
# Reactance prefactor (2*pi*f*2e-4 at 50 Hz), ohm/km.
REACTANCE_COEFF = 0.062832
# Unit-system conversion constants of the 50 Hz SI Carson variant.
C1 = 3.28084e-3
C2 = 8.0252

DEFAULT_TEMPERATURE_C = 65.0


class CarsonDomainError(ValueError):
    """Raised for geometrically impossible inputs (non-positive areas,
    coincident conductor centers, ...)."""


@dataclass(frozen=True)
class Material:
    """Conductor material constants at the 20 degC reference."""

    name: str
    resistivity: float  # ohm*mm^2/m
    temperature_coefficient: float  # 1/degC
    relative_permeability: float = 1.0

    def __post_init__(self):
        if self.resistivity <= 0.0:
            raise CarsonDomainError(f"material {self.name!r}: resistivity must be > 0")
        if self.temperature_coefficient <= 0.0:
            raise CarsonDomainError(
                f"material {self.name!r}: temperature coefficient must be > 0"
            )


def material_table() -> dict[str, Material]:
    """Built-in material data (shipped as JSON so values can be corrected
    without touching code)."""
    raw = json.loads(
        resources.files("gridimp.data").joinpath("materials.json").read_text()
    )
    return {
        name: Material(
            name=name,
            resistivity=entry["resistivity_ohm_mm2_per_m"],
            temperature_coefficient=entry["temperature_coefficient_per_c"],
            relative_permeability=entry.get("relative_permeability", 1.0),
        )
        for name, entry in raw.items()
    }


@dataclass(frozen=True)
class ConductorGeometry:
    """One conductor of a construction code.

    ``strand_layout`` is an optional tuple of ``(area_mm2, (x_mm, y_mm))``
    describing the strands of a stranded conductor; when present it is used
    for the GMR while ``cross_section`` keeps defining the dc resistance.
    """

    cross_section: float  # mm^2
    center: tuple[float, float]  # mm
    material: Material
    strand_layout: tuple[tuple[float, tuple[float, float]], ...] | None = None

    def __post_init__(self):
        if self.cross_section <= 0.0:
            raise CarsonDomainError("conductor cross-section must be > 0")

    def gmr(self) -> float:
        if self.strand_layout is None:
            return gmr_round(self.cross_section, self.material.relative_permeability)
        return gmr_stranded(self.strand_layout, self.material.relative_permeability)


@dataclass(frozen=True)
class ConstructionCode:
    """Named conductor bundle: geometry + material per conductor.

    ``conductors`` maps conductor labels (subset of a, b, c, n) to their
    geometry. One conductor is the coordinate reference at (0, 0).
    """

    code_id: str
    phase_set: tuple[str, ...]
    conductors: dict[str, ConductorGeometry] = field(default_factory=dict)
    temperature: float = DEFAULT_TEMPERATURE_C

    def __post_init__(self):
        if set(self.conductors) != set(self.phase_set):
            raise CarsonDomainError(
                f"code {self.code_id!r}: conductor labels {sorted(self.conductors)} "
                f"do not match phase set {list(self.phase_set)}"
            )
        centers = [g.center for g in self.conductors.values()]
        if not any(c == (0.0, 0.0) for c in centers):
            raise CarsonDomainError(
                f"code {self.code_id!r}: one conductor must sit at the (0, 0) reference"
            )
        if len(set(centers)) != len(centers):
            raise CarsonDomainError(f"code {self.code_id!r}: coincident conductor centers")


@dataclass(frozen=True)
class NominalImpedance:
    """Per-km nominal impedance of a construction code.

    ``conductors`` fixes the row/column order of the symmetric matrices.
    """

    conductors: tuple[str, ...]
    r: np.ndarray  # ohm/km
    x: np.ndarray  # ohm/km

    @property
    def z(self) -> np.ndarray:
        return self.r + 1j * self.x


def gmr_round(area: float, mu_rel: float = 1.0) -> float:
    """Geometric mean radius of a solid round conductor, mm."""
    if area <= 0.0:
        raise CarsonDomainError(f"cross-section must be > 0, got {area}")
    return math.exp(-mu_rel / 4.0) * math.sqrt(area / math.pi)


def gmr_stranded(
    strands: tuple[tuple[float, tuple[float, float]], ...] | list,
    mu_rel: float = 1.0,
) -> float:
    """GMR of a stranded conductor from its strand layout.

    Geometric mean of all S^2 pairings: each strand contributes its own
    round-conductor GMR plus its distances to every other strand. Computed
    in log space to stay stable for many strands.
    """
    strands = tuple(strands)
    if not strands:
        raise CarsonDomainError("strand layout must contain at least one strand")
    n = len(strands)
    log_sum = 0.0
    for i, (area_i, (xi, yi)) in enumerate(strands):
        if area_i <= 0.0:
            raise CarsonDomainError(f"strand {i}: area must be > 0")
        log_sum += math.log(gmr_round(area_i, mu_rel))
        for j, (_, (xj, yj)) in enumerate(strands):
            if j == i:
                continue
            d = math.hypot(xi - xj, yi - yj)
            if d <= 0.0:
                raise CarsonDomainError(f"strands {i} and {j} have coincident centers")
            log_sum += math.log(d)
    return math.exp(log_sum / (n * n))


def self_resistance(material: Material, area: float, temperature: float) -> float:
    """AC self-resistance of a conductor, ohm/km (skin/proximity neglected)."""
    if area <= 0.0:
        raise CarsonDomainError(f"cross-section must be > 0, got {area}")
    scale = 1.0 + material.temperature_coefficient * (temperature - 20.0)
    return material.resistivity / area * scale * 1000.0


def pairwise_distances(code: ConstructionCode) -> np.ndarray:
    """Center-to-center distance matrix (mm) in ``code.phase_set`` order."""
    pts = np.array([code.conductors[p].center for p in code.phase_set], dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    off = d[~np.eye(len(pts), dtype=bool)]
    if off.size and off.min() <= 0.0:
        raise CarsonDomainError(f"code {code.code_id!r}: coincident conductor centers")
    return d


def self_reactance(gmr: float) -> float:
    """Diagonal reactance entry from a GMR in mm, ohm/km."""
    if gmr <= 0.0:
        raise CarsonDomainError(f"GMR must be > 0, got {gmr}")
    return REACTANCE_COEFF * (math.log(1.0 / (C1 * gmr)) + C2)


def mutual_reactance(distance: float) -> float:
    """Off-diagonal reactance entry from a conductor spacing in mm, ohm/km."""
    if distance <= 0.0:
        raise CarsonDomainError(f"conductor distance must be > 0, got {distance}")
    return REACTANCE_COEFF * (math.log(1.0 / (C1 * distance)) + C2)


def nominal_matrix(
    conductors: tuple[str, ...],
    resistances: np.ndarray,
    gmrs: np.ndarray,
    distances: np.ndarray,
) -> NominalImpedance:
    """Assemble the nominal matrices from per-conductor scalars.

    ``resistances`` are the ac self-resistances (ohm/km), ``gmrs`` the
    geometric mean radii (mm) and ``distances`` the spacing matrix (mm).
    """
    m = len(conductors)
    r = np.full((m, m), GROUND_RESISTANCE)
    r[np.diag_indices(m)] += np.asarray(resistances, dtype=float)
    x = np.zeros((m, m))
    for i in range(m):
        x[i, i] = self_reactance(float(gmrs[i]))
        for j in range(i + 1, m):
            x[i, j] = x[j, i] = mutual_reactance(float(distances[i, j]))
    return NominalImpedance(conductors=tuple(conductors), r=r, x=x)


def carson_nominal(code: ConstructionCode) -> NominalImpedance:
    """Nominal per-km impedance matrix of a construction code."""
    conds = tuple(code.phase_set)
    res = np.array(
        [
            self_resistance(code.conductors[p].material, code.conductors[p].cross_section, code.temperature)
            for p in conds
        ]
    )
    gmrs = np.array([code.conductors[p].gmr() for p in conds])
    dist = pairwise_distances(code)
    return nominal_matrix(conds, res, gmrs, dist)


def scale_by_length(nom: NominalImpedance, length_km: float) -> np.ndarray:
    """Branch impedance matrix (ohm, complex) for a given length."""
    if length_km <= 0.0:
        raise CarsonDomainError(f"branch length must be > 0, got {length_km}")
    return nom.z * length_km


def temperature_error(
    material: Material,
    area: float,
    temperature: float,
    reference: float = DEFAULT_TEMPERATURE_C,
) -> float:
    """Relative error on the diagonal resistance entry when the true
    temperature differs from the assumed reference."""
    r_t = self_resistance(material, area, temperature) + GROUND_RESISTANCE
    r_ref = self_resistance(material, area, reference) + GROUND_RESISTANCE
    return abs(r_t - r_ref) / r_ref
