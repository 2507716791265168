"""Frequency-dependent building-material properties and their dB feature values.

Materials follow the ITU-R P.2040 parameterization: relative permittivity
``eps_r' = a * f_GHz**b`` and conductivity ``sigma = c * f_GHz**d``.  From
(eps_r', sigma) the module derives the wave impedance of the medium and the
normal-incidence reflection/transmission coefficients against free space,
expressed in dB.  Those two dB values are what the voxel feature channels and
the propagation oracle consume.
"""

from __future__ import annotations

import cmath
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError

logger = logging.getLogger(__name__)

# Physical constants, fixed so derived feature values are reproducible.
ETA0_OHM = 376.730
EPS0_F_PER_M = 8.854e-12
MU0_H_PER_M = 4e-7 * math.pi
SPEED_OF_LIGHT_M_PER_S = 2.998e8

# Finite stand-in for -inf dB in numeric feature channels and file payloads.
DB_FLOOR = -100.0


class MaterialKind(Enum):
    GENERAL = "general"
    VACUUM = "vacuum"
    PERFECT_CONDUCTOR = "perfect_conductor"


@dataclass(frozen=True)
class MaterialSpec:
    """One material row: the four empirical constants plus an idealization flag."""

    name: str
    a: float
    b: float
    c: float
    d: float
    kind: MaterialKind = MaterialKind.GENERAL

    def __post_init__(self) -> None:
        if self.a < 1.0:
            raise DomainError(f"{self.name}: permittivity coefficient a={self.a} < 1")
        if self.c < 0.0:
            raise DomainError(f"{self.name}: conductivity coefficient c={self.c} < 0")
        is_vacuum_params = (self.a, self.b, self.c, self.d) == (1.0, 0.0, 0.0, 0.0)
        if (self.kind is MaterialKind.VACUUM) != is_vacuum_params:
            raise DomainError(
                f"{self.name}: kind={self.kind.value!r} inconsistent with "
                f"(a,b,c,d)=({self.a},{self.b},{self.c},{self.d})"
            )


@dataclass(frozen=True)
class MaterialFeatures:
    """Derived quantities at one frequency.

    ``rho_db`` and ``tau_db`` are 20*log10 of the reflection/transmission
    coefficient magnitudes and may be -inf for the idealized materials
    (vacuum reflects nothing, a perfect conductor transmits nothing).
    Numeric channels clamp them to :data:`DB_FLOOR` at tensor-assembly time.

    With the pinned constants, sqrt(mu0/eps0) = 376.7347 differs from
    ETA0_OHM by 1.2e-5 relative, so a medium approaching vacuum can show
    tau_db up to +5.5e-5 dB; feature channels clamp at 0.
    """

    eps_r_prime: float
    sigma_s_per_m: float
    eta_ohm: complex
    rho_db: float
    tau_db: float


def eval_itu(spec: MaterialSpec, f_ghz: float) -> tuple[float, float]:
    """Relative permittivity and conductivity [S/m] at ``f_ghz`` gigahertz."""
    if f_ghz <= 0.0:
        raise DomainError(f"frequency must be positive, got {f_ghz} GHz")
    return spec.a * f_ghz**spec.b, spec.c * f_ghz**spec.d


def fresnel_features(spec: MaterialSpec, f_hz: float) -> MaterialFeatures:
    """Evaluate a material's reflection/transmission features at ``f_hz`` hertz.

    The medium impedance is ``eta = sqrt(j*w*mu0 / (sigma + j*w*eps_r'*eps0))``
    (principal square root, so Re(eta) >= 0 for passive media), and the
    normal-incidence coefficients against free space are
    ``Gamma = (eta - eta0) / (eta + eta0)`` and ``T = 2*eta / (eta + eta0)``.
    The two idealized kinds short-circuit: vacuum to (|Gamma|=0, |T|=1) and
    perfect conductor to (|Gamma|=1, |T|=0).
    """
    if f_hz <= 0.0:
        raise DomainError(f"frequency must be positive, got {f_hz} Hz")
    eps_r, sigma = eval_itu(spec, f_hz / 1e9)
    if spec.kind is MaterialKind.VACUUM:
        return MaterialFeatures(eps_r, sigma, complex(ETA0_OHM, 0.0), -math.inf, 0.0)
    if spec.kind is MaterialKind.PERFECT_CONDUCTOR:
        return MaterialFeatures(eps_r, sigma, 0j, 0.0, -math.inf)

    omega = 2.0 * math.pi * f_hz
    eta = cmath.sqrt(1j * omega * MU0_H_PER_M / (sigma + 1j * omega * eps_r * EPS0_F_PER_M))
    gamma = (eta - ETA0_OHM) / (eta + ETA0_OHM)
    trans = 2.0 * eta / (eta + ETA0_OHM)
    rho_db = 20.0 * math.log10(abs(gamma)) if gamma != 0 else -math.inf
    tau_db = 20.0 * math.log10(abs(trans)) if trans != 0 else -math.inf
    return MaterialFeatures(eps_r, sigma, eta, rho_db, tau_db)


@dataclass
class MaterialTable:
    """Semantic-label lookup over an ordered material list.

    Material ids are indices into ``materials``.  Unknown labels fall back to
    ``default_material`` with a logged warning; ``unknown_label_count`` tracks
    how often that happened so pipelines can surface it.
    """

    materials: list[MaterialSpec]
    label_map: dict[str, int]
    default_material: str = "concrete"
    unknown_label_count: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        names = [m.name for m in self.materials]
        if len(set(names)) != len(names):
            raise DomainError("duplicate material names in table")
        if self.default_material not in names:
            raise DomainError(f"default material {self.default_material!r} not in table")
        for label, idx in self.label_map.items():
            if not 0 <= idx < len(self.materials):
                raise DomainError(f"label {label!r} maps to out-of-range material id {idx}")

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.materials]

    def index_of(self, material_name: str) -> int:
        try:
            return self.names.index(material_name)
        except ValueError:
            raise DomainError(f"unknown material {material_name!r}") from None

    def material_id(self, label: str) -> int:
        """Material id for a semantic label; unknown labels use the default."""
        idx = self.label_map.get(label)
        if idx is None:
            self.unknown_label_count += 1
            idx = self.index_of(self.default_material)
            logger.warning("unknown semantic label %r, using %r", label, self.default_material)
        return idx

    def lookup(self, label: str) -> MaterialSpec:
        return self.materials[self.material_id(label)]

    def features(self, f_hz: float) -> list[MaterialFeatures]:
        return [fresnel_features(m, f_hz) for m in self.materials]


def feature_arrays(
    table: MaterialTable, f_hz: float, db_floor: float = DB_FLOOR
) -> tuple[np.ndarray, np.ndarray]:
    """Per-material-id (rho_db, tau_db) arrays, clamped into [db_floor, 0]."""
    feats = table.features(f_hz)
    rho = np.array([min(max(f.rho_db, db_floor), 0.0) for f in feats], dtype=np.float64)
    tau = np.array([min(max(f.tau_db, db_floor), 0.0) for f in feats], dtype=np.float64)
    return rho, tau


# Built-in materials (ITU-R P.2040 style constants; the metal row is the
# perfect-conductor idealization used for total-reflection surfaces).
_DEFAULT_MATERIALS = [
    MaterialSpec("vacuum", 1.000, 0.0, 0.0000, 0.0000, MaterialKind.VACUUM),
    MaterialSpec("concrete", 5.240, 0.0, 0.0462, 0.7822),
    MaterialSpec("brick", 3.910, 0.0, 0.0238, 0.1600),
    MaterialSpec("plasterboard", 2.730, 0.0, 0.0085, 0.9395),
    MaterialSpec("wood", 1.990, 0.0, 0.0047, 1.0718),
    MaterialSpec("ceiling_board", 1.480, 0.0, 0.0011, 1.0750),
    MaterialSpec("marble", 7.074, 0.0, 0.0055, 0.9262),
    MaterialSpec("metal", 1.000, 0.0, 107.00, 0.0000, MaterialKind.PERFECT_CONDUCTOR),
]

# Semantic labels the scene synthesizer emits, mapped onto the rows above.
_DEFAULT_LABELS = {
    "wall": "concrete",
    "floor": "concrete",
    "partition": "plasterboard",
    "lintel": "plasterboard",
    "ceiling": "ceiling_board",
    "door": "wood",
    "bed": "wood",
    "table": "wood",
    "wardrobe": "wood",
    "cabinet": "metal",
    "counter": "marble",
    "column": "brick",
}


def default_table() -> MaterialTable:
    """Built-in table with the eight standard materials and the scene labels."""
    materials = list(_DEFAULT_MATERIALS)
    names = [m.name for m in materials]
    label_map = {label: names.index(mat) for label, mat in _DEFAULT_LABELS.items()}
    return MaterialTable(materials=materials, label_map=label_map)


def load_material_table(path: str | Path, default_material: str = "concrete") -> MaterialTable:
    """Load a table from JSON: a list of {name, a, b, c, d, kind, labels:[...]}."""
    try:
        rows = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read material table {path}: {exc}") from exc
    if not isinstance(rows, list):
        raise FormatError("material table JSON must be a list of material objects")
    materials: list[MaterialSpec] = []
    label_map: dict[str, int] = {}
    for i, row in enumerate(rows):
        try:
            kind = MaterialKind(row.get("kind", "general"))
            spec = MaterialSpec(
                name=row["name"],
                a=float(row["a"]),
                b=float(row["b"]),
                c=float(row["c"]),
                d=float(row["d"]),
                kind=kind,
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"material row {i} invalid: {exc}") from exc
        materials.append(spec)
        for label in row.get("labels", []):
            if label in label_map:
                raise FormatError(f"label {label!r} mapped twice")
            label_map[label] = i
    return MaterialTable(materials=materials, label_map=label_map, default_material=default_material)


def material_table_to_json(table: MaterialTable) -> str:
    rows = []
    for i, m in enumerate(table.materials):
        labels = sorted(label for label, idx in table.label_map.items() if idx == i)
        rows.append(
            {"name": m.name, "a": m.a, "b": m.b, "c": m.c, "d": m.d,
             "kind": m.kind.value, "labels": labels}
        )
    return json.dumps(rows, indent=2)
