"""Shared domain types for the exposure pipeline.

All values are plain dataclasses with no I/O and no algorithms. Dwell
times are integer seconds throughout so that accumulation is exact.
Instances are treated as immutable once constructed; mapping fields are
never mutated after the owning object is returned to a caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

HAZARD_TYPES = ("air_pollution", "toxic", "heat")

# Short column suffixes used in report CSVs, in canonical hazard order.
HAZARD_SHORT = {"air_pollution": "air", "toxic": "toxic", "heat": "heat"}

REGION_DIRECT = "direct"
REGION_LATENT = "latent"
REGION_NONE = "none"

# A ring is a closed sequence of (lon, lat) pairs (first == last vertex).
Ring = tuple[tuple[float, float], ...]
# A polygon is one exterior ring followed by zero or more hole rings.
Polygon = tuple[Ring, ...]
# A geometry is one or more polygon parts (multipolygon membership = any part).
Geometry = tuple[Polygon, ...]


@dataclass(frozen=True, slots=True)
class StopRecord:
    """One device visit: who stopped where, when, and for how long."""

    user_id: str
    lon: float
    lat: float
    start_ts: int  # UTC epoch seconds
    dwell_s: int


@dataclass(frozen=True, slots=True)
class CensusTract:
    """Tract polygon plus the demographic fields used downstream."""

    geoid: str  # 11-character tract GEOID
    geometry: Geometry  # WGS84 lon/lat
    population: int
    pct_minority: float  # fraction in [0, 1]
    pct_below_poverty200: float  # fraction in [0, 1]

    @property
    def county_fips(self) -> str:
        return self.geoid[:5]


@dataclass(frozen=True, slots=True)
class HazardLayer:
    """Per-tract raw hazard values and the derived binary high-hazard mask.

    values holds percentile ranks in [0, 1] for air_pollution/toxic and
    non-negative heat-day counts for heat. mask is empty until the layer
    is classified; tracts absent from mask are treated as not masked.
    """

    hazard_type: str
    values: dict[str, float]
    mask: dict[str, bool] = field(default_factory=dict)

    def masked_geoids(self) -> frozenset[str]:
        return frozenset(g for g, m in self.mask.items() if m)


@dataclass(slots=True)
class ExposureAccumulator:
    """Running dwell-time sums for one home tract.

    tdt_s is the total dwell of the tract's residents; hdt_s[h] the part
    of it spent at stops inside tracts masked for hazard h. The nonhome
    fields cover only stops outside the home tract. unresolved_dwell_s is
    dwell at stops that fall outside every known tract (counted in tdt_s,
    never in hdt_s).
    """

    geoid: str
    tdt_s: int = 0
    hdt_s: dict[str, int] = field(default_factory=lambda: dict.fromkeys(HAZARD_TYPES, 0))
    tdt_nonhome_s: int = 0
    hdt_nonhome_s: dict[str, int] = field(default_factory=lambda: dict.fromkeys(HAZARD_TYPES, 0))
    unresolved_dwell_s: int = 0

    def merge(self, other: "ExposureAccumulator") -> None:
        """Fold another accumulator for the same tract into this one."""
        if other.geoid != self.geoid:
            raise ValueError(f"cannot merge accumulators for {self.geoid} and {other.geoid}")
        self.tdt_s += other.tdt_s
        self.tdt_nonhome_s += other.tdt_nonhome_s
        self.unresolved_dwell_s += other.unresolved_dwell_s
        for h in HAZARD_TYPES:
            self.hdt_s[h] += other.hdt_s[h]
            self.hdt_nonhome_s[h] += other.hdt_nonhome_s[h]


@dataclass(frozen=True, slots=True)
class MeiRow:
    """Per-tract exposure indices, region classes, and cluster label.

    mei[h] is undefined (None) when the source accumulator had zero total
    dwell; such tracts are excluded from downstream statistics.
    """

    geoid: str
    mei: dict[str, float | None]
    nonhome_share: dict[str, float | None]
    nonhome_conditional: dict[str, float | None]
    region_class: dict[str, str]
    cluster_label: int = -1

    @property
    def excluded(self) -> bool:
        return all(self.mei[h] is None for h in HAZARD_TYPES)


@dataclass(frozen=True, slots=True)
class MeiTable:
    """Exposure index rows keyed by tract geoid."""

    rows: dict[str, MeiRow]

    def sorted_rows(self) -> list[MeiRow]:
        return [self.rows[g] for g in sorted(self.rows)]


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _validate_stop(rec: StopRecord) -> list[str]:
    out = []
    if not rec.user_id:
        out.append("user_id: must be non-empty")
    if not _num(rec.lon) or not -180.0 <= rec.lon <= 180.0:
        out.append("lon: out of range [-180, 180]")
    if not _num(rec.lat) or not -90.0 <= rec.lat <= 90.0:
        out.append("lat: out of range [-90, 90]")
    if not isinstance(rec.dwell_s, int) or rec.dwell_s < 0:
        out.append("dwell_s: must be a non-negative integer")
    if not isinstance(rec.start_ts, int):
        out.append("start_ts: must be integer epoch seconds")
    return out


def _validate_ring(ring: Ring, where: str) -> list[str]:
    out = []
    if len(ring) < 4:
        out.append(f"{where}: ring has fewer than 4 vertices")
        return out
    if ring[0] != ring[-1]:
        out.append(f"{where}: ring is not closed (first vertex != last)")
    return out


def _validate_tract(tract: CensusTract) -> list[str]:
    out = []
    if len(tract.geoid) != 11:
        out.append("geoid: must be 11 characters")
    if not tract.geometry:
        out.append("geometry: must have at least one polygon part")
    for pi, part in enumerate(tract.geometry):
        if not part:
            out.append(f"geometry[{pi}]: polygon has no rings")
            continue
        for ri, ring in enumerate(part):
            out.extend(_validate_ring(ring, f"geometry[{pi}].ring[{ri}]"))
    if not isinstance(tract.population, int) or tract.population < 0:
        out.append("population: must be a non-negative integer")
    for name in ("pct_minority", "pct_below_poverty200"):
        v = getattr(tract, name)
        if not _num(v) or not 0.0 <= v <= 1.0:
            out.append(f"{name}: must be a fraction in [0, 1]")
    return out


def _validate_layer(layer: HazardLayer) -> list[str]:
    out = []
    if layer.hazard_type not in HAZARD_TYPES:
        out.append(f"hazard_type: unknown type {layer.hazard_type!r}")
        return out
    for g, v in layer.values.items():
        if layer.hazard_type == "heat":
            if not _num(v) or v < 0:
                out.append(f"values[{g}]: heat-day count must be >= 0")
        elif not _num(v) or not 0.0 <= v <= 1.0:
            out.append(f"values[{g}]: percentile rank must be in [0, 1]")
    for g in layer.mask:
        if g not in layer.values:
            out.append(f"mask[{g}]: geoid missing from values")
    return out


def _validate_accumulator(acc: ExposureAccumulator) -> list[str]:
    out = []
    for name in ("tdt_s", "tdt_nonhome_s", "unresolved_dwell_s"):
        v = getattr(acc, name)
        if not isinstance(v, int) or v < 0:
            out.append(f"{name}: must be a non-negative integer")
    for h in HAZARD_TYPES:
        if acc.hdt_s.get(h, 0) > acc.tdt_s:
            out.append(f"hdt_s[{h}]: exceeds tdt_s")
        if acc.hdt_nonhome_s.get(h, 0) > acc.tdt_nonhome_s:
            out.append(f"hdt_nonhome_s[{h}]: exceeds tdt_nonhome_s")
    if acc.tdt_nonhome_s > acc.tdt_s:
        out.append("tdt_nonhome_s: exceeds tdt_s")
    return out


def _validate_mei_row(row: MeiRow) -> list[str]:
    out = []
    for h in HAZARD_TYPES:
        for name, m in (("mei", row.mei), ("nonhome_share", row.nonhome_share),
                        ("nonhome_conditional", row.nonhome_conditional)):
            v = m.get(h)
            if v is not None and not 0.0 <= v <= 1.0:
                out.append(f"{name}[{h}]: outside [0, 1]")
        if row.region_class.get(h) not in (REGION_DIRECT, REGION_LATENT, REGION_NONE):
            out.append(f"region_class[{h}]: invalid class")
    if not isinstance(row.cluster_label, int) or row.cluster_label < -1:
        out.append("cluster_label: must be an integer >= -1")
    return out


def validate(value) -> list[str]:
    """Check a domain value against its type invariants.

    Returns an empty list when every invariant holds; otherwise one
    human-readable violation per broken rule, naming field and rule.
    Never raises for rule violations.
    """
    if isinstance(value, StopRecord):
        return _validate_stop(value)
    if isinstance(value, CensusTract):
        return _validate_tract(value)
    if isinstance(value, HazardLayer):
        return _validate_layer(value)
    if isinstance(value, ExposureAccumulator):
        return _validate_accumulator(value)
    if isinstance(value, MeiRow):
        return _validate_mei_row(value)
    if isinstance(value, MeiTable):
        out = []
        for g, row in value.rows.items():
            out.extend(f"rows[{g}].{v}" for v in _validate_mei_row(row))
        return out
    raise TypeError(f"validate() does not handle {type(value).__name__}")
