"""File ingestion and report output.

Every byte-level format lives here: the stops/hazard CSV schemas, the
tract GeoJSON schema, and the deterministic report CSVs with their JSON
metadata sidecars. Data-row problems are rejected row by row and counted;
structural problems (bad header, duplicate keys, broken geometry) abort
with IngestError.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable

from .model import (
    HAZARD_SHORT,
    HAZARD_TYPES,
    CensusTract,
    HazardLayer,
    MeiRow,
    MeiTable,
    StopRecord,
    validate,
)

STOPS_HEADER = ["user_id", "lon", "lat", "start_ts", "dwell_s"]
HAZARD_HEADER = ["geoid", "value"]

MEI_HEADER = (
    ["geoid"]
    + [f"mei_{HAZARD_SHORT[h]}" for h in HAZARD_TYPES]
    + [f"nonhome_share_{HAZARD_SHORT[h]}" for h in HAZARD_TYPES]
    + [f"nonhome_cond_{HAZARD_SHORT[h]}" for h in HAZARD_TYPES]
    + [f"class_{HAZARD_SHORT[h]}" for h in HAZARD_TYPES]
)


class IngestError(Exception):
    """Fatal structural problem in an input file or an unwritable output."""


@dataclass(slots=True)
class IngestReport:
    """Row accounting for one parsed file."""

    rows_read: int = 0
    rows_accepted: int = 0
    rows_rejected: int = 0
    first_10_rejects: list[tuple[int, str]] = field(default_factory=list)

    def reject(self, line_no: int, reason: str) -> None:
        self.rows_rejected += 1
        if len(self.first_10_rejects) < 10:
            self.first_10_rejects.append((line_no, reason))


def _open_text(source: str | Path | IO) -> tuple[IO, bool]:
    """Return a text-mode handle for a path, text stream, or byte stream."""
    if isinstance(source, (str, Path)):
        try:
            return open(source, "r", encoding="utf-8", newline=""), True
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc}") from exc
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            import io

            return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
        return source, False
    raise IngestError(f"unreadable stops source: {type(source).__name__}")


_EPOCH_BY_DATE: dict[str, int] = {}


def parse_iso_utc(text: str) -> int:
    """Parse an ISO 8601 UTC timestamp to integer epoch seconds."""
    # Fast path for the canonical YYYY-MM-DDTHH:MM:SSZ layout.
    if len(text) == 20 and text[10] == "T" and text[19] == "Z":
        day = _EPOCH_BY_DATE.get(text[:10])
        if day is None:
            dt = datetime(int(text[:4]), int(text[5:7]), int(text[8:10]), tzinfo=timezone.utc)
            day = _EPOCH_BY_DATE[text[:10]] = int(dt.timestamp())
        return day + int(text[11:13]) * 3600 + int(text[14:16]) * 60 + int(text[17:19])
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_iso_utc(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_stops(source: str | Path | IO) -> tuple[list[StopRecord], IngestReport]:
    """Parse a stops CSV, rejecting malformed rows and keeping row order."""
    handle, owned = _open_text(source)
    report = IngestReport()
    stops: list[StopRecord] = []
    try:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("stops file is empty (missing header)") from None
        if header != STOPS_HEADER:
            raise IngestError(f"bad stops header: expected {STOPS_HEADER}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            report.rows_read += 1
            if len(row) != 5:
                report.reject(line_no, f"expected 5 fields, got {len(row)}")
                continue
            try:
                rec = StopRecord(
                    user_id=row[0],
                    lon=float(row[1]),
                    lat=float(row[2]),
                    start_ts=parse_iso_utc(row[3]),
                    dwell_s=int(row[4]),
                )
            except (ValueError, IndexError) as exc:
                report.reject(line_no, f"unparseable field: {exc}")
                continue
            violations = validate(rec)
            if violations:
                report.reject(line_no, violations[0])
                continue
            stops.append(rec)
            report.rows_accepted += 1
    finally:
        if owned:
            handle.close()
    return stops, report


def _as_ring(raw, feature_idx: int, where: str) -> tuple[tuple[float, float], ...]:
    try:
        ring = tuple((float(p[0]), float(p[1])) for p in raw)
    except (TypeError, ValueError, IndexError) as exc:
        raise IngestError(f"feature {feature_idx}: malformed {where}: {exc}") from exc
    if len(ring) < 4:
        raise IngestError(f"feature {feature_idx}: {where} has fewer than 4 vertices")
    if ring[0] != ring[-1]:
        raise IngestError(f"feature {feature_idx}: {where} is not closed")
    return ring


def parse_tracts(source: str | Path | IO) -> list[CensusTract]:
    """Parse a GeoJSON FeatureCollection of census tracts."""
    handle, owned = _open_text(source)
    try:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid GeoJSON: {exc}") from exc
    finally:
        if owned:
            handle.close()
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise IngestError("tracts file is not a GeoJSON FeatureCollection")
    tracts: list[CensusTract] = []
    seen: set[str] = set()
    for idx, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        geoid = props.get("GEOID")
        if not isinstance(geoid, str) or not geoid:
            raise IngestError(f"feature {idx}: missing GEOID property")
        if geoid in seen:
            raise IngestError(f"feature {idx}: duplicate GEOID {geoid}")
        seen.add(geoid)
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            parts = [coords]
        elif gtype == "MultiPolygon":
            parts = coords
        else:
            raise IngestError(f"feature {idx}: geometry must be Polygon or MultiPolygon, got {gtype}")
        geometry = tuple(
            tuple(_as_ring(ring, idx, f"part {pi} ring {ri}") for ri, ring in enumerate(part))
            for pi, part in enumerate(parts)
        )
        if not geometry or any(not part for part in geometry):
            raise IngestError(f"feature {idx}: empty geometry")
        try:
            pop = int(props["POP"])
            minority = float(props["PCT_MINORITY"])
            poverty = float(props["PCT_POV200"])
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"feature {idx}: bad demographic properties: {exc}") from exc
        tract = CensusTract(
            geoid=geoid,
            geometry=geometry,
            population=pop,
            pct_minority=minority,
            pct_below_poverty200=poverty,
        )
        violations = validate(tract)
        if violations:
            raise IngestError(f"feature {idx}: {violations[0]}")
        tracts.append(tract)
    return tracts


def parse_hazard(source: str | Path | IO, hazard_type: str) -> tuple[HazardLayer, IngestReport]:
    """Parse a hazard CSV into a values-only layer (mask left empty)."""
    if hazard_type not in HAZARD_TYPES:
        raise IngestError(f"unknown hazard type {hazard_type!r}")
    handle, owned = _open_text(source)
    report = IngestReport()
    values: dict[str, float] = {}
    try:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("hazard file is empty (missing header)") from None
        if header != HAZARD_HEADER:
            raise IngestError(f"bad hazard header: expected {HAZARD_HEADER}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            report.rows_read += 1
            if len(row) != 2:
                report.reject(line_no, f"expected 2 fields, got {len(row)}")
                continue
            geoid, raw = row
            if geoid in values:
                raise IngestError(f"line {line_no}: duplicate geoid {geoid}")
            try:
                if hazard_type == "heat":
                    value: float = int(raw)
                else:
                    value = float(raw)
            except ValueError:
                report.reject(line_no, f"unparseable value {raw!r}")
                continue
            if hazard_type == "heat":
                if value < 0:
                    report.reject(line_no, "heat-day count must be >= 0")
                    continue
            elif not 0.0 <= value <= 1.0:
                report.reject(line_no, "percentile rank outside [0, 1]")
                continue
            values[geoid] = value
            report.rows_accepted += 1
    finally:
        if owned:
            handle.close()
    return HazardLayer(hazard_type=hazard_type, values=values), report


# ---------------------------------------------------------------------------
# Writers. All CSV output is UTF-8, LF-terminated, with a deterministic
# row and column order; report floats are rendered with 6 decimal places.
# ---------------------------------------------------------------------------


def _fmt6(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _write_csv(dest: str | Path, header: list[str], rows: Iterable[Iterable]) -> int:
    try:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
            return fh.tell()
    except OSError as exc:
        raise IngestError(f"cannot write {dest}: {exc}") from exc


def _write_sidecar(dest: str | Path, config_hash: str, n_rows: int) -> None:
    meta = {"config_hash": config_hash, "rows": n_rows}
    try:
        with open(f"{dest}.meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IngestError(f"cannot write {dest}.meta.json: {exc}") from exc


def write_stops(stops: Iterable[StopRecord], dest: str | Path) -> int:
    rows = ([s.user_id, repr(s.lon), repr(s.lat), format_iso_utc(s.start_ts), s.dwell_s] for s in stops)
    return _write_csv(dest, STOPS_HEADER, rows)


def write_tracts(tracts: Iterable[CensusTract], dest: str | Path) -> int:
    features = []
    for t in tracts:
        coords = [[[list(pt) for pt in ring] for ring in part] for part in t.geometry]
        if len(coords) == 1:
            geom = {"type": "Polygon", "coordinates": coords[0]}
        else:
            geom = {"type": "MultiPolygon", "coordinates": coords}
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "GEOID": t.geoid,
                    "POP": t.population,
                    "PCT_MINORITY": t.pct_minority,
                    "PCT_POV200": t.pct_below_poverty200,
                },
                "geometry": geom,
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    try:
        with open(dest, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")
            return fh.tell()
    except OSError as exc:
        raise IngestError(f"cannot write {dest}: {exc}") from exc


def write_hazard(layer: HazardLayer, dest: str | Path) -> int:
    if layer.hazard_type == "heat":
        rows = ([g, int(layer.values[g])] for g in sorted(layer.values))
    else:
        rows = ([g, repr(layer.values[g])] for g in sorted(layer.values))
    return _write_csv(dest, HAZARD_HEADER, rows)


def write_mask(layer: HazardLayer, dest: str | Path) -> int:
    rows = (
        [g, repr(layer.values[g]), int(bool(layer.mask.get(g, False)))]
        for g in sorted(layer.values)
    )
    return _write_csv(dest, ["geoid", "value", "high_hazard"], rows)


def write_homes(assignments: dict[str, str], dest: str | Path) -> int:
    rows = ([u, assignments[u]] for u in sorted(assignments))
    return _write_csv(dest, ["user_id", "geoid"], rows)


def _mei_csv_rows(table: MeiTable) -> list[list[str]]:
    rows = []
    for r in table.sorted_rows():
        rows.append(
            [r.geoid]
            + [_fmt6(r.mei[h]) for h in HAZARD_TYPES]
            + [_fmt6(r.nonhome_share[h]) for h in HAZARD_TYPES]
            + [_fmt6(r.nonhome_conditional[h]) for h in HAZARD_TYPES]
            + [r.region_class[h] for h in HAZARD_TYPES]
        )
    return rows


def write_report(table, dest: str | Path, config_hash: str = "") -> int:
    """Write any report object as a deterministic CSV plus metadata sidecar.

    Dispatches on the table type; returns the CSV byte count. Import of
    the result types is deferred to avoid import cycles at package load.
    """
    from .cluster import ClusterResult, ClusterSummary
    from .exposure import PopulationCurve
    from .stats import CorrelationTable, DisparityTable, ScatterTable

    if isinstance(table, MeiTable):
        rows = _mei_csv_rows(table)
        n = _write_csv(dest, MEI_HEADER, rows)
    elif isinstance(table, ClusterResult):
        rows = [[g, table.labels[g]] for g in sorted(table.labels)]
        n = _write_csv(dest, ["geoid", "label"], rows)
    elif isinstance(table, ClusterSummary):
        rows = [
            [r.label, r.count, _fmt6(r.share)] + [_fmt6(r.mean_mei[h]) for h in HAZARD_TYPES]
            for r in table.rows
        ]
        header = ["label", "count", "share"] + [f"mean_mei_{HAZARD_SHORT[h]}" for h in HAZARD_TYPES]
        n = _write_csv(dest, header, rows)
    elif isinstance(table, DisparityTable):
        rows = []
        for r in table.rows:
            cells = [r.hazard, r.region_class, r.n_tracts,
                     _fmt6(r.mean_poverty), _fmt6(r.mean_minority),
                     _fmt6(r.weighted_mean_poverty), _fmt6(r.weighted_mean_minority)]
            for test in (r.poverty_test, r.minority_test):
                if test is None:
                    cells += ["", "", ""]
                else:
                    cells += [_fmt6(test.t), _fmt6(test.p), int(test.significant_01)]
            rows.append(cells)
        header = ["hazard", "region_class", "n_tracts", "mean_poverty", "mean_minority",
                  "weighted_mean_poverty", "weighted_mean_minority",
                  "t_poverty", "p_poverty", "sig01_poverty",
                  "t_minority", "p_minority", "sig01_minority"]
        n = _write_csv(dest, header, rows)
    elif isinstance(table, CorrelationTable):
        rows = [
            [a, b, _fmt6(c.r), _fmt6(c.p), c.n, int(c.p < 0.01)]
            for a, b, c in table.rows
        ]
        n = _write_csv(dest, ["hazard_a", "hazard_b", "r", "p", "n", "sig01"], rows)
    elif isinstance(table, ScatterTable):
        rows = [
            [r.geoid, _fmt6(r.pct_poverty200), _fmt6(r.mei_air), _fmt6(r.mei_toxic),
             _fmt6(r.mei_heat), _fmt6(r.pct_minority), r.population]
            for r in table.rows
        ]
        header = ["geoid", "pct_poverty200", "mei_air", "mei_toxic", "mei_heat",
                  "pct_minority", "population"]
        n = _write_csv(dest, header, rows)
    elif isinstance(table, PopulationCurve):
        n = _write_curves([table], dest)
    elif isinstance(table, list) and all(isinstance(c, PopulationCurve) for c in table):
        n = _write_curves(table, dest)
    else:
        raise IngestError(f"write_report does not handle {type(table).__name__}")
    _write_sidecar(dest, config_hash, _row_count(table))
    return n


def _write_curves(curves, dest: str | Path) -> int:
    rows = []
    for curve in sorted(curves, key=lambda c: HAZARD_TYPES.index(c.hazard_type)):
        for threshold, population in curve.points:
            rows.append([curve.hazard_type, _fmt6(threshold), population])
    return _write_csv(dest, ["hazard", "threshold", "population"], rows)


def _row_count(table) -> int:
    from .cluster import ClusterResult, ClusterSummary
    from .exposure import PopulationCurve
    from .stats import CorrelationTable, DisparityTable, ScatterTable

    if isinstance(table, MeiTable):
        return len(table.rows)
    if isinstance(table, ClusterResult):
        return len(table.labels)
    if isinstance(table, (ClusterSummary, DisparityTable, CorrelationTable, ScatterTable)):
        return len(table.rows)
    if isinstance(table, PopulationCurve):
        return len(table.points)
    return sum(len(c.points) for c in table)


def read_mei(source: str | Path | IO) -> MeiTable:
    """Parse a mei.csv report back into a MeiTable (6-decimal precision)."""
    handle, owned = _open_text(source)
    try:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != MEI_HEADER:
            raise IngestError(f"bad mei.csv header: {header}")
        rows: dict[str, MeiRow] = {}
        for row in reader:
            geoid = row[0]

            def triplet(offset: int) -> dict[str, float | None]:
                return {
                    h: (float(row[offset + i]) if row[offset + i] else None)
                    for i, h in enumerate(HAZARD_TYPES)
                }

            rows[geoid] = MeiRow(
                geoid=geoid,
                mei=triplet(1),
                nonhome_share=triplet(4),
                nonhome_conditional=triplet(7),
                region_class={h: row[10 + i] for i, h in enumerate(HAZARD_TYPES)},
            )
        return MeiTable(rows=rows)
    finally:
        if owned:
            handle.close()
