"""Disparity and association statistics.

Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
freedom, two-sided p-values through the regularized incomplete beta
function (continued-fraction evaluation), Pearson correlation with its
t-based p-value, and the table builders for the disparity and scatter
reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    HAZARD_TYPES,
    REGION_DIRECT,
    REGION_LATENT,
    CensusTract,
    MeiTable,
)

_BETACF_MAX_ITER = 400
_BETACF_EPS = 1e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value for a t statistic with df degrees of freedom."""
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc_regularized(df / 2.0, 0.5, x)


@dataclass(frozen=True, slots=True)
class TTestResult:
    mean_a: float
    mean_b: float
    t: float
    df: float
    p: float
    significant_01: bool


@dataclass(frozen=True, slots=True)
class CorrelationResult:
    r: float
    p: float
    n: int


def _mean_var(sample: list[float]) -> tuple[float, float]:
    n = len(sample)
    mean = math.fsum(sample) / n
    var = math.fsum((v - mean) ** 2 for v in sample) / (n - 1)
    return mean, var


def welch_t_test(sample_a, sample_b, pooled: bool = False) -> TTestResult | None:
    """Two-sample t-test; Welch by default, pooled variance on request.

    Returns None (not an exception) when a sample has fewer than two
    values or both variances are zero.
    """
    a = [float(v) for v in sample_a]
    b = [float(v) for v in sample_b]
    if len(a) < 2 or len(b) < 2:
        return None
    mean_a, var_a = _mean_var(a)
    mean_b, var_b = _mean_var(b)
    if var_a == 0.0 and var_b == 0.0:
        return None
    na, nb = len(a), len(b)
    if pooled:
        sp2 = ((na - 1) * var_a + (nb - 1) * var_b) / (na + nb - 2)
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
        df = float(na + nb - 2)
    else:
        sa, sb = var_a / na, var_b / nb
        se = math.sqrt(sa + sb)
        df = (sa + sb) ** 2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    t = (mean_a - mean_b) / se if se > 0 else math.inf * math.copysign(1.0, mean_a - mean_b)
    p = t_two_sided_p(t, df)
    return TTestResult(mean_a=mean_a, mean_b=mean_b, t=t, df=df, p=p, significant_01=p < 0.01)


def pearson(x, y) -> CorrelationResult | None:
    """Sample Pearson correlation with a two-sided t-based p-value.

    Returns None for undersized or constant input.
    """
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    n = len(xs)
    if n != len(ys) or n < 3:
        return None
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((v - mx) ** 2 for v in xs)
    syy = math.fsum((v - my) ** 2 for v in ys)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = t_two_sided_p(t, n - 2)
    return CorrelationResult(r=r, p=p, n=n)


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------

COMPOUND = "compound"
DISPARITY_HAZARDS = HAZARD_TYPES + (COMPOUND,)


@dataclass(frozen=True, slots=True)
class DisparityRow:
    hazard: str
    region_class: str
    n_tracts: int
    mean_poverty: float | None
    mean_minority: float | None
    weighted_mean_poverty: float | None
    weighted_mean_minority: float | None
    poverty_test: TTestResult | None
    minority_test: TTestResult | None


@dataclass(frozen=True, slots=True)
class DisparityTable:
    rows: list[DisparityRow]


@dataclass(frozen=True, slots=True)
class ScatterRow:
    geoid: str
    pct_poverty200: float
    mei_air: float | None
    mei_toxic: float | None
    mei_heat: float | None
    pct_minority: float
    population: int


@dataclass(frozen=True, slots=True)
class ScatterTable:
    rows: list[ScatterRow]


@dataclass(frozen=True, slots=True)
class CorrelationTable:
    rows: list[tuple[str, str, CorrelationResult]]


def _included(table: MeiTable, tracts: list[CensusTract]):
    by_geoid = {t.geoid: t for t in tracts}
    joined = []
    for geoid in sorted(table.rows):
        row = table.rows[geoid]
        tract = by_geoid.get(geoid)
        if tract is None or row.excluded:
            continue
        joined.append((tract, row))
    return joined


def _in_class(row, hazard: str, region: str) -> bool:
    if hazard == COMPOUND:
        return all(row.region_class[h] == region for h in HAZARD_TYPES)
    return row.region_class[hazard] == region


def _means(tracts: list[CensusTract]) -> tuple[float | None, float | None, float | None, float | None]:
    if not tracts:
        return None, None, None, None
    n = len(tracts)
    poverty = math.fsum(t.pct_below_poverty200 for t in tracts) / n
    minority = math.fsum(t.pct_minority for t in tracts) / n
    total_pop = sum(t.population for t in tracts)
    if total_pop > 0:
        wpoverty = math.fsum(t.pct_below_poverty200 * t.population for t in tracts) / total_pop
        wminority = math.fsum(t.pct_minority * t.population for t in tracts) / total_pop
    else:
        wpoverty, wminority = None, None
    return poverty, minority, wpoverty, wminority


def disparity_table(table: MeiTable, tracts: list[CensusTract]) -> DisparityTable:
    """Group demographic means with significance tests, mirroring Table-style
    direct/latent comparisons for each hazard and the compound case.

    Each class is compared against the complementary tracts with a Welch
    t-test at the 0.01 level; classes with fewer than 2 tracts get their
    means but no test. The first row carries the all-tract baseline.
    """
    joined = _included(table, tracts)
    all_tracts = [t for t, _ in joined]
    rows: list[DisparityRow] = []
    poverty, minority, wpoverty, wminority = _means(all_tracts)
    rows.append(
        DisparityRow(
            hazard="all", region_class="all", n_tracts=len(all_tracts),
            mean_poverty=poverty, mean_minority=minority,
            weighted_mean_poverty=wpoverty, weighted_mean_minority=wminority,
            poverty_test=None, minority_test=None,
        )
    )
    for hazard in DISPARITY_HAZARDS:
        for region in (REGION_DIRECT, REGION_LATENT):
            members = [t for t, r in joined if _in_class(r, hazard, region)]
            rest = [t for t, r in joined if not _in_class(r, hazard, region)]
            poverty, minority, wpoverty, wminority = _means(members)
            poverty_test = minority_test = None
            if len(members) >= 2 and len(rest) >= 2:
                poverty_test = welch_t_test(
                    [t.pct_below_poverty200 for t in members],
                    [t.pct_below_poverty200 for t in rest],
                )
                minority_test = welch_t_test(
                    [t.pct_minority for t in members],
                    [t.pct_minority for t in rest],
                )
            rows.append(
                DisparityRow(
                    hazard=hazard, region_class=region, n_tracts=len(members),
                    mean_poverty=poverty, mean_minority=minority,
                    weighted_mean_poverty=wpoverty, weighted_mean_minority=wminority,
                    poverty_test=poverty_test, minority_test=minority_test,
                )
            )
    return DisparityTable(rows=rows)


def hazard_pair_correlations(table: MeiTable) -> CorrelationTable:
    """Pearson correlation for each hazard pair over fully defined rows."""
    rows = []
    for i, ha in enumerate(HAZARD_TYPES):
        for hb in HAZARD_TYPES[i + 1 :]:
            xs, ys = [], []
            for geoid in sorted(table.rows):
                row = table.rows[geoid]
                if row.mei[ha] is not None and row.mei[hb] is not None:
                    xs.append(row.mei[ha])
                    ys.append(row.mei[hb])
            result = pearson(xs, ys)
            if result is not None:
                rows.append((ha, hb, result))
    return CorrelationTable(rows=rows)


def scatter_export(table: MeiTable, tracts: list[CensusTract]) -> ScatterTable:
    """Per-tract rows pairing exposure indices with demographics."""
    by_geoid = {t.geoid: t for t in tracts}
    rows = []
    for geoid in sorted(table.rows):
        tract = by_geoid.get(geoid)
        if tract is None:
            continue
        row = table.rows[geoid]
        rows.append(
            ScatterRow(
                geoid=geoid,
                pct_poverty200=tract.pct_below_poverty200,
                mei_air=row.mei["air_pollution"],
                mei_toxic=row.mei["toxic"],
                mei_heat=row.mei["heat"],
                pct_minority=tract.pct_minority,
                population=tract.population,
            )
        )
    return ScatterTable(rows=rows)
