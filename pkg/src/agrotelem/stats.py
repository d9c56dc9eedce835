"""Descriptive statistics and one-way ANOVA with library-free F-distribution numerics.

The F survival function goes through the regularized incomplete beta
``I_x(a, b)``, evaluated with Lentz's continued fraction and the usual
symmetry switch. Everything here is pure-Python on purpose: the numbers
must be auditable against independent oracles down to 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict


class StatsError(ValueError):
    pass


class EmptyInput(StatsError):
    pass


class TooFewGroups(StatsError):
    pass


class DegenerateWithin(StatsError):
    """Within-group variance is zero, so F is undefined."""


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    sd: float  # sample SD, n-1 denominator
    cv: float | None  # percent, None when the mean is zero
    median: float


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    sd: float

    def __post_init__(self) -> None:
        if self.n < 2:
            raise StatsError(f"group needs n >= 2, got {self.n}")
        if self.sd < 0:
            raise StatsError(f"sd must be >= 0, got {self.sd}")


@dataclass(frozen=True)
class AnovaTable:
    ss_between: float
    ss_within: float
    ss_total: float
    df_between: int
    df_within: int
    df_total: int
    ms_between: float
    ms_within: float
    f: float
    p: float

    def as_dict(self) -> dict:
        return asdict(self)


def describe(values: list[float]) -> DescriptiveStats:
    """Mean, sample SD, CV%, and median (mean of the middle two for even n)."""
    n = len(values)
    if n == 0:
        raise EmptyInput("describe needs at least one value")
    mean = sum(values) / n
    if n > 1:
        sd = math.sqrt(sum((x - mean) ** 2 for x in values) / (n - 1))
    else:
        sd = 0.0
    cv = 100.0 * sd / mean if mean != 0 else None
    ordered = sorted(values)
    mid = n // 2
    median = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    return DescriptiveStats(n=n, mean=mean, sd=sd, cv=cv, median=median)


def anova_from_raw(groups: list[list[float]]) -> AnovaTable:
    """One-way ANOVA from raw scores."""
    if len(groups) < 2:
        raise TooFewGroups("need at least 2 groups")
    for g in groups:
        if len(g) < 2:
            raise StatsError("every group needs at least 2 observations")
    total_n = sum(len(g) for g in groups)
    grand_mean = sum(sum(g) for g in groups) / total_n
    means = [sum(g) / len(g) for g in groups]
    ss_between = sum(len(g) * (m - grand_mean) ** 2 for g, m in zip(groups, means))
    ss_within = sum(sum((x - m) ** 2 for x in g) for g, m in zip(groups, means))
    ss_total = sum(sum((x - grand_mean) ** 2 for x in g) for g in groups)
    return _assemble(ss_between, ss_within, ss_total, k=len(groups), total_n=total_n)


def anova_from_summary(groups: list[GroupSummary | tuple]) -> AnovaTable:
    """One-way ANOVA from (n, mean, sd) group summaries."""
    summaries = [g if isinstance(g, GroupSummary) else GroupSummary(*g) for g in groups]
    if len(summaries) < 2:
        raise TooFewGroups("need at least 2 groups")
    total_n = sum(g.n for g in summaries)
    grand_mean = sum(g.n * g.mean for g in summaries) / total_n
    ss_between = sum(g.n * (g.mean - grand_mean) ** 2 for g in summaries)
    ss_within = sum((g.n - 1) * g.sd**2 for g in summaries)
    return _assemble(
        ss_between, ss_within, ss_between + ss_within, k=len(summaries), total_n=total_n
    )


def _assemble(
    ss_between: float, ss_within: float, ss_total: float, k: int, total_n: int
) -> AnovaTable:
    df_between = k - 1
    df_within = total_n - k
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within <= 0:
        raise DegenerateWithin("zero within-group variance; F undefined")
    f = ms_between / ms_within
    return AnovaTable(
        ss_between=ss_between,
        ss_within=ss_within,
        ss_total=ss_total,
        df_between=df_between,
        df_within=df_within,
        df_total=df_between + df_within,
        ms_between=ms_between,
        ms_within=ms_within,
        f=f,
        p=f_sf(f, df_between, df_within),
    )


# --- F-distribution survival function via the regularized incomplete beta ---

_CF_EPS = 1e-15  # converge well below the 1e-12 accuracy contract
_CF_MAX_ITER = 500
_FPMIN = 1e-300


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise StatsError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise StatsError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise StatsError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # Symmetry switch keeps the continued fraction in its fast-converging region.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def f_sf(f: float, df1: int, df2: int) -> float:
    """Survival function of the F distribution: P(F > f).

    Computed as I_{df2/(df2 + df1*f)}(df2/2, df1/2); f = 0 gives 1.
    """
    if f < 0:
        raise StatsError(f"f must be >= 0, got {f}")
    if df1 < 1 or df2 < 1:
        raise StatsError("degrees of freedom must be >= 1")
    if f == 0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return betainc_reg(df2 / 2.0, df1 / 2.0, x)


# --- presentation ---

def format_anova_table(table: AnovaTable) -> str:
    """Fixed-width one-way ANOVA table (p shown to 3 decimals)."""
    header = (
        "Source of variation  Sum of squares  Degrees of freedom  Mean square  F      p"
    )
    rows = [
        header,
        f"{'Group':<20} {table.ss_between:>14.2f} {table.df_between:>19d} "
        f"{table.ms_between:>12.2f} {table.f:>6.3f} {table.p:>6.3f}",
        f"{'Error':<20} {table.ss_within:>14.2f} {table.df_within:>19d} "
        f"{table.ms_within:>12.2f}",
        f"{'Total':<20} {table.ss_total:>14.2f} {table.df_total:>19d}",
    ]
    return "\n".join(rows)


def format_descriptives(labels: list[str], stats: list[DescriptiveStats]) -> str:
    """Per-group descriptive table: participants, mean, SD, CV%, median."""
    width = max([12] + [len(lbl) + 2 for lbl in labels])
    name_width = 30
    lines = ["Statistic".ljust(name_width) + "".join(lbl.rjust(width) for lbl in labels)]

    def row(name: str, cells: list[str]) -> str:
        return name.ljust(name_width) + "".join(c.rjust(width) for c in cells)

    lines.append(row("Participants", [str(s.n) for s in stats]))
    lines.append(row("Mean", [f"{s.mean:.2f}" for s in stats]))
    lines.append(row("Standard deviation", [f"{s.sd:.2f}" for s in stats]))
    lines.append(
        row(
            "Coefficient of variation (%)",
            ["n/a" if s.cv is None else f"{s.cv:.2f}" for s in stats],
        )
    )
    lines.append(row("Median", [f"{s.median:.2f}" for s in stats]))
    return "\n".join(lines)
