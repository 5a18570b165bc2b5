"""One-way ANOVA with an F-distribution tail via the incomplete beta.

The F statistic is the ratio of between-group to within-group mean
squares. Its upper-tail probability is the regularized incomplete beta
I_x(d2/2, d1/2) at x = d2 / (d2 + d1*F), evaluated here with a modified
Lentz continued fraction, so no statistics library is needed at
runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateDataError, PreconditionError, ValidationError

_CF_MAX_ITER = 300
_CF_EPS = 1e-15
_CF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + num / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + num / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ValidationError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValidationError("incomplete beta requires a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # The continued fraction converges quickly on the side of the
    # symmetry point; use I_x(a,b) = 1 - I_{1-x}(b,a) on the other side.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_upper_tail(f: float, df_between: int, df_within: int) -> float:
    """P(F >= f) for the F distribution with the given degrees of freedom."""
    if df_between <= 0 or df_within <= 0:
        raise ValidationError("degrees of freedom must be positive")
    if f < 0:
        raise ValidationError("F must be >= 0")
    if f == 0.0:
        return 1.0
    x = df_within / (df_within + df_between * f)
    return regularized_incomplete_beta(df_within / 2.0, df_between / 2.0, x)


@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: float
    sd: float


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    group_stats: tuple[GroupStats, ...]


def sample_sd(values: list[float]) -> float:
    """Sample standard deviation (n-1 denominator)."""
    n = len(values)
    if n < 2:
        raise PreconditionError("sample sd needs at least 2 observations")
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def one_way_anova(groups: list[list[float]]) -> AnovaResult:
    """One-way ANOVA over two or more groups of observations.

    Groups need at least two observations each. Zero within-group
    variance makes the F ratio meaningless and raises
    DegenerateDataError.
    """
    if len(groups) < 2:
        raise PreconditionError("ANOVA needs at least 2 groups")
    for i, g in enumerate(groups):
        if len(g) < 2:
            raise PreconditionError(f"group {i} has fewer than 2 observations")

    k = len(groups)
    n_total = sum(len(g) for g in groups)
    grand_mean = sum(sum(g) for g in groups) / n_total
    group_means = [sum(g) / len(g) for g in groups]

    ss_between = sum(
        len(g) * (mean - grand_mean) ** 2 for g, mean in zip(groups, group_means)
    )
    ss_within = sum(
        sum((x - mean) ** 2 for x in g) for g, mean in zip(groups, group_means)
    )

    df_between = k - 1
    df_within = n_total - k
    if ss_within == 0.0:
        raise DegenerateDataError("zero within-group variance; F is undefined")
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    f_stat = ms_between / ms_within

    return AnovaResult(
        f_stat=f_stat,
        df_between=df_between,
        df_within=df_within,
        p_value=f_upper_tail(f_stat, df_between, df_within),
        group_stats=tuple(
            GroupStats(n=len(g), mean=mean, sd=sample_sd(g))
            for g, mean in zip(groups, group_means)
        ),
    )
