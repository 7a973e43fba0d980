from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special

from segfair.exception.exceptions import StatisticsError
from segfair.model.reports import AnovaResult, RegressionResult, TTestResult


def _as_vector(xs: Sequence[float], name: str = "xs") -> np.ndarray:
    arr = np.asarray(xs, dtype=float).ravel()
    if arr.size == 0:
        raise StatisticsError(f"Entrée vide: {name}")
    if not np.all(np.isfinite(arr)):
        raise StatisticsError(f"Valeurs non finies dans {name}")
    return arr


def percentile_linear(xs: Sequence[float], p: float) -> float:
    """Percentile par interpolation linéaire entre rangs (indice p·(n−1))."""
    return float(np.percentile(_as_vector(xs), p, method="linear"))


def mean_std(xs: Sequence[float]) -> Tuple[float, Optional[float]]:
    """Moyenne et écart-type d'échantillon (dénominateur n−1, None si n = 1)."""
    arr = _as_vector(xs)
    std = float(np.std(arr, ddof=1)) if arr.size >= 2 else None
    return float(np.mean(arr)), std


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    std: Optional[float]
    median: float
    q1: float
    q3: float
    minimum: float
    maximum: float


def describe(xs: Sequence[float]) -> Summary:
    arr = _as_vector(xs)
    mean, std = mean_std(arr)
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0], method="linear")
    return Summary(
        n=int(arr.size),
        mean=mean,
        std=std,
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        minimum=float(arr.min()),
        maximum=float(arr.max()),
    )


# ---------------------------------------------------------------------------
# Fonctions spéciales
def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Bêta incomplète régularisée I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise StatisticsError(f"x hors de [0, 1]: {x}")
    if not (a > 0 and b > 0):
        raise StatisticsError(f"Paramètres non positifs: a={a}, b={b}")
    return float(special.betainc(a, b, x))


def _clip_p(p: float) -> float:
    return min(1.0, max(0.0, p))


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return _clip_p(reg_inc_beta(df / (df + t * t), df / 2.0, 0.5))


def f_survival(f: float, df1: float, df2: float) -> float:
    if math.isinf(f):
        return 0.0
    if f <= 0.0:
        return 1.0
    return _clip_p(reg_inc_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0))


# ---------------------------------------------------------------------------
# Régression, ANOVA, tests t
def ols_fit(x: Sequence[float], y: Sequence[float]) -> RegressionResult:
    """Moindres carrés y ~ x, p bilatéral de la pente (n−2 ddl)."""
    xv, yv = _as_vector(x, "x"), _as_vector(y, "y")
    if xv.size != yv.size:
        raise StatisticsError(f"Longueurs différentes: {xv.size} vs {yv.size}")
    n = int(xv.size)
    if n < 3:
        raise StatisticsError(f"Au moins 3 points requis, reçu {n}")
    if np.ptp(xv) == 0.0:
        raise StatisticsError("degenerate regressor")

    xm, ym = xv.mean(), yv.mean()
    dx = xv - xm
    sxx = float(np.dot(dx, dx))
    if np.ptp(yv) == 0.0:
        return RegressionResult(slope=0.0, intercept=float(yv[0]), r2=0.0, p_slope=1.0, n=n)

    slope = float(np.dot(dx, yv - ym)) / sxx
    intercept = float(ym - slope * xm)
    resid = yv - (intercept + slope * xv)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(yv - ym, yv - ym))
    r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))

    df = n - 2
    se = math.sqrt(ss_res / df / sxx)
    if se == 0.0:
        p = 0.0 if slope != 0.0 else 1.0
    else:
        p = t_two_sided_p(slope / se, df)
    return RegressionResult(slope=slope, intercept=intercept, r2=r2, p_slope=p, n=n)


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """ANOVA à un facteur classique (variances égales)."""
    if len(groups) < 2:
        raise StatisticsError("Au moins deux groupes requis")
    arrays = [_as_vector(g, "groupe") for g in groups]
    if any(a.size < 2 for a in arrays):
        raise StatisticsError("Chaque groupe doit compter au moins deux valeurs")

    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    grand = np.concatenate(arrays).mean()
    ss_between = float(sum(a.size * (a.mean() - grand) ** 2 for a in arrays))
    ss_within = float(sum(np.sum((a - a.mean()) ** 2) for a in arrays))
    df_b, df_w = k - 1, n_total - k
    ms_b, ms_w = ss_between / df_b, ss_within / df_w

    if ms_w == 0.0:
        # limites : tout constant -> F = 0 ; groupes séparés -> F = +inf
        f_stat = 0.0 if ms_b == 0.0 else math.inf
        return AnovaResult(
            f_stat=f_stat,
            df_between=df_b,
            df_within=df_w,
            p=f_survival(f_stat, df_b, df_w),
            degenerate=True,
        )
    f_stat = ms_b / ms_w
    return AnovaResult(
        f_stat=f_stat, df_between=df_b, df_within=df_w, p=f_survival(f_stat, df_b, df_w)
    )


def _two_samples(a: Sequence[float], b: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    av, bv = _as_vector(a, "a"), _as_vector(b, "b")
    if av.size < 2 or bv.size < 2:
        raise StatisticsError("Chaque échantillon doit compter au moins deux valeurs")
    return av, bv


def welch_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Test t de Welch bilatéral, ddl de Welch–Satterthwaite."""
    av, bv = _two_samples(a, b)
    na, nb = av.size, bv.size
    va, vb = av.var(ddof=1) / na, bv.var(ddof=1) / nb
    diff = float(av.mean() - bv.mean())
    se2 = va + vb
    if se2 == 0.0:
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return TTestResult(
            t_stat=t, df=float(na + nb - 2), p=t_two_sided_p(t, na + nb - 2), degenerate=True
        )
    df = se2**2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    t = diff / math.sqrt(se2)
    return TTestResult(t_stat=t, df=float(df), p=t_two_sided_p(t, df))
