"""Statistical kernels: exact Poisson-binomial tail test and Welch t-tests.

The t distribution CDF is computed from the regularized incomplete beta
function via its continued-fraction expansion, so the package carries no
numeric dependency beyond numpy. Accuracy is ~1e-14 against reference
implementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    InsufficientData,
    InvalidObservation,
    InvalidProbability,
    NonConvergence,
    ZeroVariance,
)

__all__ = [
    "poisson_binomial_pmf",
    "poisson_binomial_pvalue",
    "t_test",
    "TTestResult",
    "paired_diff_analysis",
    "student_t_cdf",
    "normal_sf",
]


# -- Poisson-binomial ----------------------------------------------------------

def poisson_binomial_pmf(probs: Sequence[float]) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli(p_i) variables.

    Iterative convolution: start from [1]; folding in p maps
    new[k] = old[k] * (1 - p) + old[k - 1] * p. Returns an array of
    length N + 1 whose k-th entry is P(K = k).
    """
    ps = np.asarray(list(probs), dtype=float)
    if ps.size and (np.any(ps < 0.0) or np.any(ps > 1.0) or not np.all(np.isfinite(ps))):
        raise InvalidProbability("success probabilities must lie in [0, 1]")
    pmf = np.array([1.0])
    for p in ps:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def poisson_binomial_pvalue(probs: Sequence[float], k_obs: int) -> float:
    """Upper-tail probability P(K >= k_obs) under heterogeneous chance levels."""
    pmf = poisson_binomial_pmf(probs)
    n = pmf.size - 1
    if not (0 <= k_obs <= n):
        raise InvalidObservation(f"k_obs={k_obs} outside support [0, {n}]")
    # Sum from the small tail end to limit cancellation.
    return float(min(1.0, pmf[k_obs:][::-1].sum()))


# -- regularized incomplete beta / t distribution ------------------------------

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-16
_BETACF_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise NonConvergence("incomplete beta continued fraction did not converge")


def _betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise InvalidObservation("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * _betainc_reg(0.5 * df, 0.5, x)  # P(|T| >= |t|) / 2
    return tail if t <= 0 else 1.0 - tail


def normal_sf(z: float) -> float:
    """Standard normal upper tail P(Z >= z)."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# -- t-tests -------------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float
    sided: str


def t_test(sample_a: Sequence[float], sample_b: Sequence[float],
           sided: str = "two") -> TTestResult:
    """Welch two-sample t-test.

    ``sided="two"`` gives the usual two-sided p; ``sided="less"`` tests
    mean(a) < mean(b), i.e. p = P(T <= t). Degrees of freedom follow
    Welch-Satterthwaite. Swapping the samples negates t and maps the
    one-sided p to 1 - p.
    """
    if sided not in ("two", "less"):
        raise ValueError(f"unknown sidedness {sided!r}")
    a = np.asarray(list(sample_a), dtype=float)
    b = np.asarray(list(sample_b), dtype=float)
    if a.size < 2 or b.size < 2:
        raise InsufficientData("each sample needs at least 2 observations")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise ZeroVariance("both samples are constant")
    sa = va / a.size
    sb = vb / b.size
    se = math.sqrt(sa + sb)
    t = (a.mean() - b.mean()) / se
    df_num = (sa + sb) ** 2
    df_den = 0.0
    if sa > 0:
        df_den += sa * sa / (a.size - 1)
    if sb > 0:
        df_den += sb * sb / (b.size - 1)
    df = df_num / df_den
    if sided == "two":
        p = 2.0 * student_t_cdf(-abs(t), df)
    else:
        p = student_t_cdf(t, df)
    return TTestResult(t=float(t), p=float(min(1.0, p)), df=float(df), sided=sided)


def paired_diff_analysis(
    human_costs: Mapping[str, Sequence[float]],
    sampled_alt_costs: Mapping[str, Sequence[float]],
) -> dict[str, dict[str, float]]:
    """Per-cost summary of human-minus-alternative differences.

    Inputs are aligned by position: one sampled alternative per context.
    For each cost, reports the difference distribution and a one-sided
    t-test of mean(diff) < 0 (human cheaper). The test is the Welch test
    of the differences against an all-zero sample of equal size, which
    reduces exactly to the one-sample t with n - 1 degrees of freedom.
    """
    out: dict[str, dict[str, float]] = {}
    for cost, human in human_costs.items():
        if cost not in sampled_alt_costs:
            raise InsufficientData(f"no sampled alternatives for cost {cost!r}")
        h = np.asarray(list(human), dtype=float)
        s = np.asarray(list(sampled_alt_costs[cost]), dtype=float)
        if h.size != s.size:
            raise InsufficientData(
                f"cost {cost!r}: {h.size} human vs {s.size} sampled values"
            )
        d = h - s
        if d.size >= 2 and d.var(ddof=1) == 0.0:
            # Constant differences: the t statistic degenerates to +-inf.
            m = float(d.mean())
            t_stat = 0.0 if m == 0.0 else math.copysign(math.inf, m)
            res = TTestResult(
                t=t_stat,
                p=0.5 if m == 0.0 else (0.0 if m < 0.0 else 1.0),
                df=float(d.size - 1),
                sided="less",
            )
        else:
            res = t_test(d, np.zeros(d.size), sided="less")
        out[cost] = {
            "n": int(d.size),
            "mean_diff": float(d.mean()),
            "sd_diff": float(d.std(ddof=1)) if d.size > 1 else 0.0,
            "t": res.t,
            "p": res.p,
            "df": res.df,
        }
    return out
