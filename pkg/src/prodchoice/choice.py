"""Production-choice models.

Covers the probabilistic softmax rule and its deterministic argmin limit,
rank analysis of the human continuation, the pairwise logistic choice
model with cluster-robust covariance, and the scalar-sensitivity
conditional logit. Both logistic fits use a damped Newton method with
step-halving line search; convergence is a gradient infinity-norm below
1e-8 within 100 iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateVariance,
    NonConvergence,
    NonIdentifiable,
    PerfectSeparation,
)
from .stats import normal_sf, poisson_binomial_pvalue

__all__ = [
    "Candidate",
    "ChoiceSet",
    "PairwiseRow",
    "FitResult",
    "softmax_choice",
    "argmin_choice",
    "rank_of_human",
    "standardize_sets",
    "build_pairwise",
    "fit_pairwise_logit",
    "fit_conditional_logit",
    "rank1_summary",
]

_Z975 = 1.959963984540054
_MAX_ITER = 100
_GRAD_TOL = 1e-8


@dataclass(frozen=True)
class Candidate:
    candidate_id: str
    cost: float
    is_human: bool


@dataclass(frozen=True)
class ChoiceSet:
    """One context's candidates under one cost; exactly one is human."""

    item_id: str
    candidates: tuple[Candidate, ...]
    condition: str  # goal_directed | goal_agnostic

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise ValueError(f"set {self.item_id}: needs >= 2 candidates")
        n_human = sum(1 for c in self.candidates if c.is_human)
        if n_human != 1:
            raise ValueError(f"set {self.item_id}: {n_human} human candidates")
        if not all(math.isfinite(c.cost) for c in self.candidates):
            raise ValueError(f"set {self.item_id}: non-finite cost")

    @property
    def costs(self) -> np.ndarray:
        return np.array([c.cost for c in self.candidates])

    @property
    def human_index(self) -> int:
        return next(i for i, c in enumerate(self.candidates) if c.is_human)


@dataclass(frozen=True)
class PairwiseRow:
    y: int
    delta_cost: float
    gd: int
    cluster_id: str


@dataclass
class FitResult:
    coef_names: list[str]
    coefficients: dict[str, float]
    covariance: np.ndarray
    per_item_loglik: float
    n_obs: int
    converged: bool
    n_iter: int
    metrics: dict[str, float] = field(default_factory=dict)
    se: dict[str, float] = field(default_factory=dict)
    ci95: dict[str, tuple[float, float]] = field(default_factory=dict)
    p_values: dict[str, float] = field(default_factory=dict)
    notes: dict[str, object] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "se": self.se,
            "ci95": {k: list(v) for k, v in self.ci95.items()},
            "p_values": self.p_values,
            "per_item_loglik": self.per_item_loglik,
            "n_obs": self.n_obs,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "metrics": self.metrics,
            "covariance": self.covariance.tolist(),
            "notes": self.notes,
        }


# -- elementary rules ------------------------------------------------------------

def softmax_choice(costs: Sequence[float], alpha: float) -> np.ndarray:
    """P_i proportional to exp(-alpha * C_i), max-shifted for stability."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0:
        raise ValueError("need at least one cost")
    z = -alpha * c
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def argmin_choice(costs: Sequence[float]) -> set[int]:
    """All indices attaining the minimum cost; ties preserved."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0:
        raise ValueError("need at least one cost")
    m = c.min()
    return set(np.flatnonzero(c == m).tolist())


def rank_of_human(choice_set: ChoiceSet, tie_policy: str = "strict") -> float:
    """Rank of the human candidate by cost.

    "strict": 1 + number of candidates strictly cheaper (ties never hurt).
    "mid": ties split the occupied ranks evenly.
    """
    costs = choice_set.costs
    h = costs[choice_set.human_index]
    below = int((costs < h).sum())
    if tie_policy == "strict":
        return below + 1
    if tie_policy == "mid":
        ties = int((costs == h).sum()) - 1  # other candidates tied with human
        return below + 1 + ties / 2.0
    raise ValueError(f"unknown tie policy {tie_policy!r}")


def standardize_sets(sets: Sequence[ChoiceSet]) -> tuple[list[ChoiceSet], float, float]:
    """Z-score costs pooled over every candidate in the given sets."""
    values = np.array([c.cost for s in sets for c in s.candidates])
    mu = float(values.mean())
    sd = float(values.std(ddof=0))
    if sd == 0.0:
        raise NonIdentifiable("all costs identical; cannot standardize")
    out = []
    for s in sets:
        out.append(ChoiceSet(
            item_id=s.item_id,
            candidates=tuple(
                Candidate(c.candidate_id, (c.cost - mu) / sd, c.is_human)
                for c in s.candidates),
            condition=s.condition,
        ))
    return out, mu, sd


# -- pairwise logistic model ------------------------------------------------------

def build_pairwise(sets: Iterable[ChoiceSet]) -> list[PairwiseRow]:
    """Human-vs-alternative comparisons, both orientations per pair.

    The orientation with the human first has y=1 and delta = C_human -
    C_alt; the mirror has y=0 and the negated delta, so labels are
    balanced at exactly 0.5. gd flags alternatives drawn from the
    goal-directed condition; the cluster is the context. Deltas are
    standardized over the pooled population of rows.
    """
    raw: list[tuple[float, int, int, str]] = []
    for s in sets:
        h = s.candidates[s.human_index]
        gd = 1 if s.condition == "goal_directed" else 0
        for c in s.candidates:
            if c.is_human:
                continue
            raw.append((h.cost - c.cost, 1, gd, s.item_id))
            raw.append((c.cost - h.cost, 0, gd, s.item_id))
    if not raw:
        raise ValueError("no comparisons to build")
    deltas = np.array([r[0] for r in raw])
    sd = deltas.std(ddof=0)
    if sd == 0.0:
        raise DegenerateVariance("all cost differences equal")
    mu = deltas.mean()
    return [
        PairwiseRow(y=y, delta_cost=float((d - mu) / sd), gd=gd, cluster_id=cid)
        for (d, y, gd, cid) in raw
    ]


def _loglik_logistic(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log sigma(eta) for y=1, log sigma(-eta) for y=0, computed stably
    return float(np.sum(np.where(y == 1, -np.logaddexp(0.0, -eta),
                                 -np.logaddexp(0.0, eta))))


def _newton_logistic(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Damped Newton MLE; returns (beta, hessian, iterations)."""
    n, k = X.shape
    beta = np.zeros(k)
    ll = _loglik_logistic(X, y, beta)
    H = np.empty((k, k))
    for it in range(1, _MAX_ITER + 1):
        p = 1.0 / (1.0 + np.exp(-(X @ beta)))
        # every observation fitted to its label => the MLE diverges
        if np.max(np.abs(p - y)) < 1e-6:
            raise PerfectSeparation("fitted probabilities reached the labels")
        g = X.T @ (y - p)
        w = p * (1.0 - p)
        H = X.T @ (X * w[:, None])
        if np.max(np.abs(g)) <= _GRAD_TOL:
            return beta, H, it
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular information matrix")
        # predicted Newton improvement below float resolution: flat optimum
        if 0.5 * float(g @ step) <= 1e-14 * (1.0 + abs(ll)):
            return beta, H, it
        # step-halving line search on the log-likelihood
        scale = 1.0
        for _ in range(40):
            candidate = beta + scale * step
            cand_ll = _loglik_logistic(X, y, candidate)
            if cand_ll >= ll - 1e-12:
                beta = candidate
                ll = cand_ll
                break
            scale *= 0.5
        else:
            raise NonConvergence("line search failed to improve log-likelihood")
        if np.max(np.abs(beta)) > 1e3:
            raise PerfectSeparation("coefficients diverging; separation likely")
    raise NonConvergence(f"no convergence in {_MAX_ITER} iterations "
                         f"(gradient inf-norm {np.max(np.abs(g)):.3g})")


def _cluster_covariance(X: np.ndarray, y: np.ndarray, beta: np.ndarray,
                        H: np.ndarray, clusters: Sequence[str]) -> tuple[np.ndarray, int]:
    """CR1 sandwich: bread = H^-1, meat = sum of per-cluster score outer
    products, scaled by G / (G - 1)."""
    p = 1.0 / (1.0 + np.exp(-(X @ beta)))
    scores = X * (y - p)[:, None]
    ids = np.asarray(clusters)
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    sorted_scores = scores[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    g_sums = np.add.reduceat(sorted_scores, boundaries, axis=0)
    n_groups = g_sums.shape[0]
    meat = g_sums.T @ g_sums
    bread = np.linalg.inv(H)
    cov = bread @ meat @ bread
    if n_groups > 1:
        cov *= n_groups / (n_groups - 1.0)
    return cov, n_groups


def _wald(names: list[str], beta: np.ndarray, cov: np.ndarray, result: FitResult):
    for i, name in enumerate(names):
        se = math.sqrt(max(cov[i, i], 0.0))
        result.se[name] = se
        result.ci95[name] = (beta[i] - _Z975 * se, beta[i] + _Z975 * se)
        result.p_values[name] = (
            2.0 * normal_sf(abs(beta[i]) / se) if se > 0 else 0.0)


def fit_pairwise_logit(rows: Sequence[PairwiseRow]) -> FitResult:
    """MLE of y ~ intercept + delta + gd + delta*gd with CR1 cluster-robust
    covariance over contexts.

    Columns without variation (e.g. gd identically zero) are excluded
    from estimation and flagged in ``notes["excluded"]``. Per-item
    log-likelihood is the mean over rows.
    """
    if not rows:
        raise ValueError("no rows to fit")
    y = np.array([r.y for r in rows], dtype=float)
    delta = np.array([r.delta_cost for r in rows])
    gd = np.array([r.gd for r in rows], dtype=float)
    clusters = [r.cluster_id for r in rows]
    full = {
        "intercept": np.ones(len(rows)),
        "delta": delta,
        "gd": gd,
        "delta_x_gd": delta * gd,
    }
    names = ["intercept"]
    excluded = []
    for name in ("delta", "gd", "delta_x_gd"):
        if np.ptp(full[name]) == 0.0:
            excluded.append(name)
        else:
            names.append(name)
    X = np.column_stack([full[n] for n in names])
    beta, H, iters = _newton_logistic(X, y)
    cov, n_groups = _cluster_covariance(X, y, beta, H, clusters)
    result = FitResult(
        coef_names=names,
        coefficients={n: float(b) for n, b in zip(names, beta)},
        covariance=cov,
        per_item_loglik=_loglik_logistic(X, y, beta) / len(rows),
        n_obs=len(rows),
        converged=True,
        n_iter=iters,
        notes={
            "excluded": excluded,
            "n_clusters": n_groups,
            "covariance_type": "cluster-robust CR1 (G/(G-1))",
            "classical_covariance": np.linalg.inv(H).tolist(),
        },
    )
    _wald(names, beta, cov, result)
    # combined goal-directed slope delta + delta_x_gd, with its own CI
    if "delta" in names and "delta_x_gd" in names:
        i, j = names.index("delta"), names.index("delta_x_gd")
        combo = beta[i] + beta[j]
        var = cov[i, i] + cov[j, j] + 2.0 * cov[i, j]
        se = math.sqrt(max(var, 0.0))
        result.coefficients["delta_gd_total"] = float(combo)
        result.se["delta_gd_total"] = se
        result.ci95["delta_gd_total"] = (combo - _Z975 * se, combo + _Z975 * se)
        result.p_values["delta_gd_total"] = (
            2.0 * normal_sf(abs(combo) / se) if se > 0 else 0.0)
    return result


# -- conditional logit -------------------------------------------------------------

def _condlogit_parts(sets: Sequence[ChoiceSet], alpha: float):
    """Log-likelihood, gradient and hessian of the scalar sensitivity.

    For each set the human-choice log probability is -alpha*C_h - logsumexp
    over -alpha*C; its alpha-derivative is E_P[C] - C_h and its second
    derivative is -Var_P(C), so the problem is globally concave.
    """
    ll = 0.0
    grad = 0.0
    hess = 0.0
    for s in sets:
        c = s.costs
        z = -alpha * c
        zmax = z.max()
        w = np.exp(z - zmax)
        wsum = w.sum()
        p = w / wsum
        h = s.human_index
        ll += z[h] - (zmax + math.log(wsum))
        mean_c = float(p @ c)
        grad += mean_c - c[h]
        hess -= float(p @ (c - mean_c) ** 2)
    return ll, grad, hess


def fit_conditional_logit(sets: Sequence[ChoiceSet]) -> FitResult:
    """MLE of the cost-sensitivity alpha over standardized choice sets.

    Also reports: per-item log-likelihood, the model probability of the
    lowest-cost candidate averaged over sets (rank-1 confidence), and the
    probability of the cheapest candidate beating the second-cheapest,
    which is set-size free.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("no choice sets")
    if all(np.ptp(s.costs) == 0.0 for s in sets):
        raise NonIdentifiable("every set has constant costs")
    alpha = 0.0
    ll, g, h = _condlogit_parts(sets, alpha)
    iters = 0
    for it in range(1, _MAX_ITER + 1):
        iters = it
        # stop on a small gradient, or when the predicted Newton improvement
        # g^2 / 2|h| falls below float resolution of the log-likelihood
        if abs(g) <= _GRAD_TOL or (h < 0 and g * g / (-2.0 * h)
                                   <= 1e-14 * (1.0 + abs(ll))):
            break
        step = -g / h  # h < 0 away from degeneracy
        scale = 1.0
        for _ in range(40):
            cand = alpha + scale * step
            cand_ll, cand_g, cand_h = _condlogit_parts(sets, cand)
            if cand_ll >= ll - 1e-12:
                alpha, ll, g, h = cand, cand_ll, cand_g, cand_h
                break
            scale *= 0.5
        else:
            raise NonConvergence("conditional logit line search failed")
    else:
        raise NonConvergence(f"conditional logit: no convergence in {_MAX_ITER} iterations")
    var = -1.0 / h if h < 0 else math.inf
    se = math.sqrt(var)

    p_rank1 = 0.0
    p_best_vs_2nd = 0.0
    for s in sets:
        c = s.costs
        p = softmax_choice(c, alpha)
        p_rank1 += float(p[int(np.argmin(c))])
        two = np.sort(c)[:2]
        p_best_vs_2nd += 1.0 / (1.0 + math.exp(-alpha * (two[1] - two[0])))
    n = len(sets)

    result = FitResult(
        coef_names=["alpha"],
        coefficients={"alpha": float(alpha)},
        covariance=np.array([[var]]),
        per_item_loglik=ll / n,
        n_obs=n,
        converged=True,
        n_iter=iters,
        metrics={
            "p_rank1": p_rank1 / n,
            "p_best_vs_2nd": p_best_vs_2nd / n,
            "uniform_loglik": float(np.mean([-math.log(len(s.candidates))
                                             for s in sets])),
        },
    )
    result.se["alpha"] = se
    result.ci95["alpha"] = (alpha - _Z975 * se, alpha + _Z975 * se)
    result.p_values["alpha"] = 2.0 * normal_sf(abs(alpha) / se) if se > 0 else 0.0
    return result


# -- rank summary -------------------------------------------------------------------

def rank1_summary(
    sets_by_group: Mapping[tuple[str, str], Sequence[ChoiceSet]],
    tie_policy: str = "strict",
) -> list[dict]:
    """Table-shaped rank-1 analysis per (cost, condition) group.

    Chance levels are trial-specific and reported under both conventions:
    "candidates" counts the human plus alternatives (1/n), "alternatives"
    counts alternatives only (1/(n-1)). The p-value is the upper tail of
    the exact Poisson-binomial distribution of the rank-1 count at the
    corresponding chance levels.
    """
    out = []
    for (cost, condition), sets in sorted(sets_by_group.items()):
        sets = list(sets)
        if not sets:
            continue
        ranks = [rank_of_human(s, tie_policy=tie_policy) for s in sets]
        k_obs = sum(1 for r in ranks if r == 1)
        n_sets = len(sets)
        p_cand = [1.0 / len(s.candidates) for s in sets]
        p_alt = [1.0 / (len(s.candidates) - 1) for s in sets]
        share = k_obs / n_sets
        base_cand = float(np.mean(p_cand))
        base_alt = float(np.mean(p_alt))
        out.append({
            "cost": cost,
            "condition": condition,
            "n_sets": n_sets,
            "rank1_count": k_obs,
            "rank1_share": share,
            "baseline_candidates": base_cand,
            "multiplier_candidates": share / base_cand if base_cand else math.nan,
            "p_value_candidates": poisson_binomial_pvalue(p_cand, k_obs),
            "baseline_alternatives": base_alt,
            "multiplier_alternatives": share / base_alt if base_alt else math.nan,
            "p_value_alternatives": poisson_binomial_pvalue(p_alt, k_obs),
            "tie_policy": tie_policy,
        })
    return out
