"""Distribution alignment between human and generated continuations.

Human utterances are discretized into tertile bins of length and global
uniformity; generated candidates are subsampled without replacement so
stratum counts track the human proportions. The feasibility rule is exact
proportionality: a total T is feasible when T * q_s <= available_s for
every human-occupied stratum, so the largest feasible total is
min_s floor(available_s / q_s). All of that arithmetic runs on integer
human counts (q_s = h_s / H), never on floats, so edge cases are exact.
Within the chosen total, per-stratum targets are floor(T * q_s) with
largest-remainder top-up, which provably never exceeds availability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .costs import CostBundle
from .errors import InsufficientData, ZeroVariance
from .stats import t_test

__all__ = [
    "Stratum",
    "StratificationResult",
    "tertile_edges",
    "assign_bin",
    "allocate_counts",
    "stratified_sample",
    "distribution_tests",
    "verify_alignment",
]

ALIGNED_COSTS = ("length", "uid_global")
ALL_COSTS = ("surprisal", "uid_local", "uid_global", "length")
ALPHA_LEVEL = 0.001


@dataclass(frozen=True)
class Stratum:
    length_bin: int
    uid_global_bin: int

    def key(self) -> str:
        return f"{self.length_bin},{self.uid_global_bin}"


@dataclass
class StratificationResult:
    selected_candidate_ids: list[str]
    edges: dict[str, tuple[float, float]]
    human_counts: dict[str, int]
    human_proportions: dict[str, float]
    targets: dict[str, int]
    achieved: dict[str, int]
    available: dict[str, int]
    total: int
    seed: int
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "selected_candidate_ids": sorted(self.selected_candidate_ids),
            "edges": {k: list(v) for k, v in self.edges.items()},
            "human_counts": self.human_counts,
            "human_proportions": self.human_proportions,
            "targets": self.targets,
            "achieved": self.achieved,
            "available": self.available,
            "total": self.total,
            "seed": self.seed,
            "warnings": self.warnings,
        }


def tertile_edges(values: Sequence[float]) -> tuple[float, float]:
    """Tertile cut points with midpoint interpolation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InsufficientData("no values to bin")
    lo, hi = np.quantile(v, [1.0 / 3.0, 2.0 / 3.0], method="midpoint")
    return float(lo), float(hi)


def assign_bin(value: float, edges: tuple[float, float]) -> int:
    """Bin index 0/1/2; ties at an edge go to the lower bin."""
    if value <= edges[0]:
        return 0
    if value <= edges[1]:
        return 1
    return 2


def allocate_counts(human_counts: Mapping[str, int],
                    available: Mapping[str, int]) -> tuple[int, dict[str, int], list[str]]:
    """Largest exactly-proportional allocation that fits availability.

    Only strata with human mass participate. A human-occupied stratum
    with zero available candidates is dropped from the allocation (its
    target is 0) and reported as a warning; proportions renormalize over
    the remaining strata. Ties in the remainder top-up break by larger
    remainder, then larger human count, then stratum key.
    """
    warnings = []
    occupied = {s: h for s, h in human_counts.items() if h > 0}
    usable = {}
    for s, h in occupied.items():
        if available.get(s, 0) <= 0:
            warnings.append(f"empty_stratum:{s}")
        else:
            usable[s] = h
    if not usable:
        return 0, {s: 0 for s in occupied}, warnings
    h_total = sum(usable.values())
    # T <= available_s * H / h_s for all usable strata, in exact integers
    t_max = min(available[s] * h_total // h for s, h in usable.items())
    targets = {s: 0 for s in occupied}
    if t_max <= 0:
        return 0, targets, warnings
    remainders = []
    assigned = 0
    for s, h in usable.items():
        q, r = divmod(t_max * h, h_total)
        targets[s] = q
        assigned += q
        remainders.append((r, h, s))
    deficit = t_max - assigned
    remainders.sort(key=lambda t: (-t[0], -t[1], t[2]))
    for r, _h, s in remainders[:deficit]:
        targets[s] += 1
    return t_max, targets, warnings


def stratified_sample(
    human: Sequence[CostBundle],
    generated: Sequence[tuple[str, CostBundle]],
    seed: int,
) -> StratificationResult:
    """Subsample generated candidates to match the human (length, global
    uniformity) distribution.

    Sampling is uniform without replacement within strata, driven by the
    given seed over candidate ids sorted lexicographically, so identical
    inputs and seed reproduce the selection exactly.
    """
    if not human:
        raise InsufficientData("no human bundles")
    len_edges = tertile_edges([b.length_words for b in human])
    uid_edges = tertile_edges([b.uid_global for b in human])

    def stratum_of(bundle: CostBundle) -> Stratum:
        return Stratum(
            length_bin=assign_bin(bundle.length_words, len_edges),
            uid_global_bin=assign_bin(bundle.uid_global, uid_edges),
        )

    human_counts: dict[str, int] = {}
    for b in human:
        k = stratum_of(b).key()
        human_counts[k] = human_counts.get(k, 0) + 1

    pools: dict[str, list[str]] = {}
    for cid, b in generated:
        k = stratum_of(b).key()
        pools.setdefault(k, []).append(cid)
    available = {k: len(v) for k, v in pools.items()}

    total, targets, warnings = allocate_counts(
        human_counts, {k: available.get(k, 0) for k in human_counts})

    rng = np.random.default_rng(seed)
    selected: list[str] = []
    achieved: dict[str, int] = {}
    for k in sorted(targets):
        want = targets[k]
        pool = sorted(pools.get(k, []))
        take = min(want, len(pool))
        if take > 0:
            picks = rng.choice(len(pool), size=take, replace=False)
            selected.extend(pool[i] for i in sorted(picks.tolist()))
        achieved[k] = take

    h_total = sum(human_counts.values())
    return StratificationResult(
        selected_candidate_ids=selected,
        edges={"length": len_edges, "uid_global": uid_edges},
        human_counts=dict(sorted(human_counts.items())),
        human_proportions={k: v / h_total for k, v in sorted(human_counts.items())},
        targets=dict(sorted(targets.items())),
        achieved=dict(sorted(achieved.items())),
        available={k: available.get(k, 0) for k in sorted(human_counts)},
        total=total,
        seed=seed,
        warnings=warnings,
    )


def _cost_values(bundles: Sequence[CostBundle], cost: str) -> list[float]:
    if cost == "surprisal":
        return [b.surprisal for b in bundles]
    if cost == "uid_local":
        return [b.uid_local for b in bundles if b.uid_local is not None]
    if cost == "uid_global":
        return [b.uid_global for b in bundles]
    if cost == "length":
        return [float(b.length_words) for b in bundles]
    raise KeyError(cost)


def distribution_tests(
    human: Sequence[CostBundle],
    generated: Sequence[CostBundle],
    costs: Sequence[str] = ALL_COSTS,
) -> dict[str, dict[str, float]]:
    """Two-sided Welch t-tests of human vs generated, one per cost.

    When both groups are constant the statistic degenerates: equal means
    give (t=0, p=1), unequal means give (t=+-inf, p=0).
    """
    out = {}
    for cost in costs:
        hv = _cost_values(human, cost)
        gv = _cost_values(generated, cost)
        if len(hv) < 2 or len(gv) < 2:
            raise InsufficientData(f"cost {cost!r}: need >= 2 values per group")
        try:
            res = t_test(hv, gv, sided="two")
            t_stat, p, df = res.t, res.p, res.df
        except ZeroVariance:
            diff = float(np.mean(hv) - np.mean(gv))
            t_stat = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
            p = 1.0 if diff == 0.0 else 0.0
            df = float(len(hv) + len(gv) - 2)
        out[cost] = {"t": t_stat, "p": p, "df": df,
                     "n_human": len(hv), "n_generated": len(gv)}
    return out


def verify_alignment(
    result: StratificationResult,
    human: Sequence[CostBundle],
    generated: Sequence[tuple[str, CostBundle]],
    costs: Sequence[str] = ALIGNED_COSTS,
) -> dict[str, dict[str, float]]:
    """Re-test the aligned dimensions on the selected subsample; a cost is
    flagged when it stays significant at the 0.001 level."""
    chosen = set(result.selected_candidate_ids)
    subsample = [b for cid, b in generated if cid in chosen]
    tests = distribution_tests(human, subsample, costs=costs)
    for cost, row in tests.items():
        row["flagged"] = bool(row["p"] < ALPHA_LEVEL)
    return tests
