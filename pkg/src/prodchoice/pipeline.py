"""Pipeline stages and orchestration.

Stage order: preprocess -> generate -> judge -> score -> cost -> stratify
-> analyze (rank, pairwise, condlogit, diffs) -> report. ``run_pipeline``
executes them in dependency order, skipping a stage when its recorded
input hashes, config signature and output hashes all match the previous
manifest. The manifest is a pure function of content (no timestamps), so
identical runs produce byte-identical manifests.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__, alternatives as alts, corpus, prompts
from .align import distribution_tests, stratified_sample, verify_alignment
from .alternatives import AlternativeRecord, AlternativeSetSummary
from .backends import make_chat_backend, make_scorer_backend
from .choice import (
    Candidate,
    ChoiceSet,
    build_pairwise,
    fit_conditional_logit,
    fit_pairwise_logit,
    rank1_summary,
    rank_of_human,
    standardize_sets,
)
from .config import PipelineConfig, require_seed
from .corpus import ChoiceItem
from .costs import CostBundle, SurprisalProfile, cost_bundle, word_surprisals
from .errors import (
    InsufficientParaphrases,
    MissingInput,
    PrefixViolation,
    ProdChoiceError,
    RefusalDetected,
)
from .gateway import Gateway, ScoreRequest
from .stats import paired_diff_analysis

__all__ = [
    "make_gateway",
    "stage_preprocess",
    "stage_generate",
    "stage_judge",
    "stage_score",
    "stage_cost",
    "stage_stratify",
    "stage_analyze_rank",
    "stage_analyze_pairwise",
    "stage_analyze_condlogit",
    "stage_analyze_diffs",
    "stage_report",
    "run_pipeline",
    "COSTS",
    "CONDITIONS",
]

COSTS = ("surprisal", "uid_local", "uid_global", "length")
CONDITIONS = ("goal_directed", "goal_agnostic")


def _fmt(x: float) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, ensure_ascii=False,
                               indent=1) + "\n", encoding="utf-8")


def _write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames),
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def make_gateway(config: PipelineConfig) -> Gateway:
    scorer = make_scorer_backend(config.gateway.scorer_endpoint,
                                 config.gateway.scorer_context_window)
    chat = make_chat_backend(config.gateway.generator_endpoint)
    return Gateway(config.gateway, scorer_backend=scorer, chat_backend=chat)


# -- stages ---------------------------------------------------------------------

def stage_preprocess(config: PipelineConfig, gateway: Gateway) -> None:
    """Transcripts + choice-point annotations -> ChoiceItem JSONL."""
    for key in ("transcripts", "annotations"):
        if key not in config.paths or not config.paths[key].exists():
            raise MissingInput(f"preprocess needs paths.{key}")
    dialogues = corpus.read_transcripts(config.path("transcripts"))
    annotations = corpus.read_annotations(config.path("annotations"))
    items, exclusions = corpus.extract_choice_items(
        dialogues, annotations, config.token_budget, gateway.token_counter())
    out = config.path("items")
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.write_items(items, out)
    _write_json(out.with_suffix(".exclusions.json"),
                dict(sorted(exclusions.items())))


def stage_generate(config: PipelineConfig, gateway: Gateway) -> None:
    """Goal-agnostic (3 conditions) and goal-directed records per item.

    Items whose generation fails (refusal, too few unique paraphrases,
    restated context) are dropped with a reason; their records are not
    emitted, keeping the per-context design balanced.
    """
    items = corpus.read_items(config.path("items"))
    records: list[AlternativeRecord] = []
    summaries: list[AlternativeSetSummary] = []
    for item in items:
        try:
            item_records = [alts.human_record(item)]
            for condition in alts.GOAL_AGNOSTIC_METHODS:
                item_records.extend(alts.gen_goal_agnostic(
                    item, condition, gateway, n=config.n_per_condition))
            item_records.extend(alts.gen_goal_directed(
                item, gateway, n=config.n_paraphrases))
        except (RefusalDetected, InsufficientParaphrases, PrefixViolation) as exc:
            summaries.append(AlternativeSetSummary(
                item_id=item.item_id, n_goal_directed=0, n_goal_agnostic=0,
                dropped=True, reason=f"{type(exc).__name__}: {exc}"))
            continue
        records.extend(item_records)
        summaries.append(AlternativeSetSummary(
            item_id=item.item_id,
            n_goal_directed=sum(1 for r in item_records if r.in_goal_directed),
            n_goal_agnostic=sum(1 for r in item_records if r.in_goal_agnostic),
            dropped=False))
    out = config.path("alternatives")
    out.parent.mkdir(parents=True, exist_ok=True)
    alts.write_records(records, out)
    _write_csv(config.path("summaries"),
               ["item_id", "n_goal_directed", "n_goal_agnostic", "dropped", "reason"],
               [{"item_id": s.item_id, "n_goal_directed": s.n_goal_directed,
                 "n_goal_agnostic": s.n_goal_agnostic,
                 "dropped": s.dropped, "reason": s.reason} for s in summaries])


def stage_judge(config: PipelineConfig, gateway: Gateway) -> None:
    """Reclassify every generated record against its human sentence."""
    items = {it.item_id: it for it in corpus.read_items(config.path("items"))}
    records = alts.read_records(config.path("alternatives"))
    by_item: dict[str, list[AlternativeRecord]] = {}
    for rec in records:
        by_item.setdefault(rec.item_id, []).append(rec)
    judged: list[AlternativeRecord] = []
    inconsistencies: list[str] = []
    for item_id in sorted(by_item):
        group = by_item[item_id]
        human = next(r for r in group if r.method == "human")
        item_judged = alts.reclassify(group, human, items[item_id], gateway)
        inconsistencies.extend(alts.judge_inconsistencies(item_judged, human))
        judged.extend(item_judged)
    out = config.path("judged")
    out.parent.mkdir(parents=True, exist_ok=True)
    alts.write_records(judged, out)
    _write_json(out.with_suffix(".goal_match.json"), {
        "proportions": alts.goal_match_proportions(judged),
        "judge_inconsistencies": sorted(inconsistencies),
    })


def _conditioning(history_full: str, context: str | None, separator: str) -> str:
    parts = [p for p in (history_full, context) if p]
    return separator.join(parts)


def stage_score(config: PipelineConfig, gateway: Gateway) -> None:
    """Per-word surprisal profiles for contexts and all continuations.

    Context words are scored given the dialogue history; continuation
    words are scored given history + separator + context. One JSONL line
    per item carries the context profile and every candidate profile.
    """
    items = {it.item_id: it for it in corpus.read_items(config.path("items"))}
    records = alts.read_records(config.path("judged"))
    by_item: dict[str, list[AlternativeRecord]] = {}
    for rec in records:
        by_item.setdefault(rec.item_id, []).append(rec)
    sep = config.gateway.separator
    model = config.gateway.scorer_model_id
    out = config.path("scored")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for item_id in sorted(by_item):
            item = items[item_id]
            ctx_resp = gateway.score(ScoreRequest(
                conditioning_text=item.history_full,
                target_text=item.context, model_id=model))
            ctx_profile = word_surprisals(ctx_resp, item.context.split(),
                                          source="context")
            cont_conditioning = _conditioning(item.history_full, item.context, sep)
            group = sorted(by_item[item_id], key=lambda r: r.candidate_id)
            reqs = [ScoreRequest(conditioning_text=cont_conditioning,
                                 target_text=r.continuation, model_id=model)
                    for r in group]
            responses = gateway.score_many(reqs)
            candidates = []
            for rec, resp in zip(group, responses):
                profile = word_surprisals(resp, rec.continuation.split(),
                                          source="continuation")
                candidates.append({
                    "candidate_id": rec.candidate_id,
                    "words": [[w, s] for w, s in profile.words],
                    "truncated": resp.truncated,
                })
            fh.write(_dump({
                "item_id": item_id,
                "context_words": [[w, s] for w, s in ctx_profile.words],
                "context_truncated": ctx_resp.truncated,
                "provenance": {"model_id": model, "separator": sep,
                               "prompt_version": prompts.PROMPT_VERSION},
                "candidates": candidates,
            }) + "\n")


def _set_label(rec: AlternativeRecord) -> str:
    if rec.method == "human":
        return "human"
    if rec.in_goal_directed and rec.in_goal_agnostic:
        return "both"
    if rec.in_goal_directed:
        return "goal_directed"
    if rec.in_goal_agnostic:
        return "goal_agnostic"
    return "none"


def stage_cost(config: PipelineConfig, gateway: Gateway | None = None) -> None:
    """Assemble the four costs for every scored candidate."""
    records = {r.candidate_id: r for r in alts.read_records(config.path("judged"))}
    rows: list[dict] = []
    with config.path("scored").open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            scored = json.loads(line)
            ctx_profile = SurprisalProfile(
                words=tuple((w, s) for w, s in scored["context_words"]),
                source="context")
            for cand in scored["candidates"]:
                rec = records[cand["candidate_id"]]
                cont_profile = SurprisalProfile(
                    words=tuple((w, s) for w, s in cand["words"]),
                    source="continuation")
                bundle = cost_bundle(cont_profile,
                                     ctx_profile.concat(cont_profile),
                                     continuation_text=rec.continuation)
                rows.append({
                    "item_id": scored["item_id"],
                    "candidate_id": cand["candidate_id"],
                    "set": _set_label(rec),
                    "method": rec.method,
                    "is_human": rec.method == "human",
                    "in_goal_directed": rec.in_goal_directed,
                    "in_goal_agnostic": rec.in_goal_agnostic,
                    "surprisal": bundle.surprisal,
                    "uid_local": bundle.uid_local,
                    "uid_global": bundle.uid_global,
                    "length": bundle.length_words,
                    "uid_local_defined": bundle.uid_local_defined,
                    "truncated": cand["truncated"],
                })
    rows.sort(key=lambda r: (r["item_id"], r["candidate_id"]))
    out = config.path("costs")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_dump(row) + "\n")
    _write_csv(config.path("costs_csv"),
               ["item_id", "candidate_id", "set", "method", "surprisal",
                "uid_local", "uid_global", "length", "uid_local_defined"],
               [{k: ("" if row[k] is None else row[k])
                 for k in ("item_id", "candidate_id", "set", "method",
                           "surprisal", "uid_local", "uid_global", "length",
                           "uid_local_defined")} for row in rows])


def _read_cost_rows(config: PipelineConfig) -> list[dict]:
    path = config.path("costs")
    if not path.exists():
        raise MissingInput(f"cost rows not found at {path}")
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _bundle_of(row: dict) -> CostBundle:
    return CostBundle(
        surprisal=row["surprisal"],
        uid_local=row["uid_local"],
        uid_global=row["uid_global"],
        length_words=row["length"],
    )


def stage_stratify(config: PipelineConfig, gateway: Gateway | None = None) -> None:
    """Test distribution equality, then align via stratified sampling."""
    rows = _read_cost_rows(config)
    human = [_bundle_of(r) for r in rows if r["is_human"]]
    generated = [(r["candidate_id"], _bundle_of(r))
                 for r in rows if not r["is_human"]]
    if not human or not generated:
        raise MissingInput("stratify needs both human and generated cost rows")
    pre = distribution_tests(human, [b for _, b in generated])
    result = stratified_sample(human, generated, seed=require_seed(config, "stratify"))
    post = verify_alignment(result, human, generated)
    payload = result.as_dict()
    payload["pre_tests"] = pre
    payload["post_tests"] = post
    _write_json(config.path("stratification"), payload)


def _selected_ids(config: PipelineConfig) -> set[str] | None:
    if not config.use_stratified:
        return None
    path = config.path("stratification")
    if not path.exists():
        raise MissingInput("analysis with use_stratified=true needs stratification.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    return set(data["selected_candidate_ids"])


def build_choice_sets(rows: Sequence[dict], cost: str, condition: str,
                      selected: set[str] | None) -> list[ChoiceSet]:
    """Choice sets for one (cost, condition); candidates lacking the cost
    (undefined local uniformity) are pre-filtered, and sets keep >= 2
    candidates including exactly the one human."""
    member_key = "in_goal_directed" if condition == "goal_directed" \
        else "in_goal_agnostic"
    by_item: dict[str, list[dict]] = {}
    for row in rows:
        by_item.setdefault(row["item_id"], []).append(row)
    sets: list[ChoiceSet] = []
    for item_id in sorted(by_item):
        group = by_item[item_id]
        humans = [r for r in group if r["is_human"]]
        if len(humans) != 1:
            continue
        members = [r for r in group
                   if not r["is_human"] and r[member_key]
                   and (selected is None or r["candidate_id"] in selected)]
        pool = humans + members
        if cost == "uid_local":
            pool = [r for r in pool if r["uid_local_defined"]]
        if len(pool) < 2 or not any(r["is_human"] for r in pool):
            continue
        candidates = tuple(
            Candidate(candidate_id=r["candidate_id"],
                      cost=float(r[cost]),
                      is_human=bool(r["is_human"]))
            for r in sorted(pool, key=lambda r: r["candidate_id"]))
        sets.append(ChoiceSet(item_id=item_id, candidates=candidates,
                              condition=condition))
    return sets


def _analysis_dir(config: PipelineConfig) -> Path:
    d = config.path("analysis_dir")
    d.mkdir(parents=True, exist_ok=True)
    return d


def stage_analyze_rank(config: PipelineConfig, gateway: Gateway | None = None) -> None:
    """Rank-1 shares vs exact Poisson-binomial chance, plus rank histograms."""
    rows = _read_cost_rows(config)
    selected = _selected_ids(config)
    grouped = {}
    hist_rows = []
    for cost in COSTS:
        for condition in CONDITIONS:
            sets = build_choice_sets(rows, cost, condition, selected)
            if not sets:
                continue
            grouped[(cost, condition)] = sets
            ranks = Counter(int(rank_of_human(s, config.tie_policy)) for s in sets)
            chance = float(np.mean([1.0 / len(s.candidates) for s in sets]))
            for rank in sorted(ranks):
                hist_rows.append({
                    "cost": cost, "condition": condition, "rank": rank,
                    "count": ranks[rank], "share": ranks[rank] / len(sets),
                    "chance_rank1": chance,
                })
    summary = rank1_summary(grouped, tie_policy=config.tie_policy)
    out = _analysis_dir(config)
    _write_csv(out / "rank_summary.csv",
               ["cost", "condition", "n_sets", "rank1_count", "rank1_share",
                "baseline_candidates", "multiplier_candidates",
                "p_value_candidates", "baseline_alternatives",
                "multiplier_alternatives", "p_value_alternatives",
                "tie_policy"], summary)
    _write_csv(out / "rank_histogram.csv",
               ["cost", "condition", "rank", "count", "share", "chance_rank1"],
               hist_rows)


def stage_analyze_pairwise(config: PipelineConfig,
                           gateway: Gateway | None = None) -> None:
    """One joint pairwise logistic fit per cost, pooling both conditions."""
    rows = _read_cost_rows(config)
    selected = _selected_ids(config)
    fits = {}
    for cost in COSTS:
        sets = []
        for condition in CONDITIONS:
            sets.extend(build_choice_sets(rows, cost, condition, selected))
        if not sets:
            continue
        pairwise_rows = build_pairwise(sets)
        fit = fit_pairwise_logit(pairwise_rows)
        fits[cost] = fit.as_dict()
    _write_json(_analysis_dir(config) / "pairwise_fit.json", fits)


def stage_analyze_condlogit(config: PipelineConfig,
                            gateway: Gateway | None = None) -> None:
    """Scalar-sensitivity conditional logit per (cost, condition)."""
    rows = _read_cost_rows(config)
    selected = _selected_ids(config)
    fits: dict[str, dict] = {}
    for cost in COSTS:
        for condition in CONDITIONS:
            sets = build_choice_sets(rows, cost, condition, selected)
            if not sets:
                continue
            std_sets, mu, sd = standardize_sets(sets)
            fit = fit_conditional_logit(std_sets)
            fit.notes["standardization"] = {"mean": mu, "sd": sd,
                                            "population": condition}
            fits.setdefault(cost, {})[condition] = fit.as_dict()
    _write_json(_analysis_dir(config) / "condlogit_fit.json", fits)


def stage_analyze_diffs(config: PipelineConfig,
                        gateway: Gateway | None = None) -> None:
    """One sampled alternative per context per condition; one-sided tests."""
    rows = _read_cost_rows(config)
    selected = _selected_ids(config)
    rng = np.random.default_rng(require_seed(config, "paired_diff"))
    out_rows = []
    for condition in CONDITIONS:
        member_key = "in_goal_directed" if condition == "goal_directed" \
            else "in_goal_agnostic"
        by_item: dict[str, list[dict]] = {}
        human_by_item: dict[str, dict] = {}
        for row in rows:
            if row["is_human"]:
                human_by_item[row["item_id"]] = row
            elif row[member_key] and (selected is None or
                                      row["candidate_id"] in selected):
                by_item.setdefault(row["item_id"], []).append(row)
        sampled: dict[str, dict] = {}
        for item_id in sorted(by_item):
            pool = sorted(by_item[item_id], key=lambda r: r["candidate_id"])
            sampled[item_id] = pool[int(rng.integers(len(pool)))]
        human_costs: dict[str, list[float]] = {c: [] for c in COSTS}
        alt_costs: dict[str, list[float]] = {c: [] for c in COSTS}
        for item_id, alt in sampled.items():
            human = human_by_item.get(item_id)
            if human is None:
                continue
            for cost in COSTS:
                if cost == "uid_local" and not (human["uid_local_defined"]
                                                and alt["uid_local_defined"]):
                    continue
                human_costs[cost].append(float(human[cost]))
                alt_costs[cost].append(float(alt[cost]))
        table = paired_diff_analysis(human_costs, alt_costs)
        for cost in COSTS:
            row = table[cost]
            out_rows.append({"cost": cost, "condition": condition, **row})
    _write_csv(_analysis_dir(config) / "diffs.csv",
               ["cost", "condition", "n", "mean_diff", "sd_diff", "t", "p", "df"],
               out_rows)


def _stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def stage_report(config: PipelineConfig, gateway: Gateway | None = None) -> None:
    """Render the four result tables and the two plot-data bundles."""
    analysis = config.path("analysis_dir")
    report = config.path("report_dir")
    report.mkdir(parents=True, exist_ok=True)
    needed = [analysis / "rank_summary.csv", analysis / "pairwise_fit.json",
              analysis / "condlogit_fit.json", analysis / "diffs.csv"]
    for p in needed:
        if not p.exists():
            raise MissingInput(f"report needs {p}")

    convention = config.chance_level  # candidates | alternatives

    # rank table, one row per cost, both chance conventions side by side
    with (analysis / "rank_summary.csv").open("r", encoding="utf-8") as fh:
        rank_rows = list(csv.DictReader(fh))
    by_cost: dict[str, dict[str, dict]] = {}
    for row in rank_rows:
        by_cost.setdefault(row["cost"], {})[row["condition"]] = row
    table = []
    baselines = {"cost": "uniform_baseline", "convention": convention}
    for cost in COSTS:
        conds = by_cost.get(cost, {})
        out = {"cost": cost, "convention": convention}
        for cond, prefix in (("goal_directed", "gd"), ("goal_agnostic", "ga")):
            row = conds.get(cond)
            if row is None:
                continue
            share = float(row["rank1_share"])
            for conv in ("candidates", "alternatives"):
                base = float(row[f"baseline_{conv}"])
                suffix = "" if conv == convention else "_altconv"
                out[f"{prefix}_share_pct{suffix}"] = 100.0 * share
                out[f"{prefix}_multiplier{suffix}"] = share / base
                out[f"{prefix}_p{suffix}"] = float(row[f"p_value_{conv}"])
                out[f"{prefix}_stars{suffix}"] = _stars(float(row[f"p_value_{conv}"]))
                baselines[f"{prefix}_baseline_pct{suffix}"] = 100.0 * base
        table.append(out)
    table.append(baselines)
    fields = ["cost", "convention"]
    for prefix in ("gd", "ga"):
        for suffix in ("", "_altconv"):
            fields += [f"{prefix}_share_pct{suffix}", f"{prefix}_multiplier{suffix}",
                       f"{prefix}_p{suffix}", f"{prefix}_stars{suffix}",
                       f"{prefix}_baseline_pct{suffix}"]
    _write_csv(report / "table_rank.csv", fields,
               [{k: r.get(k, "") for k in fields} for r in table])

    # conditional logit table
    condlogit = json.loads((analysis / "condlogit_fit.json").read_text("utf-8"))
    cl_rows = []
    for cost in COSTS:
        if cost not in condlogit:
            continue
        row = {"cost": cost}
        for cond, prefix in (("goal_directed", "gd"), ("goal_agnostic", "ga")):
            fit = condlogit[cost].get(cond)
            if fit is None:
                continue
            row[f"{prefix}_alpha"] = fit["coefficients"]["alpha"]
            row[f"{prefix}_loglik"] = fit["per_item_loglik"]
            row[f"{prefix}_p_rank1"] = fit["metrics"]["p_rank1"]
            row[f"{prefix}_p_best_vs_2nd"] = fit["metrics"]["p_best_vs_2nd"]
            row[f"{prefix}_uniform_loglik"] = fit["metrics"]["uniform_loglik"]
            row[f"{prefix}_stars"] = _stars(fit["p_values"]["alpha"])
        cl_rows.append(row)
    _write_csv(report / "table_condlogit.csv",
               ["cost"] + [f"{p}_{c}" for p in ("gd", "ga")
                           for c in ("alpha", "loglik", "p_rank1",
                                     "p_best_vs_2nd", "uniform_loglik", "stars")],
               [{k: r.get(k, "") for k in
                 ["cost"] + [f"{p}_{c}" for p in ("gd", "ga")
                             for c in ("alpha", "loglik", "p_rank1",
                                       "p_best_vs_2nd", "uniform_loglik",
                                       "stars")]} for r in cl_rows])

    # pairwise coefficient table
    pairwise = json.loads((analysis / "pairwise_fit.json").read_text("utf-8"))
    pw_rows = []
    for cost in COSTS:
        if cost not in pairwise:
            continue
        fit = pairwise[cost]
        coef = fit["coefficients"]
        ci = fit["ci95"]
        pv = fit["p_values"]
        row = {"cost": cost, "per_item_loglik": fit["per_item_loglik"]}
        for name, label in (("delta", "ga"), ("delta_gd_total", "gd"),
                            ("delta_x_gd", "interaction")):
            if name not in coef:
                continue
            row[f"{label}_beta"] = coef[name]
            row[f"{label}_ci_low"] = ci[name][0]
            row[f"{label}_ci_high"] = ci[name][1]
            row[f"{label}_stars"] = _stars(pv[name])
        pw_rows.append(row)
    pw_fields = ["cost"] + [f"{lbl}_{c}" for lbl in ("ga", "gd", "interaction")
                            for c in ("beta", "ci_low", "ci_high", "stars")] \
        + ["per_item_loglik"]
    _write_csv(report / "table_pairwise.csv", pw_fields,
               [{k: r.get(k, "") for k in pw_fields} for r in pw_rows])

    # paired-diff table
    with (analysis / "diffs.csv").open("r", encoding="utf-8") as fh:
        diff_rows = list(csv.DictReader(fh))
    diffs_by_cost: dict[str, dict] = {}
    for row in diff_rows:
        entry = diffs_by_cost.setdefault(row["cost"], {"cost": row["cost"]})
        prefix = "gd" if row["condition"] == "goal_directed" else "ga"
        entry[f"{prefix}_t"] = float(row["t"])
        entry[f"{prefix}_p"] = float(row["p"])
        entry[f"{prefix}_stars"] = _stars(float(row["p"]))
    diff_fields = ["cost", "gd_t", "gd_p", "gd_stars", "ga_t", "ga_p", "ga_stars"]
    _write_csv(report / "table_diffs.csv", diff_fields,
               [{k: diffs_by_cost[c].get(k, "") for k in diff_fields}
                for c in COSTS if c in diffs_by_cost])

    # plot bundle: rank histogram (copy-shaped) and cost distributions
    with (analysis / "rank_histogram.csv").open("r", encoding="utf-8") as fh:
        hist = list(csv.DictReader(fh))
    _write_csv(report / "plot_rank_histogram.csv",
               ["cost", "condition", "rank", "count", "share", "chance_rank1"],
               hist)
    cost_rows = _read_cost_rows(config)
    dist_rows = []
    for row in cost_rows:
        for cost in COSTS:
            if cost == "uid_local" and not row["uid_local_defined"]:
                continue
            dist_rows.append({"set_type": row["set"], "cost": cost,
                              "value": float(row[cost]),
                              "item_id": row["item_id"],
                              "candidate_id": row["candidate_id"]})
    _write_csv(report / "plot_cost_distributions.csv",
               ["set_type", "cost", "value", "item_id", "candidate_id"],
               dist_rows)


# -- orchestration ----------------------------------------------------------------

@dataclass
class Stage:
    name: str
    fn: Callable[[PipelineConfig, Gateway | None], None]
    inputs: Callable[[PipelineConfig], list[Path]]
    outputs: Callable[[PipelineConfig], list[Path]]
    config_slice: Callable[[PipelineConfig], dict]
    needs_gateway: bool = False


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _gateway_sig(config: PipelineConfig) -> dict:
    gw = config.gateway
    return {"mode": gw.mode, "scorer_model": gw.scorer_model_id,
            "window": gw.scorer_context_window, "separator": gw.separator,
            "generator_model": gw.generator_model_id,
            "temperature": gw.generator_temperature,
            "judge_model": gw.judge_model_id,
            "judge_temperature": gw.judge_temperature,
            "prompt_version": prompts.PROMPT_VERSION}


def _stages() -> list[Stage]:
    def paths(*names: str):
        return lambda c: [c.path(n) for n in names]

    analysis_outputs = lambda names: (
        lambda c: [c.path("analysis_dir") / n for n in names])

    return [
        Stage("preprocess", stage_preprocess,
              paths("transcripts", "annotations"),
              lambda c: [c.path("items"),
                         c.path("items").with_suffix(".exclusions.json")],
              lambda c: {"token_budget": c.token_budget,
                         "cleaning": corpus.CLEANING_VERSION,
                         "gateway": _gateway_sig(c)},
              needs_gateway=True),
        Stage("generate", stage_generate,
              paths("items"), paths("alternatives", "summaries"),
              lambda c: {"n_per_condition": c.n_per_condition,
                         "n_paraphrases": c.n_paraphrases,
                         "gateway": _gateway_sig(c)},
              needs_gateway=True),
        Stage("judge", stage_judge,
              paths("items", "alternatives"),
              lambda c: [c.path("judged"),
                         c.path("judged").with_suffix(".goal_match.json")],
              lambda c: {"gateway": _gateway_sig(c)},
              needs_gateway=True),
        Stage("score", stage_score,
              paths("items", "judged"), paths("scored"),
              lambda c: {"gateway": _gateway_sig(c)},
              needs_gateway=True),
        Stage("cost", stage_cost,
              paths("judged", "scored"), paths("costs", "costs_csv"),
              lambda c: {}),
        Stage("stratify", stage_stratify,
              paths("costs"), paths("stratification"),
              lambda c: {"seed": c.seeds.get("stratify")}),
        Stage("analyze_rank", stage_analyze_rank,
              paths("costs", "stratification"),
              analysis_outputs(["rank_summary.csv", "rank_histogram.csv"]),
              lambda c: {"tie_policy": c.tie_policy,
                         "use_stratified": c.use_stratified}),
        Stage("analyze_pairwise", stage_analyze_pairwise,
              paths("costs", "stratification"),
              analysis_outputs(["pairwise_fit.json"]),
              lambda c: {"use_stratified": c.use_stratified}),
        Stage("analyze_condlogit", stage_analyze_condlogit,
              paths("costs", "stratification"),
              analysis_outputs(["condlogit_fit.json"]),
              lambda c: {"use_stratified": c.use_stratified}),
        Stage("analyze_diffs", stage_analyze_diffs,
              paths("costs", "stratification"),
              analysis_outputs(["diffs.csv"]),
              lambda c: {"seed": c.seeds.get("paired_diff"),
                         "use_stratified": c.use_stratified}),
        Stage("report", stage_report,
              lambda c: [c.path("analysis_dir") / n for n in
                         ["rank_summary.csv", "rank_histogram.csv",
                          "pairwise_fit.json", "condlogit_fit.json",
                          "diffs.csv"]] + [c.path("costs")],
              lambda c: [c.path("report_dir") / n for n in
                         ["table_rank.csv", "table_condlogit.csv",
                          "table_pairwise.csv", "table_diffs.csv",
                          "plot_rank_histogram.csv",
                          "plot_cost_distributions.csv"]],
              lambda c: {"chance_level": c.chance_level}),
    ]


def run_pipeline(config: PipelineConfig, echo: Callable[[str], None] = print) -> dict:
    """Run all stages with content-hash skipping; returns the manifest."""
    previous: dict = {}
    manifest_path = config.path("manifest")
    if manifest_path.exists():
        try:
            previous = json.loads(manifest_path.read_text("utf-8"))
        except json.JSONDecodeError:
            previous = {}
    gateway = None
    manifest: dict = {
        "version": __version__,
        "prompt_version": prompts.PROMPT_VERSION,
        "mode": config.mode,
        "seeds": config.seeds,
        "stages": {},
    }
    prev_stages = previous.get("stages", {})
    for stage in _stages():
        inputs = stage.inputs(config)
        for p in inputs:
            if not p.exists():
                raise MissingInput(f"stage {stage.name}: missing input {p}")
        in_hashes = {p.name: _sha256(p) for p in sorted(inputs)}
        sig = stage.config_slice(config)
        outputs = stage.outputs(config)
        prev = prev_stages.get(stage.name)
        can_skip = (
            prev is not None
            and prev.get("inputs") == in_hashes
            and prev.get("config") == sig
            and all(p.exists() for p in outputs)
            and {p.name: _sha256(p) for p in sorted(outputs)} == prev.get("outputs")
        )
        if can_skip:
            echo(f"[skip] {stage.name}")
        else:
            echo(f"[run ] {stage.name}")
            if stage.needs_gateway and gateway is None:
                gateway = make_gateway(config)
            try:
                stage.fn(config, gateway)
            except ProdChoiceError as exc:
                exc.args = (f"stage {stage.name}: {exc}",)
                raise
        out_hashes = {p.name: _sha256(p) for p in sorted(outputs)}
        manifest["stages"][stage.name] = {
            "inputs": in_hashes, "config": sig, "outputs": out_hashes,
        }
    _write_json(manifest_path, manifest)
    return manifest
