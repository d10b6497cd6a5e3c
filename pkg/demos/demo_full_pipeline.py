"""Replay the bundled mini corpus through the whole pipeline.

Everything runs offline: generation, judging and scoring responses come
from the recorded fixture store under tests/data/mini/fixtures. The same
flow against live endpoints only needs a config with real URLs and
mode=record.

Run from the repository root:  python demos/demo_full_pipeline.py
"""

import json
import tempfile
from pathlib import Path

from prodchoice.config import load_config
from prodchoice.pipeline import run_pipeline

MINI = Path(__file__).resolve().parent.parent / "tests" / "data" / "mini"

with tempfile.TemporaryDirectory() as workdir:
    config = load_config(MINI / "config.replay.json",
                         overrides={"paths": {"workdir": workdir}})
    manifest = run_pipeline(config)
    work = Path(workdir)

    n_items = len((work / "items.jsonl").read_text().splitlines())
    n_records = len((work / "judged.jsonl").read_text().splitlines())
    strat = json.loads((work / "stratification.json").read_text())
    print(f"\n{n_items} choice items, {n_records} candidate records, "
          f"{strat['total']} generated candidates retained after alignment")

    print("\npre-alignment distribution tests (p-values):")
    for cost, row in strat["pre_tests"].items():
        print(f"  {cost:<11} {row['p']:.4g}")
    print("post-alignment on the matched dimensions:")
    for cost, row in strat["post_tests"].items():
        print(f"  {cost:<11} {row['p']:.4g}  "
              f"{'FLAGGED' if row['flagged'] else 'ok'}")

    print("\nrank-1 table (share%, multiplier over candidate-count chance):")
    import csv
    with (work / "analysis" / "rank_summary.csv").open() as fh:
        for row in csv.DictReader(fh):
            print(f"  {row['cost']:<11} {row['condition']:<14} "
                  f"{100 * float(row['rank1_share']):5.1f}%  "
                  f"x{float(row['multiplier_candidates']):.2f}  "
                  f"p = {float(row['p_value_candidates']):.2e}")

    condlogit = json.loads((work / "analysis" / "condlogit_fit.json").read_text())
    print("\nconditional-logit sensitivity (alpha) per cost and condition:")
    for cost, conds in condlogit.items():
        line = "  ".join(f"{cond}: {fit['coefficients']['alpha']:+.3f}"
                         for cond, fit in conds.items())
        print(f"  {cost:<11} {line}")

    print(f"\nreport tables and plot data under {work / 'report'}:")
    for p in sorted((work / "report").iterdir()):
        print(f"  {p.name}")
    print("\nmanifest stages:", ", ".join(manifest["stages"]))
