"""Build the bundled mini corpus and its record/replay fixture store.

Generates 20 small seeded dialogues (with backchannels, fillers, noise
tags, fragments and same-speaker runs so the cleaning pass has work to
do), annotates choice points with the bundled first-verb heuristic, then
runs the full pipeline once in record mode against the deterministic stub
backends. The recorded store, transcripts, annotations and a replay
config land in tests/data/mini/, which the test suite and demos replay
without any network access.

Usage: python tools/build_mini_fixtures.py [--out tests/data/mini]
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

from prodchoice import corpus
from prodchoice.config import load_config
from prodchoice.pipeline import run_pipeline

SUBJECTS = [
    "my brother", "the neighbors", "our old friends", "my boss",
    "the kids next door", "my wife", "the people at work", "my cousin",
    "the folks upstairs", "my sister",
]

VERBS = ["think", "said", "heard", "believe", "found", "guess", "mentioned",
         "noticed", "figured", "agreed"]

TAILS = [
    "that the garden needs far more water now.",
    "that the old car would never make it through another cold winter.",
    "the whole neighborhood was talking about it.",
    "that the school board meeting ran very late into the evening again this month.",
    "that the fishing trip should wait until the weather clears up properly.",
    "the committee would approve the budget soon.",
    "that the recipe needed twice as much flour as the cookbook said it would.",
    "that the insurance paperwork was going to take several weeks to settle.",
    "the movie was nowhere near as good as the reviews had promised it would be.",
    "that the new highway exit would cut the commute nearly in half.",
    "that the garage sale brought in more money.",
    "the doctors wanted to run a few more tests before deciding on anything at all.",
    "that the team needed a better plan before the next big game.",
    "that the roof repair could wait until spring.",
    "the bank had finally approved the loan for the whole kitchen remodel project.",
    "it was time to start looking for a smaller house in town.",
]

OPENERS = [
    "well I was wondering about the schedule for next weekend honestly",
    "so we finally got around to painting the back fence yesterday",
    "you know the garden has been doing really well this year",
    "anyway the trip out to the lake took much longer than planned",
    "actually the kids have been asking about visiting the science museum",
    "so the new restaurant downtown turned out to be pretty decent",
    "well the weather around here has been strange this whole month",
    "anyway my neighbor keeps borrowing tools and forgetting to return them",
]

REPLIES = [
    "oh that sounds about right to me given everything else going on",
    "well that is more or less what everyone around here expected",
    "sure although I would probably have handled the whole thing differently",
    "right and the same thing happened to us a few years back",
    "honestly that seems like a lot of trouble for very little gain",
    "yeah the same story keeps coming up at our house too",
]

BACKCHANNELS = ["yeah", "uh huh", "right", "okay sure", "oh really"]

NOISE = ["<<laughter>>", "<<phone ringing>>", "<noise>", "<<dog barking>>"]


def _pick(seq, k):
    return seq[k % len(seq)]


def build_dialogue(d: int) -> list[dict]:
    """One seeded dialogue: alternating speakers with clutter mixed in."""
    did = f"sw{d:04d}"
    utts = []
    idx = 0

    def add(speaker, text, act="statement"):
        nonlocal idx
        utts.append({"dialogue_id": did, "turn_index": idx, "speaker": speaker,
                     "text": text, "act_tag": act})
        idx += 1

    add("A", _pick(OPENERS, d) + " " + _pick(NOISE, d))
    add("B", _pick(BACKCHANNELS, d), act="backchannel")
    # the target-bearing turn: first sentence has a lexicon verb at index >= 2
    subj = _pick(SUBJECTS, d)
    verb = _pick(VERBS, d)
    tail = _pick(TAILS, d)
    filler = "um " if d % 3 == 0 else ""
    add("B", f"{filler}{subj} {verb} {tail} And that was that.",
        act="statement" if d % 4 else "question")
    add("A", _pick(REPLIES, d))
    if d % 2 == 0:
        # same-speaker run plus a fragment and a repeated word
        add("A", f"and the the whole thi- thing {_pick(TAILS, d + 3)}")
    subj2 = _pick(SUBJECTS, d + 5)
    verb2 = _pick(VERBS, d + 7)
    add("B", f"{subj2} also {verb2} {_pick(TAILS, d + 9)}")
    add("A", _pick(BACKCHANNELS, d + 1), act="backchannel")
    add("A", _pick(REPLIES, d + 2))
    if d % 5 == 0:
        add("B", "short words only here", act="statement")  # too short target
    return utts


def build_corpus(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    transcripts = out_dir / "transcripts.jsonl"
    with transcripts.open("w", encoding="utf-8") as fh:
        for d in range(20):
            for utt in build_dialogue(d):
                fh.write(json.dumps(utt, sort_keys=True, ensure_ascii=False,
                                    separators=(",", ":")) + "\n")

    dialogues = corpus.read_transcripts(transcripts)
    annotations = {}
    for did in sorted(dialogues):
        turns = corpus.merge_and_filter(dialogues[did])
        annotations.update(corpus.naive_choice_points(turns))
    with (out_dir / "annotations.jsonl").open("w", encoding="utf-8") as fh:
        for key in sorted(annotations):
            fh.write(json.dumps(
                {"item_key": key, "choice_point_index": annotations[key]},
                sort_keys=True, separators=(",", ":")) + "\n")


def config_body(mode: str, workdir: str) -> dict:
    body = {
        "mode": mode,
        "paths": {
            "transcripts": "transcripts.jsonl",
            "annotations": "annotations.jsonl",
            "workdir": workdir,
        },
        "scorer": {"model_id": "gpt2", "context_window": 96},
        "generator": {"model_id": "gpt-4o", "temperature": 1.0},
        "fixtures": {"path": "fixtures"},
        "seeds": {"stratify": 20250801, "paired_diff": 20250802},
    }
    if mode == "record":
        body["scorer"]["endpoint"] = "stub:scorer"
        body["generator"]["endpoint"] = "stub:chat"
    return body


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="tests/data/mini", type=Path)
    args = parser.parse_args(argv)
    out: Path = args.out

    if (out / "fixtures").exists():
        shutil.rmtree(out / "fixtures")
    build_corpus(out)

    (out / "config.replay.json").write_text(
        json.dumps(config_body("replay", "work"), indent=2) + "\n")

    with tempfile.TemporaryDirectory() as scratch:
        record_cfg = out / "config.record.json"
        record_cfg.write_text(
            json.dumps(config_body("record", scratch), indent=2) + "\n")
        config = load_config(record_cfg)
        run_pipeline(config)
        record_cfg.unlink()

    n_fixtures = sum(1 for _ in
                     (out / "fixtures" / "records.jsonl").open())
    print(f"mini corpus ready in {out} ({n_fixtures} recorded fixtures)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
