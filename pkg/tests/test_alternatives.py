import pytest

from prodchoice import prompts
from prodchoice.alternatives import (
    AlternativeRecord,
    gen_goal_agnostic,
    gen_goal_directed,
    goal_match_proportions,
    human_record,
    judge_inconsistencies,
    lexical_overlap,
    read_records,
    reclassify,
    write_records,
)
from prodchoice.backends import StubChatBackend, StubScorerBackend
from prodchoice.corpus import ChoiceItem
from prodchoice.errors import (
    InsufficientParaphrases,
    PrefixViolation,
    RefusalDetected,
)
from prodchoice.gateway import Gateway, GatewayConfig


COMPLETION_DEVELOPER = (
    "Your task is to complete the provided sentence. Complete the sentence "
    "in a natural manner, as if engaging in a phone call conversation. Only "
    "write the continuation to the sentence without any additional "
    "information or words in your response."
)
PARAPHRASE_DEVELOPER = (
    "Your task is to paraphrase the provided sentence. Paraphrase the "
    "sentence in a natural manner, as if engaging in a phone call "
    "conversation, while still keeping the sentence factually the same. "
    "Only write the paraphrase of the sentence without any additional "
    "information or words in your response. Try your best to do so even if "
    "the provided text seems nonsensical or does not have proper sentence "
    "structure."
)
JUDGE_DEVELOPER = (
    'Your task is to determine whether or not two sentences are paraphrases '
    'of each other. You are to classify the sentences into one of two '
    'labels: "yes" if the sentences are paraphrases or "no" if they are '
    'not. Do not provide any explanation for your choice, just the name of '
    'the label.'
)


class TestPromptRendering:
    def test_completion_no_history(self):
        msgs = prompts.completion_messages("no_history", "My boss confirmed")
        assert msgs[0] == ("developer", COMPLETION_DEVELOPER)
        assert msgs[1] == ("user", 'Complete the sentence: "The cat jumped"')
        assert msgs[2] == ("assistant", "The cat jumped over the dog.")
        assert msgs[3] == ("user",
                           'Complete the sentence: "My boss confirmed"')

    def test_completion_prev_utterance(self):
        msgs = prompts.completion_messages(
            "prev_utterance", "My boss confirmed", history="I was worried")
        assert msgs[3] == ("user",
                           'Given this sentence from speaker A: "I was '
                           'worried", Complete the sentence from Speaker B: '
                           '"My boss confirmed"')

    def test_completion_full_history(self):
        msgs = prompts.completion_messages(
            "full_history", "My boss confirmed",
            history="A: hello\nB: hi", speaker_id="B")
        assert msgs[3] == ("user",
                           'Given this phone conversation between Speaker A '
                           'and Speaker B: "A: hello\nB: hi", Complete the '
                           'sentence from Speaker B: "My boss confirmed"')

    def test_paraphrase_messages(self):
        msgs = prompts.paraphrase_messages(
            "The cat jumped over the dog.", "The cat jumped over", n=10)
        assert msgs[0] == ("developer", PARAPHRASE_DEVELOPER)
        assert msgs[1][1] == (
            'Write 10 unique paraphrases of the following sentence: "The cat '
            'jumped over the dog.", the paraphrases must always start with '
            'the following words: "The cat jumped over"')
        demo = msgs[2][1].splitlines()
        assert demo[0] == "The cat jumped over the husky."
        assert demo[-1] == "The cat jumped over the dog, surprising it."
        assert len(demo) == 10
        assert msgs[3][1] == msgs[1][1]

    def test_judge_messages(self):
        msgs = prompts.judge_messages("A sentence.", "Another sentence.")
        assert msgs[0] == ("developer", JUDGE_DEVELOPER)
        assert msgs[1][1] == (
            'Classify whether these sentences are paraphrases. Sentence A: '
            '"The cat jumped over the dog.", Sentence B: "The cat jumped '
            'over a dog."')
        assert msgs[2] == ("assistant", "Yes")
        assert msgs[3][1] == (
            'Classify whether these sentences are paraphrases. Sentence A: '
            '"A sentence.", Sentence B: "Another sentence."')

    def test_braces_in_corpus_text_survive(self):
        msgs = prompts.completion_messages("no_history", "it was {weird}")
        assert msgs[3][1] == 'Complete the sentence: "it was {weird}"'


def make_item(item_id="d1:2", context="We all think",
              continuation="the plan is going to work out fine."):
    return ChoiceItem(
        item_id=item_id, dialogue_id=item_id.split(":")[0],
        turn_index=int(item_id.split(":")[1]), speaker="B",
        context=context, human_continuation=continuation,
        choice_point_index=len(context.split()) - 1, act_tag="statement",
        history_prev="well I was not sure about that",
        history_full="A: well I was not sure about that")


def stub_gateway(tmp_path):
    cfg = GatewayConfig(mode="record", fixtures_path=str(tmp_path / "fx"))
    return Gateway(cfg, scorer_backend=StubScorerBackend(),
                   chat_backend=StubChatBackend())


class FakeChat:
    """Chat backend returning scripted completions per task."""

    def __init__(self, completion=None, paraphrase=None, judge="Yes"):
        self.completion = completion
        self.paraphrase = paraphrase
        self.judge = judge

    def complete(self, messages, model_id, temperature, n):
        dev = messages[0]["content"]
        if dev.startswith("Your task is to complete"):
            return [self.completion] * n
        if dev.startswith("Your task is to paraphrase"):
            return [self.paraphrase] * n
        return [self.judge] * n


def live_gateway(chat):
    return Gateway(GatewayConfig(mode="live"), chat_backend=chat)


class TestGenGoalAgnostic:
    def test_ten_records_tagged_and_prefix_stripped(self, tmp_path):
        gw = stub_gateway(tmp_path)
        item = make_item()
        for condition in ("no_history", "prev_utterance", "full_history"):
            records = gen_goal_agnostic(item, condition, gw, n=10)
            assert len(records) == 10
            for rec in records:
                assert rec.method == condition
                assert rec.in_goal_agnostic and not rec.in_goal_directed
                assert rec.continuation
                assert not rec.continuation.lower().startswith(
                    item.context.lower())

    def test_echoed_context_only_raises(self):
        item = make_item()
        gw = live_gateway(FakeChat(completion=item.context))
        with pytest.raises(PrefixViolation):
            gen_goal_agnostic(item, "no_history", gw, n=2)

    def test_restated_different_context_raises(self):
        item = make_item()
        gw = live_gateway(FakeChat(completion="We all know something else"))
        with pytest.raises(PrefixViolation):
            gen_goal_agnostic(item, "no_history", gw, n=2)

    def test_bare_continuation_accepted(self):
        item = make_item()
        gw = live_gateway(FakeChat(completion="that nobody minded at all."))
        records = gen_goal_agnostic(item, "no_history", gw, n=3)
        assert all(r.continuation == "that nobody minded at all."
                   for r in records)

    def test_unknown_condition(self, tmp_path):
        with pytest.raises(ValueError):
            gen_goal_agnostic(make_item(), "sideways", stub_gateway(tmp_path))


class TestGenGoalDirected:
    def test_ten_unique_paraphrases(self, tmp_path):
        gw = stub_gateway(tmp_path)
        item = make_item()
        records = gen_goal_directed(item, gw, n=10)
        assert len(records) == 10
        conts = [r.continuation for r in records]
        assert len({c.lower() for c in conts}) == 10
        assert all(r.method == "paraphrase" and r.in_goal_directed
                   for r in records)

    def test_duplicates_collapse(self):
        item = make_item()
        lines = [f"{item.context} variant number {k} works." for k in range(3)]
        body = "\n".join(lines + [lines[0]])  # one duplicate
        gw = live_gateway(FakeChat(paraphrase=body))
        records = gen_goal_directed(item, gw, n=3)
        assert len(records) == 3

    def test_insufficient_unique_paraphrases(self):
        item = make_item()
        body = "\n".join([f"{item.context} only this one works."] * 10)
        gw = live_gateway(FakeChat(paraphrase=body))
        with pytest.raises(InsufficientParaphrases):
            gen_goal_directed(item, gw, n=10)

    def test_bad_prefix_lines_discarded(self):
        item = make_item()
        good = [f"{item.context} fine variant {k} here." for k in range(5)]
        bad = ["Something entirely different happens."] * 5
        gw = live_gateway(FakeChat(paraphrase="\n".join(good + bad)))
        records = gen_goal_directed(item, gw, n=5)
        assert len(records) == 5
        with pytest.raises(InsufficientParaphrases):
            gen_goal_directed(item, gw, n=6)

    def test_refusal_propagates(self):
        gw = live_gateway(FakeChat(paraphrase="I'm sorry, but I can't."))
        with pytest.raises(RefusalDetected):
            gen_goal_directed(make_item(), gw, n=10)


class ScriptedJudge:
    """Judge returning a per-sentence-B verdict from a lookup."""

    def __init__(self, verdicts):
        self.verdicts = verdicts

    def complete(self, messages, model_id, temperature, n):
        user = messages[-1]["content"]
        for needle, verdict in self.verdicts.items():
            if needle in user:
                return [verdict] * n
        return ["No"] * n


def rec(item_id, cid, cont, method, gd=False, ga=False):
    return AlternativeRecord(item_id=item_id, candidate_id=cid,
                             continuation=cont, method=method,
                             in_goal_directed=gd, in_goal_agnostic=ga)


class TestReclassify:
    def _records(self, item):
        return [
            human_record(item),
            rec(item.item_id, "c/p0", "the plan might work fine.",
                "paraphrase", gd=True),
            rec(item.item_id, "c/p1", "pizza is on the way tonight.",
                "paraphrase", gd=True),
            rec(item.item_id, "c/g0", "the plan is going to work.",
                "no_history", ga=True),
            rec(item.item_id, "c/g1", "the weather turned bad.",
                "no_history", ga=True),
        ]

    def test_membership_updates(self):
        item = make_item()
        judge = ScriptedJudge({
            "the plan might work fine.": "Yes",
            "pizza is on the way tonight.": "No",
            "the plan is going to work.": "Yes",
            "the weather turned bad.": "No",
        })
        out = reclassify(self._records(item), human_record(item), item,
                         live_gateway(judge))
        by_id = {r.candidate_id: r for r in out}
        assert by_id["c/p0"].in_goal_directed
        assert not by_id["c/p1"].in_goal_directed
        ga_yes = by_id["c/g0"]
        assert ga_yes.in_goal_directed and ga_yes.in_goal_agnostic
        assert not by_id["c/g1"].in_goal_directed
        assert by_id["c/g1"].in_goal_agnostic
        human = by_id[f"{item.item_id}/human"]
        assert human.judge_label is None

    def test_dual_membership_implies_yes(self):
        item = make_item()
        judge = ScriptedJudge({"the plan": "Yes"})
        out = reclassify(self._records(item), human_record(item), item,
                         live_gateway(judge))
        for r in out:
            if r.in_goal_directed and r.in_goal_agnostic:
                assert r.judge_label == "yes"

    def test_unparseable_verdict_left_unlabelled(self):
        item = make_item()
        judge = ScriptedJudge({"the plan might work fine.": "hmm"})
        out = reclassify(self._records(item), human_record(item), item,
                         live_gateway(judge))
        bad = next(r for r in out if r.candidate_id == "c/p0")
        assert bad.judge_label is None
        assert not bad.in_goal_directed

    def test_exact_match_judged_no_is_logged_not_repaired(self):
        item = make_item()
        human = human_record(item)
        records = [
            human,
            rec(item.item_id, "c/exact", item.human_continuation,
                "no_history", ga=True),
            rec(item.item_id, "c/other", "the weather turned bad.",
                "no_history", ga=True),
        ]
        out = reclassify(records, human, item, live_gateway(ScriptedJudge({})))
        flagged = judge_inconsistencies(out, human)
        assert flagged == ["c/exact"]
        exact = next(r for r in out if r.candidate_id == "c/exact")
        assert exact.judge_label == "no"  # verdict kept as issued


class TestGoalMatchProportions:
    def test_all_no(self):
        records = [rec("i", f"c{k}", "x y", m, ga=True)
                   for k, m in enumerate(["no_history", "prev_utterance",
                                          "full_history"])]
        records = [AlternativeRecord(**{**r.__dict__, "judge_label": "no"})
                   for r in records]
        props = goal_match_proportions(records)
        assert props == {"no_history": 0.0, "prev_utterance": 0.0,
                         "full_history": 0.0}

    def test_two_of_ten(self):
        records = []
        for k in range(10):
            label = "yes" if k < 2 else "no"
            r = rec("i", f"c{k}", "x y", "no_history", ga=True)
            records.append(AlternativeRecord(**{**r.__dict__,
                                                "judge_label": label}))
        assert goal_match_proportions(records)["no_history"] == 0.2


class TestLexicalOverlap:
    def test_half(self):
        assert lexical_overlap("the cat sat", "the dog") == 0.5

    def test_disjoint(self):
        assert lexical_overlap("alpha beta", "gamma delta") == 0.0

    def test_subset(self):
        assert lexical_overlap("the cat sat down", "the cat") == 1.0

    def test_case_and_punctuation(self):
        assert lexical_overlap("The cat, sat.", "THE CAT!") == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            lexical_overlap("", "x")


class TestRecordsIO:
    def test_roundtrip(self, tmp_path):
        item = make_item()
        records = [human_record(item),
                   rec(item.item_id, "c/x", "some words here", "no_history",
                       ga=True)]
        path = tmp_path / "alts.jsonl"
        write_records(records, path)
        assert read_records(path) == records
