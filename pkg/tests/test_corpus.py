from collections import Counter

import pytest

from prodchoice.corpus import (
    ChoiceItem,
    RawUtterance,
    Turn,
    attach_history,
    clean_utterance,
    extract_choice_items,
    first_sentence,
    item_key,
    merge_and_filter,
    naive_choice_points,
    read_items,
    select_targets,
    write_items,
)
from prodchoice.errors import DataError, EmptyDialogue, NoPrecedingTurn


def utt(i, speaker, text, act="statement", dlg="d1"):
    return RawUtterance(dialogue_id=dlg, turn_index=i, speaker=speaker,
                        text=text, act_tag=act)


def whitespace_tokens(text):
    return len(text.split())


class TestCleanUtterance:
    def test_tags_fillers_and_repeats(self):
        assert clean_utterance(
            "I um I think <<motorcycle noise>> that's right"
        ) == "I think that's right"

    def test_identity_on_clean_input(self):
        assert clean_utterance("the cat sat") == "the cat sat"

    def test_fillers_then_repeat_collapse(self):
        assert clean_utterance("uh uh okay") == "okay"

    def test_interrupted_fragments_removed(self):
        assert clean_utterance("the mot- motorcycle was loud") == \
            "the motorcycle was loud"

    def test_repeat_collapse_case_insensitive(self):
        assert clean_utterance("The the weather is nice") == "The weather is nice"

    def test_single_angle_brackets(self):
        assert clean_utterance("so <laughter> anyway") == "so anyway"

    def test_can_empty_out(self):
        assert clean_utterance("um uh <<noise>>") == ""

    def test_idempotent(self):
        samples = [
            "I um I think <<motorcycle noise>> that's right",
            "uh uh okay",
            "the mot- motorcycle was um loud loud",
            "  spaced   out   words  ",
            "plain sentence with nothing to remove at all",
        ]
        for s in samples:
            once = clean_utterance(s)
            assert clean_utterance(once) == once


class TestMergeAndFilter:
    def test_backchannel_dropped_then_merge(self):
        turns = merge_and_filter([
            utt(0, "A", "yeah"),
            utt(1, "A", "I went to the store yesterday afternoon"),
            utt(2, "B", "that sounds nice to me"),
        ])
        assert len(turns) == 2
        assert turns[0].speaker == "A"
        assert turns[0].utterances == ("I went to the store yesterday afternoon",)
        assert turns[1].speaker == "B"
        assert [t.turn_index for t in turns] == [0, 1]

    def test_alternating_dialogue_unchanged(self):
        turns = merge_and_filter([
            utt(0, "A", "this is the first full utterance here"),
            utt(1, "B", "and this is the second full utterance"),
            utt(2, "A", "finally here is the third utterance"),
        ])
        assert len(turns) == 3
        assert [t.speaker for t in turns] == ["A", "B", "A"]

    def test_same_speaker_merged(self):
        turns = merge_and_filter([
            utt(0, "A", "here is one utterance from speaker a"),
            utt(1, "A", "and another one from the same speaker"),
            utt(2, "B", "a reply from the other speaker"),
        ])
        assert len(turns) == 2
        assert len(turns[0].utterances) == 2
        assert turns[0].act_tags == ("statement", "statement")

    def test_speakers_alternate_after_merge(self):
        turns = merge_and_filter([
            utt(0, "A", "first utterance with enough words"),
            utt(1, "B", "yeah"),  # dropped, A utterances become adjacent
            utt(2, "A", "second utterance with enough words"),
            utt(3, "B", "a genuine reply with enough words"),
        ])
        assert [t.speaker for t in turns] == ["A", "B"]
        assert len(turns[0].utterances) == 2

    def test_all_backchannels_raises(self):
        with pytest.raises(EmptyDialogue):
            merge_and_filter([utt(0, "A", "yeah"), utt(1, "B", "uh right")])


def ten_word_sentence(prefix="We all"):
    return f"{prefix} think the meeting went very well for everyone today."


class TestSelectTargets:
    def _turns(self):
        return [
            Turn("d1", "A", ("a lead-in utterance from speaker a here",),
                 ("statement",), 0),
            Turn("d1", "B", (ten_word_sentence(),), ("statement",), 1),
        ]

    def test_basic_selection(self):
        turns = self._turns()
        ann = {item_key("d1", 1): 2}  # "think"
        items = select_targets(turns, ann)
        assert len(items) == 1
        item = items[0]
        assert item.context == "We all think"
        assert item.human_continuation == \
            "the meeting went very well for everyone today."
        assert item.choice_point_index == 2
        assert item.act_tag == "statement"

    def test_nine_words_too_short(self):
        turns = [
            Turn("d1", "A", ("a lead-in utterance from speaker a here",),
                 ("statement",), 0),
            Turn("d1", "B", ("only nine words are in this very short sentence",),
                 ("statement",), 1),
        ]
        counts = Counter()
        items = select_targets(turns, {item_key("d1", 1): 3}, counts)
        assert not items
        assert counts["too_short"] == 1

    def test_missing_annotation_counts_no_choice_point(self):
        counts = Counter()
        items = select_targets(self._turns(), {}, counts)
        assert not items
        assert counts["no_choice_point"] == 1

    def test_bad_act_tag_excluded(self):
        turns = [
            Turn("d1", "A", ("a lead-in utterance from speaker a here",),
                 ("statement",), 0),
            Turn("d1", "B", (ten_word_sentence(),), ("backchannel",), 1),
        ]
        counts = Counter()
        assert not select_targets(turns, {item_key("d1", 1): 2}, counts)
        assert counts["bad_act_tag"] == 1

    def test_first_turn_excluded(self):
        turns = [Turn("d1", "A", (ten_word_sentence(),), ("statement",), 0)]
        counts = Counter()
        assert not select_targets(turns, {item_key("d1", 0): 2}, counts)
        assert counts["no_preceding_turn"] == 1

    def test_context_too_short(self):
        counts = Counter()
        assert not select_targets(self._turns(), {item_key("d1", 1): 0}, counts)
        assert counts["context_too_short"] == 1

    def test_empty_continuation(self):
        counts = Counter()
        assert not select_targets(self._turns(), {item_key("d1", 1): 10}, counts)
        assert counts["empty_continuation"] == 1

    def test_only_first_sentence_used(self):
        long_turn = Turn(
            "d1", "B",
            (ten_word_sentence() + " And a trailing second sentence.",),
            ("statement",), 1)
        turns = [self._turns()[0], long_turn]
        items = select_targets(turns, {item_key("d1", 1): 2})
        assert items[0].sentence == ten_word_sentence()

    def test_exclusion_counts_plus_items_cover_turns(self):
        turns = self._turns() + [
            Turn("d1", "A", ("short one here okay fine",), ("question",), 2),
            Turn("d1", "B", (ten_word_sentence("We"),), ("other",), 3),
        ]
        counts = Counter()
        items = select_targets(turns, {item_key("d1", 1): 2}, counts)
        assert len(items) + sum(counts.values()) == len(turns)

    def test_emitted_items_satisfy_predicates(self):
        turns = self._turns()
        items = select_targets(turns, {item_key("d1", 1): 2})
        for item in items:
            words = item.sentence.split()
            assert 10 <= len(words) <= 30
            assert len(item.context.split()) >= 3
            assert item.human_continuation
            assert item.act_tag in ("statement", "question")
            assert item.context.split() == words[:item.choice_point_index + 1]


class TestAttachHistory:
    def _dialogue(self):
        return [
            Turn("d1", "A", ("the first turn from speaker a goes here",),
                 ("statement",), 0),
            Turn("d1", "B", ("the second turn from speaker b goes here",),
                 ("statement",), 1),
            Turn("d1", "A", (ten_word_sentence(),), ("statement",), 2),
        ]

    def _item(self):
        return ChoiceItem(
            item_id="d1:2", dialogue_id="d1", turn_index=2, speaker="A",
            context="I think", human_continuation="the meeting went well",
            choice_point_index=1, act_tag="statement")

    def test_budget_not_binding(self):
        out = attach_history(self._item(), self._dialogue(), 10_000,
                             whitespace_tokens)
        assert out.history_prev == "the second turn from speaker b goes here"
        assert out.history_full.splitlines() == [
            "A: the first turn from speaker a goes here",
            "B: the second turn from speaker b goes here",
        ]

    def test_budget_smaller_than_any_turn(self):
        out = attach_history(self._item(), self._dialogue(), 3,
                             whitespace_tokens)
        assert out.history_full == ""
        assert out.history_prev == "the second turn from speaker b goes here"

    def test_whole_turn_granularity(self):
        # one turn fits (9 tokens incl. speaker label) but both do not
        out = attach_history(self._item(), self._dialogue(), 10,
                             whitespace_tokens)
        assert out.history_full == "B: the second turn from speaker b goes here"

    def test_no_preceding_turn(self):
        item = ChoiceItem(
            item_id="d1:0", dialogue_id="d1", turn_index=0, speaker="A",
            context="I think", human_continuation="x", choice_point_index=1,
            act_tag="statement")
        with pytest.raises(NoPrecedingTurn):
            attach_history(item, self._dialogue(), 100, whitespace_tokens)

    def test_bad_budget(self):
        with pytest.raises(DataError):
            attach_history(self._item(), self._dialogue(), 0, whitespace_tokens)


class TestNaiveChoicePoints:
    def test_finds_first_lexicon_verb(self):
        turns = [Turn("d1", "B", ("I really think the plan is good",),
                      ("statement",), 1)]
        ann = naive_choice_points(turns)
        assert ann == {"d1:1": 2}

    def test_skips_turns_without_verb(self):
        turns = [Turn("d1", "B", ("salad and bread and cheese",),
                      ("statement",), 1)]
        assert naive_choice_points(turns) == {}


class TestEndToEndCorpusPass:
    def _dialogues(self):
        d = [
            utt(0, "A", "well um I really liked the movie we saw last night"),
            utt(1, "B", "yeah"),
            utt(2, "B", "my friends think the plot was very confusing for most people"),
            utt(3, "A", "that makes sense to me as well"),
        ]
        return {"d1": d}

    def test_full_pass_and_byte_identical_rerun(self, tmp_path):
        dialogues = self._dialogues()
        ann = {"d1:1": 2}  # B turn after merge; "think"
        items, exclusions = extract_choice_items(
            dialogues, ann, token_budget=1024, count_tokens=whitespace_tokens)
        assert len(items) == 1
        item = items[0]
        assert item.context == "my friends think"
        assert item.history_prev.startswith("well I really liked")
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_items(items, p1)
        items2, _ = extract_choice_items(
            dialogues, ann, token_budget=1024, count_tokens=whitespace_tokens)
        write_items(items2, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert read_items(p1) == items

    def test_first_sentence_splitter(self):
        assert first_sentence("One here. Two there.") == "One here."
        assert first_sentence("Just one sentence") == "Just one sentence"
        assert first_sentence("Are you sure? Yes.") == "Are you sure?"
