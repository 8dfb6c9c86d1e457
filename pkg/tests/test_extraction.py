import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from editgauge.extraction import (
    Edit, EditExtractor, EditSentence, ExtractionConfig, SentencePair, build_edit_sentence, dedup_common,
    extract_edit, lcs_length, match_pairs, normalize_ws, register_segmenter, segment_sentences, similarity,
    tokenize,
)
from editgauge.fixtures import MUTATIONS, mutate, random_article

from oracles import char_ratio, lcs_len


# --- tokenizer -------------------------------------------------------------------

def test_tokenize_detaches_punctuation():
    assert tokenize("The cat sat.") == ["The", "cat", "sat", "."]
    assert tokenize("don't stop, ok?") == ["don't", "stop", ",", "ok", "?"]


def test_tokenize_keeps_markup_atomic():
    toks = tokenize("See [[Paris|the city]] and {{cite web}} ''here''.")
    assert "[[" in toks and "]]" in toks and "{{" in toks and "}}" in toks and "''" in toks
    assert tokenize("<ref name=x>a</ref>")[:1] == ["<ref"]
    assert "</ref>" in tokenize("<ref name=x>a</ref>")
    assert tokenize("== History ==") == ["==", "History", "=="]


@given(st.text(max_size=60))
def test_tokens_cover_text_without_whitespace(text):
    toks = tokenize(text)
    assert all(t and not any(ch.isspace() for ch in t) for t in toks)
    assert "".join(toks) == "".join(text.split())


@given(st.lists(st.from_regex(r"[A-Za-z0-9]{1,6}", fullmatch=True), max_size=10))
def test_whitespace_join_round_trip_for_plain_words(words):
    text = "  ".join(words)
    assert " ".join(tokenize(text)) == normalize_ws(text)


# --- segmentation ---------------------------------------------------------------

def test_segment_examples():
    assert segment_sentences("A cat. A dog.") == ["A cat.", "A dog."]
    assert segment_sentences("Dr. Smith arrived.") == ["Dr. Smith arrived."]
    assert segment_sentences("") == []


def test_segment_variants():
    assert segment_sentences("Really? Yes! Fine.") == ["Really?", "Yes!", "Fine."]
    assert segment_sentences("Work by J. Smith was good.") == ["Work by J. Smith was good."]
    assert segment_sentences("It rained. (Then it stopped.)") == ["It rained.", "(Then it stopped.)"]
    assert segment_sentences("Er kam ca. Mitte Mai. Dann ging er.", lang="de") == [
        "Er kam ca. Mitte Mai.", "Dann ging er."]
    # a markup-only line is one sentence
    assert segment_sentences("First line.\n[[Category:History]]") == ["First line.", "[[Category:History]]"]


def test_pluggable_segmenters():
    assert segment_sentences("one. two\nthree", segmenter="lines") == ["one. two", "three"]
    register_segmenter("words", lambda text, lang: text.split())
    assert segment_sentences("a b", segmenter="words") == ["a", "b"]
    assert segment_sentences("a b", segmenter=lambda text, lang: [text.upper()]) == ["A B"]


sentence_text = st.lists(
    st.tuples(st.sampled_from(["The", "Dr.", "A", "It", "Mr.", "Paris"]),
              st.lists(st.sampled_from(["cat", "e.g.", "ran", "[[x]]", "St.", "big", "J."]), max_size=4),
              st.sampled_from([".", "!", "?", ""]),
              st.sampled_from([" ", "  ", "\n", " \n "])),
    max_size=6,
)


@given(sentence_text)
def test_segments_concatenate_to_input(parts):
    text = "".join(head + " " + " ".join(body) + end + sep for head, body, end, sep in parts)
    sents = segment_sentences(text)
    assert normalize_ws(" ".join(sents)) == normalize_ws(text)
    assert all(s == s.strip() and s for s in sents)


# --- dedup and matching -------------------------------------------------------------

def test_dedup_examples():
    assert dedup_common(["X.", "Y."], ["Y.", "Z."]) == (["X."], ["Z."])
    assert dedup_common(["X.", "X."], ["X."]) == (["X."], [])
    assert dedup_common(["A."], ["B."]) == (["A."], ["B."])
    assert dedup_common(["a  b."], [" a b."]) == ([], [])


@given(st.lists(st.sampled_from(["a.", "b.", "c .", "c."]), max_size=6),
       st.lists(st.sampled_from(["a.", "b.", "c .", "c."]), max_size=6))
def test_dedup_shrinks_equally(r, a):
    r2, a2 = dedup_common(r, a)
    assert len(r2) <= len(r) and len(a2) <= len(a)
    assert len(r) - len(r2) == len(a) - len(a2)
    assert not set(map(normalize_ws, r2)) & set(map(normalize_ws, a2))


@given(st.text(alphabet="abc ", max_size=40), st.text(alphabet="abc ", max_size=40))
def test_bit_parallel_lcs_matches_table(a, b):
    assert lcs_length(a, b) == lcs_len(a, b)


def test_similarity_example_against_oracle():
    ratio = similarity("The cat sat.", "The cat sat down.")
    assert ratio == pytest.approx(char_ratio("The cat sat.", "The cat sat down."), abs=1e-12)
    assert ratio == pytest.approx(24 / 29)
    [pair] = match_pairs(["The cat sat."], ["The cat sat down."])
    assert (pair.before, pair.after) == ("The cat sat.", "The cat sat down.")


def test_below_threshold_stays_unmatched():
    assert char_ratio("Alpha.", "Omega beta gamma.") < 0.5
    pairs = match_pairs(["Alpha."], ["Omega beta gamma."], 0.5)
    assert [(p.before, p.after) for p in pairs] == [("Alpha.", ""), ("", "Omega beta gamma.")]
    assert all(p.similarity == 0.0 for p in pairs)


def test_pure_addition_pair():
    assert match_pairs([], ["New sentence."]) == [SentencePair("", "New sentence.", 0.0)]


def test_greedy_takes_best_first():
    pairs = match_pairs(["abcdef.", "abcxyz."], ["abcdeX."])
    assert (pairs[0].before, pairs[0].after) == ("abcdef.", "abcdeX.")
    assert pairs[1].after == ""


def test_threshold_bounds():
    for bad in (0.0, 1.0, -1, 2):
        with pytest.raises(ValueError):
            match_pairs(["a"], ["a"], bad)


def test_pair_invariants():
    with pytest.raises(ValueError):
        SentencePair("", "")
    with pytest.raises(ValueError):
        SentencePair("x", "", 0.5)


words = st.lists(st.sampled_from(["aa bb.", "aa bc.", "zz top.", "q.", "aa bb cc."]), max_size=5)


@given(words, words, st.floats(0.05, 0.95))
def test_match_count(r, a, threshold):
    pairs = match_pairs(r, a, threshold)
    matched = sum(1 for p in pairs if p.before and p.after)
    assert len(pairs) == len(r) + len(a) - matched
    assert all(p.similarity >= threshold for p in pairs if p.before and p.after)


# --- edit-sentences -------------------------------------------------------------------

def test_build_edit_sentence_examples():
    es = build_edit_sentence(SentencePair("the cat sat", "the big cat sat", 0.9))
    assert es.tokens == ("the", "big", "cat", "sat") and es.labels == "=+=="
    assert build_edit_sentence(SentencePair("", "hello world")).labels == "++"
    assert build_edit_sentence(SentencePair("bye now", "")).labels == "--"


def test_build_rejects_blank_pair():
    with pytest.raises(ValueError):
        build_edit_sentence(SentencePair(" ", ""))


def test_edit_sentence_validation():
    with pytest.raises(ValueError):
        EditSentence(("a",), "==")
    with pytest.raises(ValueError):
        EditSentence((), "")
    with pytest.raises(ValueError):
        EditSentence(("a",), "x")


@given(st.text(alphabet="ab .,", max_size=25), st.text(alphabet="ab .,", max_size=25))
def test_edit_sentence_projections(before, after):
    if not tokenize(before) and not tokenize(after):
        return
    sim = 0.0 if not before or not after else 0.5
    es = build_edit_sentence(SentencePair(before, after, sim))
    assert es.before() == tokenize(before)
    assert es.after() == tokenize(after)


# --- extract_edit -----------------------------------------------------------------------

def test_extract_single_insertion():
    edit = extract_edit("A cat sat.", "A big cat sat.")
    assert len(edit.sentences) == 1
    assert edit.sentences[0].labels.count("+") == 1
    assert edit.n_hunks == 1
    assert (edit.chars_removed, edit.chars_added) == (10, 14)


def test_extract_identity_is_empty():
    edit = extract_edit("Same text.\n", "Same text.\n")
    assert edit.sentences == () and edit.n_hunks == 0 and edit.n_chars == 0


def test_two_hunks_in_order():
    prev = "Alpha is first.\nMiddle stays.\nOmega is last.\n"
    curr = "Alpha is first here.\nMiddle stays.\nOmega is very last.\n"
    edit = extract_edit(prev, curr)
    assert edit.n_hunks == 2
    assert [s.after() for s in edit.sentences] == [tokenize("Alpha is first here."),
                                                 tokenize("Omega is very last.")]


def test_moved_sentence_cancels_within_hunk():
    edit = extract_edit("One. Two.", "Two. One.")
    assert edit.n_hunks == 1 and edit.sentences == ()


def test_extract_config_threshold_changes_pairing():
    prev, curr = "The cat sat on a mat.", "The dog sat on a rug."
    assert len(extract_edit(prev, curr, ExtractionConfig(match_threshold=0.5)).sentences) == 1
    assert len(extract_edit(prev, curr, ExtractionConfig(match_threshold=0.95)).sentences) == 2


def test_edit_serialization_round_trip():
    edit = extract_edit("A b. C d.\n", "A x b. E f.\n")
    d = edit.to_dict()
    assert set(d) >= {"sentences", "n_hunks"}
    assert all(isinstance(s["labels"], str) for s in d["sentences"])
    assert Edit.from_dict(d) == edit


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(MUTATIONS))
def test_mutated_pairs_satisfy_projections(seed, kind):
    rng = np.random.default_rng(seed)
    prev = random_article(rng)
    curr, _ = mutate(prev, rng, kind)
    edit = extract_edit(prev, curr)
    assert edit == extract_edit(prev, curr)
    old_sents = {tuple(tokenize(x)) for x in segment_sentences(prev)} | {()}
    new_sents = {tuple(tokenize(x)) for x in segment_sentences(curr)} | {()}
    for es in edit.sentences:
        assert len(es.tokens) == len(es.labels) >= 1
        assert tuple(es.before()) in old_sents
        assert tuple(es.after()) in new_sents


def test_extractor_estimator_api():
    ext = EditExtractor(match_threshold=0.6)
    assert ext.get_params() == {"lang": "en", "match_threshold": 0.6, "segmenter": "rules"}
    out = clone(ext).fit_transform([("A cat sat.", "A big cat sat."), ("x.", "x.")])
    assert [len(e) for e in out] == [1, 0]
    with pytest.raises(ValueError):
        EditExtractor(match_threshold=1.5).fit()
    with pytest.raises(ValueError):
        EditExtractor(segmenter="nope").fit()
