import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linxkit import (
    BoundingBox,
    aggregate,
    chrf,
    element_score,
    intent_match,
    iou,
    make_action,
    parse_snapshot,
    text_score,
    turn_score,
    urlf,
)
from linxkit.metrics import TurnScore

from gen import random_action
from oracles import URL_CASES, chrf_brute, iou_grid


def box(x, y, w, h):
    return BoundingBox(x, y, w, h)


def test_intent_match():
    click = make_action("click", uid="a")
    assert intent_match(make_action("click", uid="b"), click) == 1
    assert intent_match(make_action("submit", uid="a"), click) == 0
    assert intent_match(None, make_action("say", speaker="navigator", utterance="x")) == 0


def test_iou_examples():
    assert iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0
    assert iou(box(0, 0, 10, 10), box(5, 5, 10, 10)) == pytest.approx(25 / 175, abs=1e-12)
    assert iou(box(0, 0, 10, 10), box(20, 20, 5, 5)) == 0.0
    assert iou(box(3, 3, 0, 0), box(3, 3, 0, 0)) == 0.0


def test_iou_against_grid():
    rng = np.random.default_rng(1)
    for _ in range(300):
        a, b = (tuple(int(v) for v in rng.integers(0, 65, 4)) for _ in range(2))
        assert abs(iou(box(*a), box(*b)) - iou_grid(a, b)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.integers(0, 64)] * 4), st.tuples(*[st.integers(0, 64)] * 4),
       st.floats(0.01, 100, allow_nan=False))
def test_iou_properties(a, b, k):
    ba, bb = box(*a), box(*b)
    v = iou(ba, bb)
    assert 0.0 <= v <= 1.0
    assert v == iou(bb, ba)
    assert iou(ba.scaled(k), bb.scaled(k)) == pytest.approx(v, abs=1e-9)
    if ba.area > 0:
        assert iou(ba, ba) == 1.0


def test_chrf_examples():
    assert chrf("abc", "abc") == 1.0
    assert chrf("abd", "abc") == pytest.approx((2 / 3 + 1 / 2 + 0) / 3, abs=1e-15)
    assert chrf("xyz", "abc") == 0.0
    assert chrf("", "") == 1.0
    assert chrf("", "abc") == 0.0
    assert chrf("a b c", "abc") == 1.0


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="abc d", max_size=20), st.text(alphabet="abc d", max_size=20))
def test_chrf_matches_brute_force(p, r):
    got = chrf(p, r)
    assert got == chrf_brute(p, r)
    assert got == chrf(r, p)
    assert 0.0 <= got <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=20).filter(lambda s: s.strip()))
def test_chrf_identity(s):
    assert chrf(s, s) == 1.0


@pytest.mark.parametrize("pred,ref,want", URL_CASES)
def test_urlf_table(pred, ref, want):
    assert urlf(pred, ref) == pytest.approx(float(want), abs=1e-12)
    assert urlf(ref, pred) == pytest.approx(float(want), abs=1e-12)


SNAP = parse_snapshot({"uid": "root", "tag": "html", "bbox": {"x": 0, "y": 0, "width": 100, "height": 100},
                       "children": [
                           {"uid": "a", "tag": "button", "bbox": {"x": 0, "y": 0, "width": 10, "height": 10}},
                           {"uid": "b", "tag": "button", "bbox": {"x": 5, "y": 5, "width": 10, "height": 10}},
                           {"uid": "c", "tag": "input", "bbox": {"x": 50, "y": 50, "width": 10, "height": 10}},
                           {"uid": "half", "tag": "input", "bbox": {"x": 50, "y": 50, "width": 10, "height": 5}},
                           {"uid": "hidden", "tag": "input"},
                       ]})


def test_element_score():
    ref = make_action("click", uid="a")
    assert element_score(make_action("click", uid="a"), ref, SNAP) == 1.0
    assert element_score(make_action("click", uid="c"), ref, SNAP) == 0.0
    assert element_score(make_action("submit", uid="a"), ref, SNAP) == 0.0
    assert element_score(make_action("click", uid="ghost"), ref, SNAP) == 0.0
    assert element_score(make_action("click", x=7, y=7), ref, SNAP) == pytest.approx(1 / 7)
    assert element_score(make_action("click", x=500, y=7), ref, SNAP) == 0.0
    assert element_score(make_action("click", uid="hidden"), ref, SNAP) == 0.0


def test_text_score():
    say = make_action("say", speaker="navigator", utterance="all done")
    assert text_score(make_action("say", speaker="navigator", utterance="all done"), say) == 1.0
    load = make_action("load", url="https://a.com/x")
    assert text_score(make_action("click", uid="a"), load) == 0.0
    ti = make_action("textinput", uid="c", value="abc")
    assert text_score(make_action("textinput", uid="zzz", value="abd"), ti) == pytest.approx(0.38888888888888)


def test_turn_score_rules():
    ti = turn_score(make_action("textinput", uid="half", value="ab"), make_action("textinput", uid="c", value="ba"),
                    SNAP)
    assert (ti.element_score, ti.text_score, ti.turn_value) == (0.5, 0.5, 0.25)
    say = turn_score(make_action("click", uid="a"), make_action("say", speaker="navigator", utterance="x"), SNAP)
    assert say.turn_value == 0.0 and say.element_score is None
    click = turn_score(make_action("click", uid="b"), make_action("click", uid="a"), SNAP)
    assert click.turn_value == pytest.approx(0.142857142857, abs=1e-9)
    assert click.text_score is None
    miss = turn_score(None, make_action("load", url="https://a.com"), None)
    assert (miss.im, miss.turn_value) == (0, 0.0)
    with pytest.raises(ValueError):
        turn_score(None, make_action("scroll", x=0, y=1), SNAP)


def test_turn_value_zero_without_intent_match():
    rng = np.random.default_rng(9)
    evaluated = {"click", "load", "say", "submit", "textinput"}
    n = 0
    while n < 500:
        ref = random_action(rng)
        if ref.intent.value not in evaluated:
            continue
        pred = random_action(rng)
        s = turn_score(pred, ref, SNAP)
        assert 0.0 <= s.turn_value <= 1.0
        if s.im == 0:
            assert s.turn_value == 0.0
        n += 1


def ts(intent, value, el=None, tx=None, im=1):
    return TurnScore("d", 0, intent, im, el, tx, value)


def test_aggregate_examples():
    rep = aggregate([ts("click", 1.0, el=1.0), ts("click", 0.5, el=0.5), ts("say", 0.0, tx=0.0, im=0)])
    assert rep.overall == 0.5
    assert rep.im_rate == pytest.approx(2 / 3)
    assert rep.per_intent["click"] == {"n": 2, "im": 1.0, "score": 0.75, "iou": 0.75}
    assert rep.per_intent["submit"]["n"] == 0 and rep.per_intent["submit"]["score"] is None

    single = aggregate([ts("say", 0.4, tx=0.4)])
    assert single.overall == 0.4 and single.tg_mean_f1 == 0.4
    assert single.eg_mean_iou is None

    perfect = aggregate([ts("textinput", 1.0, el=1.0, tx=1.0), ts("load", 1.0, tx=1.0)])
    cells = [perfect.overall, perfect.im_rate, perfect.eg_mean_iou, perfect.tg_mean_f1]
    cells += [v for row in perfect.per_intent.values() if row["n"] for k, v in row.items() if k != "n"]
    assert all(c == 1.0 for c in cells)
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_micro_average_composes(a, b):
    sa, sb = [ts("click", v, el=v) for v in a], [ts("load", v, tx=v) for v in b]
    whole = aggregate(sa + sb).overall
    parts = (aggregate(sa).overall * len(a) + aggregate(sb).overall * len(b)) / (len(a) + len(b))
    assert whole == pytest.approx(parts, abs=1e-12)


def test_report_serializations():
    rep = aggregate([ts("click", 1.0, el=1.0), ts("say", 0.25, tx=0.25)])
    d = json.loads(rep.to_json())
    assert set(d) == {"overall", "im", "eg_iou", "tg_f1", "n", "per_intent"}
    assert d["per_intent"]["say"]["f1"] == 0.25
    lines = rep.to_csv().splitlines()
    assert lines[0] == "intent,n,im,iou,f1,score"
    assert lines[-1] == "overall,2,1.000000,1.000000,0.250000,0.625000"
