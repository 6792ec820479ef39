from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linxkit import (
    TokenBudget,
    TokenCounter,
    Viewport,
    build_otr_input,
    iter_eval_turns,
    load_demonstration,
    make_action,
    parse_snapshot,
    render_candidate_line,
    truncate_to_budget,
    window_history,
)
from linxkit.demos import State
from linxkit.errors import MissingBBox, UnknownUid
from linxkit.otr import DEFAULT_COUNTER, HistoryWindow, render_html

from conftest import DEMOS
from oracles import truncate_exhaustive

COUNT = DEFAULT_COUNTER.count


def test_window_history_examples():
    utts = [f"u{i}" for i in range(1, 11)]
    assert window_history([], utts).utterances == ("u1", "u7", "u8", "u9", "u10")
    assert window_history([], utts[:3]).utterances == ("u1", "u2", "u3")
    acts = [make_action("click", uid="a"), make_action("click", uid="b")]
    assert window_history(acts, []).actions == tuple(acts)
    many = [make_action("scroll", x=0, y=i) for i in range(9)]
    assert window_history(many, [], w=5).actions == tuple(many[-5:])
    with pytest.raises(ValueError):
        window_history([], [], w=0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15), st.integers(1, 8))
def test_window_history_bounds(n_actions, n_utts, w):
    acts = [make_action("scroll", x=0, y=i) for i in range(n_actions)]
    utts = [f"u{i}" for i in range(n_utts)]
    h = window_history(acts, utts, w)
    assert len(h.actions) <= w and len(h.utterances) <= w
    assert list(h.actions) == acts[len(acts) - len(h.actions):]
    idx = [utts.index(u) for u in h.utterances]
    assert idx == sorted(idx)
    if utts:
        assert h.utterances[0] == utts[0]
        if w > 1:
            assert h.utterances[-1] == utts[-1]


def lengths_of(out):
    return [n for _, n in out]


def test_truncate_examples():
    assert lengths_of(truncate_to_budget([("a", 10), ("b", 50), ("c", 100)], 120)) == [10, 50, 60]
    assert lengths_of(truncate_to_budget([("a", 7), ("b", 7), ("c", 7)], 10)) == [4, 3, 3]
    same = [("a", 3), ("b", 4)]
    assert truncate_to_budget(same, 7) == same
    assert truncate_to_budget([], 0) == []
    assert lengths_of(truncate_to_budget([("a", 5)], 0)) == [0]
    with pytest.raises(ValueError):
        truncate_to_budget([("a", 1)], -1)


@settings(max_examples=500, deadline=None)
@given(st.lists(st.integers(0, 80), max_size=12), st.integers(0, 400))
def test_truncate_matches_oracle(lengths, limit):
    out = lengths_of(truncate_to_budget([(i, n) for i, n in enumerate(lengths)], limit))
    assert out == truncate_exhaustive(lengths, limit)
    assert sum(out) == min(limit, sum(lengths))
    if sum(lengths) > limit:
        t = max(t for t in range(max(lengths) + 1) if sum(min(n, t) for n in lengths) <= limit)
        # short items are untouched; long ones get T, or T + 1 from the leftover
        for o, n in zip(out, lengths):
            assert o == n if n <= t else o in (t, t + 1)


def test_token_counter():
    assert COUNT("") == 0
    assert COUNT('click(uid="a1")') == 8
    assert DEFAULT_COUNTER.head("one two three", 2) == "one two"
    assert DEFAULT_COUNTER.tail("/html/body/div", 2) == "/div"
    chars = TokenCounter("chars", lambda s: [(i, i + 1) for i in range(len(s))])
    assert chars.count("abc") == 3


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=40), st.text(max_size=40))
def test_counter_additive_over_space(a, b):
    assert COUNT(a + " " + b) == COUNT(a) + COUNT(b)


def test_candidate_line_small():
    snap = parse_snapshot({"uid": "r", "tag": "html", "children": [
        {"uid": "b", "tag": "button", "text": "OK", "bbox": {"x": 0, "y": 0, "width": 10, "height": 10}}]})
    line = render_candidate_line(snap["b"], snap)
    assert line == ("(uid = b) [[tag]] button [[xpath]] /html/button [[text]] OK "
                    "[[bbox]] x=0 y=0 width=10 height=10 [[attributes]]  [[children]] ")
    assert COUNT(line) <= 65


def test_candidate_line_truncates_xpath_from_the_front(page12):
    line = render_candidate_line(page12["btn1"], page12)
    assert COUNT(line) == 65
    assert "[[xpath]] div[2]/form/button [[text]]" in line


def test_candidate_line_huge_class(page12_json):
    cls = " ".join(f"c{i}" for i in range(500))
    page12_json["children"][1]["children"][0]["children"][0]["attributes"][1] = ["class", cls]
    snap = parse_snapshot(page12_json)
    el = snap["a1"]
    line = render_candidate_line(el, snap, 65)
    assert COUNT(line) <= 65
    assert "[[tag]] a [[xpath]]" in line
    assert "x=10 y=10 width=100 height=40" in line
    for key in ("[[text]]", "[[bbox]]", "[[attributes]]", "[[children]]"):
        assert key in line
    # sub-components: xpath, text, attributes, children; the rest of the line is fixed
    xpath, text, attrs = "/html/body/div[1]/a[1]", "Sign in", f'href="/login" class="{cls}"'
    sub = [COUNT(xpath), COUNT(text), COUNT(attrs), 0]
    fixed = COUNT(render_candidate_line(el, snap, 10 ** 6)) - sum(sub)
    want = truncate_exhaustive(sub, 65 - fixed)
    assert want[1] == sub[1] and want[2] < sub[2]
    assert line.split("[[xpath]] ")[1].split(" [[text]]")[0] == DEFAULT_COUNTER.tail(xpath, want[0])
    got_attrs = line.split("[[attributes]] ")[1].split(" [[children]]")[0]
    assert COUNT(got_attrs) == want[2]
    assert attrs.startswith(got_attrs)


def test_candidate_line_needs_bbox(page12):
    with pytest.raises(MissingBBox):
        render_candidate_line(page12["h0"], page12)


def tiny_state(dom=None, utterance="log me in"):
    return State("d", 1, dom, Viewport(1280, 720), utterance, HistoryWindow())


def test_build_no_truncation(page12):
    hist = window_history([make_action("click", uid="a1")], ["log me in"])
    otr = build_otr_input(tiny_state(page12), hist, ["btn1", "i1"])
    assert otr.sections["viewport"] == "viewport 1280x720"
    assert otr.sections["utterances"] == "log me in"
    assert otr.sections["actions"] == 'click(uid="a1")'
    # unused html/utterance/action budget flows to the candidates, so nothing is cut
    assert otr.sections["candidates"].splitlines() == [render_candidate_line(page12[u], page12, 10 ** 6)
                                                       for u in ("btn1", "i1")]
    assert 'input name="email" placeholder="Email"' in otr.sections["html"]
    assert otr.text.split("\n")[0] == otr.sections["html"]
    assert list(otr.to_dict()["sections"]) == ["html", "viewport", "utterances", "candidates", "actions"]


def test_build_without_dom():
    hist = window_history([make_action("say", speaker="instructor", utterance="hi")], ["hi"])
    otr = build_otr_input(State("d", 2, None, None, None, hist), hist, [])
    assert otr.sections["html"] == "" and otr.sections["candidates"] == ""
    assert otr.sections["utterances"] == "hi"
    assert otr.sections["actions"].startswith("say(")


def test_build_unknown_candidate(page12):
    with pytest.raises(UnknownUid):
        build_otr_input(tiny_state(page12), HistoryWindow(), ["ghost"])


def oversized_dom(n=10, words=300):
    kids = [{"uid": f"p{i}", "tag": "p", "bbox": {"x": 0, "y": 20 * i, "width": 600, "height": 20},
             "attributes": [["class", "para"]], "text": " ".join(f"w{i}x{j}" for j in range(words))}
            for i in range(n)]
    return parse_snapshot({"uid": "r0", "tag": "html", "children": [{"uid": "b0", "tag": "body", "children": kids}]},
                          Viewport(1280, 720))


def test_build_oversized_dom():
    dom = oversized_dom()
    assert COUNT(render_html(dom, 10 ** 9)) >= 3000
    utts = [f"utterance number {i} " + "blah " * 60 for i in range(8)]
    acts = [make_action("textinput", uid="p1", value="v " * 80) for _ in range(7)]
    hist = window_history(acts, utts)
    otr = build_otr_input(tiny_state(dom, None), hist, [f"p{i}" for i in range(10)])
    assert otr.token_counts["html"] <= 700
    assert otr.token_counts["utterances"] <= 40 * 5
    assert otr.token_counts["actions"] <= 50 * 5
    assert otr.token_counts["candidates"] <= 2048 - 700
    assert otr.total_tokens <= 2048
    assert len(otr.sections["candidates"].splitlines()) == 10


def test_budget_rollover(page12):
    hist = window_history([], ["short"])
    small = build_otr_input(tiny_state(page12, None), hist, ["b0"], TokenBudget(per_candidate=20))
    # body's line is longer than 20 tokens, but the unused html/utterance budget is passed on
    assert COUNT(small.sections["candidates"]) > 20
    assert small.limits["candidates"] > 20


def test_budget_config_errors():
    with pytest.raises(ValueError):
        TokenBudget(dom=0)
    with pytest.raises(ValueError):
        TokenBudget().check_fits(5, 5, 40)


def fixture_states():
    for demo_id in ("demo_mini_1", "demo_shop_2", "demo_big_3"):
        for turn, state in iter_eval_turns(load_demonstration(DEMOS, demo_id)):
            uids = [e.uid for e in state.dom.elements() if e.bbox is not None][:10] if state.dom else []
            yield state, uids


def test_build_deterministic_and_monotone():
    double = TokenBudget(4096, 1400, 80, 100, 130)
    for state, uids in fixture_states():
        a = build_otr_input(state, state.history, uids)
        b = build_otr_input(state, state.history, uids)
        assert a == b
        big = build_otr_input(state, state.history, uids, double)
        for name, text in a.sections.items():
            small_tokens = Counter(text[s:e] for s, e in DEFAULT_COUNTER.spans(text))
            big_text = big.sections[name]
            big_tokens = Counter(big_text[s:e] for s, e in DEFAULT_COUNTER.spans(big_text))
            assert not (small_tokens - big_tokens), name


def test_fixture_budgets():
    for state, uids in fixture_states():
        otr = build_otr_input(state, state.history, uids)
        assert otr.total_tokens <= 2048
        assert otr.token_counts["html"] <= 700
