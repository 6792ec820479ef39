"""Text representation of a navigation state under per-section token budgets.

A rendered state has five sections, always in this order: ``html`` (the
pruned DOM with attributes), ``viewport``, ``utterances``, ``candidates``
and ``actions``. Each budgeted section is split into sub-components that
are shortened with a shared length threshold, so long pieces lose tokens
before short ones do. Budget left unused by the other sections goes to the
candidates, which are rendered last.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .actions import Action, serialize_action
from .dom import DomElement, DomSnapshot, prune_to_candidates, xpath_of
from .errors import BudgetExceeded, MissingBBox

SECTIONS = ("html", "viewport", "utterances", "candidates", "actions")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def _default_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class TokenCounter:
    """Pluggable tokenizer given as a function returning token ``(start, end)`` spans."""

    name: str = "words+punct"
    spans: Callable[[str], list[tuple[int, int]]] = _default_spans

    def count(self, text: str) -> int:
        return len(self.spans(text)) if text else 0

    def head(self, text: str, n: int) -> str:
        """Prefix of ``text`` holding its first ``n`` tokens."""
        if n <= 0:
            return ""
        sp = self.spans(text)
        if n >= len(sp):
            return text
        return text[: sp[n - 1][1]]

    def tail(self, text: str, n: int) -> str:
        """Suffix of ``text`` holding its last ``n`` tokens."""
        if n <= 0:
            return ""
        sp = self.spans(text)
        if n >= len(sp):
            return text
        return text[sp[-n][0]:]


DEFAULT_COUNTER = TokenCounter()


@dataclass(frozen=True)
class TokenBudget:
    total: int = 2048
    dom: int = 700
    per_utterance: int = 40
    per_action: int = 50
    per_candidate: int = 65

    def __post_init__(self):
        for name in ("total", "dom", "per_utterance", "per_action", "per_candidate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"budget {name} must be positive")

    def check_fits(self, n_utterances: int, n_actions: int, n_candidates: int) -> None:
        need = (self.dom + self.per_utterance * n_utterances + self.per_action * n_actions
                + self.per_candidate * n_candidates)
        if need > self.total:
            raise ValueError(f"component budgets ({need}) exceed total budget ({self.total})")


@dataclass(frozen=True)
class HistoryWindow:
    actions: tuple[Action, ...] = ()
    utterances: tuple[str, ...] = ()
    w: int = 5


def window_history(all_actions: Sequence[Action], all_utterances: Sequence[str], w: int = 5) -> HistoryWindow:
    """Last ``w`` actions; the first utterance plus the last ``w - 1`` utterances."""
    if w < 1:
        raise ValueError("window size must be >= 1")
    actions = tuple(all_actions[-w:])
    n = len(all_utterances)
    if n <= w:
        utterances = tuple(all_utterances)
    else:
        keep = [0] + list(range(n - (w - 1), n))
        utterances = tuple(all_utterances[i] for i in keep)
    return HistoryWindow(actions, utterances, w)


def truncate_to_budget(subcomponents: Sequence[tuple[object, int]], limit: int) -> list[tuple[object, int]]:
    """Assign each sub-component an allowed length so that the total fits ``limit``.

    Finds the largest threshold T with sum(min(len, T)) <= limit by walking
    the sorted lengths, caps every length at T, then hands leftover tokens
    out one at a time (in input order) to the sub-components that were cut.
    """
    if limit < 0:
        raise ValueError("limit must be >= 0")
    lengths = [n for _, n in subcomponents]
    if any(n < 0 for n in lengths):
        raise ValueError("lengths must be >= 0")
    if sum(lengths) <= limit:
        return list(subcomponents)
    ordered = sorted(lengths)
    k = len(ordered)
    consumed = 0
    threshold = ordered[-1]
    for i, n in enumerate(ordered):
        remaining = k - i
        if consumed + n * remaining > limit:
            threshold = (limit - consumed) // remaining
            break
        consumed += n
    allowed = [min(n, threshold) for n in lengths]
    leftover = limit - sum(allowed)
    for i, n in enumerate(lengths):
        if leftover == 0:
            break
        if n > threshold:
            allowed[i] += 1
            leftover -= 1
    return [(sid, a) for (sid, _), a in zip(subcomponents, allowed)]


@dataclass
class _Piece:
    text: str
    trunc: bool = False
    keep_tail: bool = False


def _layout(pieces: list[_Piece], limit: int, counter: TokenCounter) -> tuple[str, bool]:
    """Join pieces, shrinking truncatable ones to fit ``limit``.

    Returns the text and whether the fixed pieces alone fit the limit.
    """
    fixed = sum(counter.count(p.text) for p in pieces if not p.trunc)
    idx = [i for i, p in enumerate(pieces) if p.trunc]
    if fixed > limit:
        return "".join(p.text for p in pieces if not p.trunc), False
    alloc = truncate_to_budget([(i, counter.count(pieces[i].text)) for i in idx], limit - fixed)
    out = [p.text for p in pieces]
    for i, n in alloc:
        p = pieces[i]
        if counter.count(p.text) > n:
            out[i] = counter.tail(p.text, n) if p.keep_tail else counter.head(p.text, n)
    return "".join(out), True


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.2f}".rstrip("0")


def _attr_text(el: DomElement) -> str:
    return " ".join(f'{k}="{v}"' for k, v in el.attributes)


def _candidate_pieces(el: DomElement, snap: DomSnapshot) -> list[_Piece]:
    if el.bbox is None:
        raise MissingBBox(f"element {el.uid!r} has no bounding box")
    b = el.bbox
    return [
        _Piece(f"(uid = {el.uid}) [[tag]] {el.tag} [[xpath]] "),
        _Piece(xpath_of(snap, el.uid), trunc=True, keep_tail=True),
        _Piece(" [[text]] "),
        _Piece(el.text, trunc=True),
        _Piece(f" [[bbox]] x={_num(b.x)} y={_num(b.y)} width={_num(b.width)} height={_num(b.height)}"
               " [[attributes]] "),
        _Piece(_attr_text(el), trunc=True),
        _Piece(" [[children]] "),
        _Piece(" ".join(c.tag for c in el.children), trunc=True),
    ]


def render_candidate_line(el: DomElement, snap: DomSnapshot, budget: int = 65,
                          counter: TokenCounter = DEFAULT_COUNTER) -> str:
    """One candidate line; xpath/text/attributes/children shrink first, tag and box never do."""
    text, _ = _layout(_candidate_pieces(el, snap), budget, counter)
    return text


def _html_pieces(root: DomElement) -> list[_Piece]:
    pieces: list[_Piece] = []

    def walk(el: DomElement):
        pieces.append(_Piece(el.tag))
        for k, v in el.attributes:
            pieces.append(_Piece(f' {k}="'))
            pieces.append(_Piece(v, trunc=True))
            pieces.append(_Piece('"'))
        if el.text:
            pieces.append(_Piece(" "))
            pieces.append(_Piece(el.text, trunc=True))
        if el.children:
            pieces.append(_Piece("("))
            for i, c in enumerate(el.children):
                if i:
                    pieces.append(_Piece(" "))
                walk(c)
            pieces.append(_Piece(")"))

    walk(root)
    return pieces


def render_html(snap: DomSnapshot, budget: int, counter: TokenCounter = DEFAULT_COUNTER) -> str:
    """Render a (pruned) tree as ``tag k="v" text(children...)``.

    Only attribute values and text are shortened. If the bare structure
    alone is over budget the rendering is cut at the token limit.
    """
    text, ok = _layout(_html_pieces(snap.root), budget, counter)
    if not ok or counter.count(text) > budget:
        text = counter.head(text, budget)
    return text


def _render_items(items: Sequence[str], limit: int, counter: TokenCounter) -> str:
    if not items:
        return ""
    pieces = []
    for i, s in enumerate(items):
        if i:
            pieces.append(_Piece("\n"))
        pieces.append(_Piece(s, trunc=True))
    text, _ = _layout(pieces, limit, counter)
    if counter.count(text) > limit:
        text = counter.head(text, limit)
    return text


def state_utterances(state, history: HistoryWindow) -> list[str]:
    """History utterances, plus the state's own utterance when not already last."""
    utts = list(history.utterances)
    u = getattr(state, "utterance", None)
    if u and (not utts or utts[-1] != u):
        utts.append(u)
    return utts


@dataclass(frozen=True)
class OtrInput:
    sections: dict[str, str]
    token_counts: dict[str, int]
    limits: dict[str, int] = field(default_factory=dict)

    @property
    def total_tokens(self) -> int:
        return sum(self.token_counts.values())

    @property
    def text(self) -> str:
        return "\n".join(self.sections[s] for s in SECTIONS if self.sections[s])

    def to_dict(self) -> dict:
        return {"text": self.text, "sections": dict(self.sections), "token_counts": dict(self.token_counts)}


def _candidate_uids(candidates) -> list[str]:
    if candidates is None:
        return []
    if hasattr(candidates, "uids"):
        return list(candidates.uids())
    return list(candidates)


def build_otr_input(state, history: HistoryWindow, candidates, budget: TokenBudget = TokenBudget(),
                    counter: TokenCounter = DEFAULT_COUNTER) -> OtrInput:
    """Assemble all sections of a state within ``budget``.

    ``state`` needs ``dom`` (full snapshot or None), ``viewport`` and
    ``utterance`` attributes. ``candidates`` is a RankResult or a list of
    uids in rank order. Candidates without a bounding box cannot be
    rendered as candidate lines and are left to the html section.
    """
    dom: DomSnapshot | None = state.dom
    uids = _candidate_uids(candidates) if dom is not None else []
    for uid in uids:
        dom[uid]
    utts = state_utterances(state, history)
    acts = [serialize_action(a) for a in history.actions]
    budget.check_fits(len(utts), len(acts), len(uids))

    sections = dict.fromkeys(SECTIONS, "")
    limits = {}
    vp = state.viewport
    if vp is not None:
        sections["viewport"] = f"viewport {vp.width}x{vp.height}"

    saved = 0
    if dom is not None:
        limits["html"] = budget.dom
        pruned = prune_to_candidates(dom, uids)
        sections["html"] = render_html(pruned, budget.dom, counter)
        saved += budget.dom - counter.count(sections["html"])
    limits["utterances"] = budget.per_utterance * len(utts)
    sections["utterances"] = _render_items(utts, limits["utterances"], counter)
    saved += limits["utterances"] - counter.count(sections["utterances"])
    limits["actions"] = budget.per_action * len(acts)
    sections["actions"] = _render_items(acts, limits["actions"], counter)
    saved += limits["actions"] - counter.count(sections["actions"])

    if dom is not None:
        els = [dom[u] for u in uids if dom[u].bbox is not None]
        limit = budget.per_candidate * len(els) + saved
        limits["candidates"] = limit
        sections["candidates"] = _render_candidates(els, dom, limit, counter)

    counts = {s: counter.count(t) for s, t in sections.items()}
    limits["total"] = budget.total
    out = OtrInput(sections, counts, limits)
    check_budget(out)
    return out


def _render_candidates(els: list[DomElement], dom: DomSnapshot, limit: int, counter: TokenCounter) -> str:
    # drop trailing (lowest-ranked) candidates while fixed parts alone overflow
    while els:
        pieces = []
        for i, el in enumerate(els):
            if i:
                pieces.append(_Piece("\n"))
            pieces.extend(_candidate_pieces(el, dom))
        text, ok = _layout(pieces, limit, counter)
        if ok and counter.count(text) <= limit:
            return text
        if ok:
            return counter.head(text, limit)
        els = els[:-1]
    return ""


def check_budget(otr: OtrInput) -> None:
    """Raise BudgetExceeded if any section or the total is over its limit."""
    for name, limit in otr.limits.items():
        used = otr.total_tokens if name == "total" else otr.token_counts[name]
        if used > limit:
            raise BudgetExceeded(f"{name} uses {used} tokens, limit {limit}")

