"""Turn-level action metrics and micro-averaged reports.

Every metric is gated by intent match: a prediction with the wrong intent
(or one that could not be parsed) scores 0 on every component.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

from .actions import EVALUATED_INTENTS, Action, Intent, resolve_element_arg, segment_url
from .dom import BoundingBox, DomSnapshot
from .errors import InvalidAction, LinxError

ELEMENT_GROUP = frozenset({Intent.CLICK, Intent.TEXTINPUT, Intent.SUBMIT})
TEXT_GROUP = frozenset({Intent.LOAD, Intent.SAY, Intent.TEXTINPUT})
CHRF_ORDER = 6

# Marker for a prediction that failed to parse.
INVALID = None


def intent_match(pred: Action | None, ref: Action) -> int:
    if pred is None:
        return 0
    return int(pred.intent == ref.intent)


def iou(pred_box: BoundingBox, ref_box: BoundingBox) -> float:
    iw = min(pred_box.x + pred_box.width, ref_box.x + ref_box.width) - max(pred_box.x, ref_box.x)
    ih = min(pred_box.y + pred_box.height, ref_box.y + ref_box.height) - max(pred_box.y, ref_box.y)
    inter = max(iw, 0) * max(ih, 0)
    union = pred_box.area + ref_box.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def _char_ngrams(s: str, n: int) -> Counter:
    return Counter(s[i:i + n] for i in range(len(s) - n + 1))


def chrf(pred_text: str, ref_text: str, order: int = CHRF_ORDER) -> float:
    """Character n-gram F1 averaged over orders 1..order.

    Whitespace is removed first. Orders where neither side has an n-gram
    are skipped; two empty strings score 1.
    """
    hyp = "".join(pred_text.split())
    ref = "".join(ref_text.split())
    if not hyp and not ref:
        return 1.0
    total = Fraction(0)
    used = 0
    for n in range(1, order + 1):
        h, r = _char_ngrams(hyp, n), _char_ngrams(ref, n)
        nh, nr = sum(h.values()), sum(r.values())
        if nh + nr == 0:
            continue
        used += 1
        match = sum((h & r).values())
        # 2PR/(P+R) with P = match/nh, R = match/nr reduces to 2*match/(nh+nr)
        total += Fraction(2 * match, nh + nr)
    return float(total / used)


def urlf(pred_url: str, ref_url: str) -> float:
    """Bag-of-segments F1 between two URLs (host plus path segments)."""
    p = Counter(segment_url(pred_url).bag()) if pred_url else Counter()
    r = Counter(segment_url(ref_url).bag()) if ref_url else Counter()
    np_, nr = sum(p.values()), sum(r.values())
    if np_ + nr == 0:
        return 1.0
    return 2 * sum((p & r).values()) / (np_ + nr)


def _element_iou(pred: Action, ref: Action, snap: DomSnapshot | None) -> float:
    if snap is None or not pred.has_element:
        return 0.0
    try:
        ref_uid = resolve_element_arg(ref, snap)
        pred_uid = resolve_element_arg(pred, snap)
    except (LinxError, InvalidAction):
        return 0.0
    if pred_uid == ref_uid:
        return 1.0
    pb, rb = snap[pred_uid].bbox, snap[ref_uid].bbox
    if pb is None or rb is None:
        return 0.0
    return iou(pb, rb)


def element_score(pred: Action | None, ref: Action, snap: DomSnapshot | None) -> float:
    if not intent_match(pred, ref):
        return 0.0
    return _element_iou(pred, ref, snap)


def _text_f1(pred: Action, ref: Action) -> float:
    if ref.intent is Intent.LOAD:
        return urlf(pred["url"], ref["url"])
    key = "utterance" if ref.intent is Intent.SAY else "value"
    return chrf(pred[key], ref[key])


def text_score(pred: Action | None, ref: Action) -> float:
    if not intent_match(pred, ref):
        return 0.0
    return _text_f1(pred, ref)


@dataclass(frozen=True)
class TurnScore:
    demo_id: str
    turn_index: int
    intent: str
    im: int
    element_score: float | None
    text_score: float | None
    turn_value: float

    def to_dict(self) -> dict:
        return asdict(self)


def turn_score(pred: Action | None, ref: Action, snap: DomSnapshot | None,
               demo_id: str = "", turn_index: int = 0) -> TurnScore:
    if ref.intent not in EVALUATED_INTENTS:
        raise ValueError(f"intent {ref.intent.value} is not evaluated")
    im = intent_match(pred, ref)
    el = tx = None
    if ref.intent in ELEMENT_GROUP:
        el = _element_iou(pred, ref, snap) if im else 0.0
    if ref.intent in TEXT_GROUP:
        tx = _text_f1(pred, ref) if im else 0.0
    if ref.intent is Intent.TEXTINPUT:
        value = im * el * tx
    else:
        value = el if el is not None else tx
    return TurnScore(demo_id, turn_index, ref.intent.value, im, el, tx, float(value))


def _mean(xs: Sequence[float]) -> float | None:
    return sum(xs) / len(xs) if xs else None


@dataclass(frozen=True)
class ScoreReport:
    overall: float
    im_rate: float
    eg_mean_iou: float | None
    tg_mean_f1: float | None
    n_turns: int
    per_intent: dict

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "im": self.im_rate,
            "eg_iou": self.eg_mean_iou,
            "tg_f1": self.tg_mean_f1,
            "n": self.n_turns,
            "per_intent": self.per_intent,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["intent", "n", "im", "iou", "f1", "score"])
        fmt = lambda v: "" if v is None else f"{v:.6f}"
        for intent in sorted(self.per_intent):
            row = self.per_intent[intent]
            w.writerow([intent, row["n"], fmt(row["im"]), fmt(row.get("iou")), fmt(row.get("f1")), fmt(row["score"])])
        w.writerow(["overall", self.n_turns, fmt(self.im_rate), fmt(self.eg_mean_iou), fmt(self.tg_mean_f1),
                    fmt(self.overall)])
        return buf.getvalue()


def aggregate(scores: Sequence[TurnScore]) -> ScoreReport:
    """Micro-average turn scores across all demonstrations."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    per_intent = {}
    for intent in sorted(i.value for i in EVALUATED_INTENTS):
        rows = [s for s in scores if s.intent == intent]
        cell = {"n": len(rows), "im": _mean([s.im for s in rows]), "score": _mean([s.turn_value for s in rows])}
        if Intent(intent) in ELEMENT_GROUP:
            cell["iou"] = _mean([s.element_score for s in rows])
        if Intent(intent) in TEXT_GROUP:
            cell["f1"] = _mean([s.text_score for s in rows])
        per_intent[intent] = cell
    return ScoreReport(
        overall=sum(s.turn_value for s in scores) / len(scores),
        im_rate=sum(s.im for s in scores) / len(scores),
        eg_mean_iou=_mean([s.element_score for s in scores if s.element_score is not None]),
        tg_mean_f1=_mean([s.text_score for s in scores if s.text_score is not None]),
        n_turns=len(scores),
        per_intent=per_intent,
    )
