"""Recorded demonstrations on disk: loading, validation and evaluation-turn iteration.

Layout of one demonstration directory::

    <root>/<demo_id>/metadata.json     free-form object
    <root>/<demo_id>/turns.json        array of turn objects (see below)
    <root>/<demo_id>/doms/<turn>.json  DOM snapshot per turn
    <root>/<demo_id>/screenshots/<turn>.png   never opened

A turn object is ``{index, kind, speaker?, action, state?}`` where ``kind``
is ``chat`` or ``browser``, ``action`` is an action string and ``state`` is
``{dom?, screenshot?, viewport: {width, height}, utterance?}`` with asset
paths relative to the demonstration directory. Chat turns carry a ``say``
action for the speaker. Split manifests live in ``<root>/splits.json`` as a
map from split name to a list of demo ids.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .actions import EVALUATED_INTENTS, Action, Intent, parse_action_string, serialize_action
from .dom import DomSnapshot, Viewport, parse_snapshot
from .errors import DanglingAssetRef, LinxError, MissingFile, SchemaViolation
from .otr import HistoryWindow, window_history

SPLIT_NAMES = ("train", "valid", "test_iid", "test_web", "test_cat", "test_geo", "test_vis")
TURN_KINDS = ("chat", "browser")


@dataclass(frozen=True)
class StateRef:
    dom_path: str | None = None
    screenshot_path: str | None = None
    viewport: Viewport | None = None
    utterance: str | None = None


@dataclass(frozen=True)
class Turn:
    index: int
    kind: str
    action: Action
    speaker: str | None = None
    state_ref: StateRef | None = None


@dataclass(frozen=True)
class Demonstration:
    id: str
    turns: tuple[Turn, ...]
    metadata: dict[str, Any] = field(default_factory=dict)
    directory: Path | None = field(default=None, compare=False)

    def resolve(self, relpath: str) -> Path:
        return (self.directory or Path(".")) / relpath

    def load_dom(self, turn: Turn) -> DomSnapshot | None:
        ref = turn.state_ref
        if ref is None or ref.dom_path is None:
            return None
        path = self.resolve(ref.dom_path)
        if not path.is_file():
            raise DanglingAssetRef(f"{self.id} turn {turn.index}: {ref.dom_path} does not exist")
        return parse_snapshot(path.read_bytes(), ref.viewport)


@dataclass(frozen=True)
class ValidationIssue:
    turn_index: int | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = "demo" if self.turn_index is None else f"turn {self.turn_index}"
        return f"{where}: {self.rule}: {self.message}"


@dataclass(frozen=True)
class State:
    """Everything known when the action of one turn is taken."""

    demo_id: str
    turn_index: int
    dom: DomSnapshot | None
    viewport: Viewport | None
    utterance: str | None
    history: HistoryWindow
    screenshot_path: Path | None = None


def _read_json(path: Path):
    if not path.is_file():
        raise MissingFile(f"missing {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(str(path), f"invalid JSON: {exc}") from exc


def _opt_str(obj: dict, key: str, where: str) -> str | None:
    v = obj.get(key)
    if v is not None and not isinstance(v, str):
        raise SchemaViolation(f"{where}.{key}", "must be a string")
    return v


def _parse_state(obj, where: str) -> StateRef:
    if not isinstance(obj, dict):
        raise SchemaViolation(where, "must be an object")
    vp = None
    if obj.get("viewport") is not None:
        v = obj["viewport"]
        try:
            vp = Viewport(int(v["width"]), int(v["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"{where}.viewport", "needs positive integer width and height") from exc
    return StateRef(_opt_str(obj, "dom", where), _opt_str(obj, "screenshot", where), vp,
                    _opt_str(obj, "utterance", where))


def _parse_turn(obj, where: str) -> Turn:
    if not isinstance(obj, dict):
        raise SchemaViolation(where, "turn must be an object")
    index = obj.get("index")
    if not isinstance(index, int) or isinstance(index, bool):
        raise SchemaViolation(f"{where}.index", "must be an integer")
    kind = obj.get("kind")
    if kind not in TURN_KINDS:
        raise SchemaViolation(f"{where}.kind", f"must be one of {TURN_KINDS}")
    raw = obj.get("action")
    if not isinstance(raw, str):
        raise SchemaViolation(f"{where}.action", "must be an action string")
    try:
        action = parse_action_string(raw)
    except LinxError as exc:
        raise SchemaViolation(f"{where}.action", str(exc)) from exc
    if serialize_action(action) != raw.strip():
        raise SchemaViolation(f"{where}.action", "must be a single canonical action string")
    speaker = _opt_str(obj, "speaker", where)
    state = _parse_state(obj["state"], f"{where}.state") if obj.get("state") is not None else None
    return Turn(index, kind, action, speaker, state)


def load_demonstration(root, demo_id: str, strict: bool = True) -> Demonstration:
    """Load ``<root>/<demo_id>``.

    With ``strict`` (the default) a DOM path that does not exist raises
    DanglingAssetRef; otherwise it is left for validate_demonstration to
    report.
    """
    directory = Path(root) / demo_id
    if not directory.is_dir():
        raise MissingFile(f"no demonstration directory {directory}")
    metadata = _read_json(directory / "metadata.json")
    if not isinstance(metadata, dict):
        raise SchemaViolation("metadata.json", "must be an object")
    turns_raw = _read_json(directory / "turns.json")
    if not isinstance(turns_raw, list):
        raise SchemaViolation("turns.json", "must be an array")
    turns = []
    seen = set()
    for i, obj in enumerate(turns_raw):
        t = _parse_turn(obj, f"turns[{i}]")
        if t.index in seen:
            raise SchemaViolation(f"turns[{i}].index", f"duplicate turn index {t.index}")
        seen.add(t.index)
        turns.append(t)
    demo = Demonstration(demo_id, tuple(turns), metadata, directory)
    if strict:
        for t in turns:
            ref = t.state_ref
            if ref is not None and ref.dom_path is not None and not demo.resolve(ref.dom_path).is_file():
                raise DanglingAssetRef(f"{demo_id} turn {t.index}: {ref.dom_path} does not exist")
    return demo


def validate_demonstration(d: Demonstration) -> list[ValidationIssue]:
    issues = []
    for pos, t in enumerate(d.turns, start=1):
        if t.index != pos:
            issues.append(ValidationIssue(t.index, "INDEX_NOT_CONTIGUOUS", f"expected index {pos}"))
        if t.kind == "chat":
            if t.action.intent is not Intent.SAY:
                issues.append(ValidationIssue(t.index, "CHAT_NOT_SAY", f"chat turn has {t.action.intent.value}"))
            if t.speaker not in ("instructor", "navigator"):
                issues.append(ValidationIssue(t.index, "CHAT_SPEAKER_MISSING", "chat turn needs a speaker"))
            elif t.action.intent is Intent.SAY and t.action["speaker"] != t.speaker:
                issues.append(ValidationIssue(t.index, "SAY_SPEAKER_MISMATCH",
                                              f"turn speaker {t.speaker} but action speaker {t.action['speaker']}"))
        else:
            if t.speaker == "instructor":
                issues.append(ValidationIssue(t.index, "SPEAKER_ON_BROWSER_TURN",
                                              "instructor speaker on a browser turn"))
            if t.action.intent is Intent.SAY:
                issues.append(ValidationIssue(t.index, "SAY_ON_BROWSER_TURN", "say action on a browser turn"))
            if t.state_ref is None or t.state_ref.dom_path is None:
                issues.append(ValidationIssue(t.index, "MISSING_DOM", "browser turn without a DOM snapshot"))
        ref = t.state_ref
        if ref is not None:
            for label, path in (("dom", ref.dom_path), ("screenshot", ref.screenshot_path)):
                if path is not None and not d.resolve(path).is_file():
                    issues.append(ValidationIssue(t.index, "DANGLING_ASSET", f"{label} {path} does not exist"))
    return issues


def is_navigator_turn(t: Turn) -> bool:
    return t.kind == "browser" or t.speaker == "navigator"


def is_eval_turn(t: Turn) -> bool:
    if t.action.intent not in EVALUATED_INTENTS:
        return False
    if t.action.intent is Intent.SAY:
        return t.kind == "chat" and t.speaker == "navigator" and t.action["speaker"] == "navigator"
    return is_navigator_turn(t)


def iter_eval_turns(d: Demonstration, w: int = 5, load_dom: bool = True) -> list[tuple[Turn, State]]:
    """Navigator turns with an evaluated intent, each paired with its state.

    The state carries the most recent DOM/viewport recorded at or before the
    turn and a history window over all earlier turns, including the ones
    that are never evaluated (scroll, change, tab actions...).
    """
    out = []
    actions: list[Action] = []
    utterances: list[str] = []
    dom_turn: Turn | None = None
    viewport = None
    screenshot = None
    for t in d.turns:
        ref = t.state_ref
        if ref is not None:
            if ref.dom_path is not None:
                dom_turn = t
            if ref.viewport is not None:
                viewport = ref.viewport
            if ref.screenshot_path is not None:
                screenshot = d.resolve(ref.screenshot_path)
        if is_eval_turn(t):
            dom = d.load_dom(dom_turn) if (load_dom and dom_turn is not None) else None
            if dom is not None and dom.viewport is None and viewport is not None:
                dom = DomSnapshot(dom.root, viewport)
            state = State(d.id, t.index, dom, viewport, ref.utterance if ref else None,
                          window_history(actions, utterances, w), screenshot)
            out.append((t, state))
        actions.append(t.action)
        if t.action.intent is Intent.SAY and t.action["speaker"] == "instructor":
            utterances.append(t.action["utterance"])
    return out


def _turn_to_dict(t: Turn) -> dict:
    out: dict[str, Any] = {"index": t.index, "kind": t.kind}
    if t.speaker is not None:
        out["speaker"] = t.speaker
    out["action"] = serialize_action(t.action)
    if t.state_ref is not None:
        ref = t.state_ref
        st: dict[str, Any] = {}
        if ref.dom_path is not None:
            st["dom"] = ref.dom_path
        if ref.screenshot_path is not None:
            st["screenshot"] = ref.screenshot_path
        if ref.viewport is not None:
            st["viewport"] = {"width": ref.viewport.width, "height": ref.viewport.height}
        if ref.utterance is not None:
            st["utterance"] = ref.utterance
        out["state"] = st
    return out


def write_demonstration(d: Demonstration, root) -> Path:
    """Write ``d`` under ``<root>/<d.id>``, copying referenced assets when the source differs."""
    dest = Path(root) / d.id
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "metadata.json").write_text(json.dumps(d.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (dest / "turns.json").write_text(json.dumps([_turn_to_dict(t) for t in d.turns], indent=2, ensure_ascii=False)
                                     + "\n", encoding="utf-8")
    if d.directory is not None and d.directory.resolve() != dest.resolve():
        for t in d.turns:
            ref = t.state_ref
            for rel in (ref.dom_path, ref.screenshot_path) if ref else ():
                if rel is not None and d.resolve(rel).is_file():
                    (dest / rel).parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(d.resolve(rel), dest / rel)
    return dest


@dataclass(frozen=True)
class SplitManifest:
    name: str
    demo_ids: tuple[str, ...]


def load_splits(root) -> dict[str, SplitManifest]:
    root = Path(root)
    raw = _read_json(root / "splits.json")
    if not isinstance(raw, dict):
        raise SchemaViolation("splits.json", "must map split names to id lists")
    out = {}
    for name, ids in raw.items():
        if name not in SPLIT_NAMES:
            raise SchemaViolation(f"splits.json.{name}", f"unknown split; expected one of {SPLIT_NAMES}")
        if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
            raise SchemaViolation(f"splits.json.{name}", "must be a list of demo ids")
        if len(set(ids)) != len(ids):
            raise SchemaViolation(f"splits.json.{name}", "demo ids must be unique")
        for i in ids:
            if not (root / i).is_dir():
                raise MissingFile(f"split {name}: demonstration {i} not found under {root}")
        out[name] = SplitManifest(name, tuple(ids))
    return out


def list_demo_ids(root) -> list[str]:
    """Sorted ids of every directory under ``root`` that holds a ``turns.json``."""
    return sorted(p.name for p in Path(root).iterdir() if (p / "turns.json").is_file())
