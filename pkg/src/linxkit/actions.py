"""Action space, action-string parsing/serialization and URL segmentation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping
from urllib.parse import urlsplit

from .dom import DomSnapshot, element_at_point
from .errors import InvalidAction, NoParsableAction


class Intent(str, Enum):
    SAY = "say"
    CLICK = "click"
    HOVER = "hover"
    TEXTINPUT = "textinput"
    CHANGE = "change"
    LOAD = "load"
    SUBMIT = "submit"
    SCROLL = "scroll"
    COPY = "copy"
    PASTE = "paste"
    TABCREATE = "tabcreate"
    TABREMOVE = "tabremove"
    TABSWITCH = "tabswitch"

    def __str__(self) -> str:
        return self.value


EVALUATED_INTENTS = frozenset({Intent.CLICK, Intent.LOAD, Intent.SAY, Intent.SUBMIT, Intent.TEXTINPUT})
SPEAKERS = ("instructor", "navigator")

# Allowed argument sets per intent, keys in canonical (serialization) order.
SIGNATURES: dict[Intent, tuple[tuple[str, ...], ...]] = {
    Intent.SAY: (("speaker", "utterance"),),
    Intent.CLICK: (("uid",), ("x", "y")),
    Intent.HOVER: (("uid",), ("x", "y")),
    Intent.TEXTINPUT: (("uid", "value"),),
    Intent.CHANGE: (("uid", "value"),),
    Intent.LOAD: (("url",),),
    Intent.SUBMIT: (("uid",),),
    Intent.SCROLL: (("x", "y"),),
    Intent.COPY: (("uid", "text"),),
    Intent.PASTE: (("uid", "text"),),
    Intent.TABCREATE: ((),),
    Intent.TABREMOVE: (("target",),),
    Intent.TABSWITCH: (("origin", "target"),),
}
INT_ARGS = frozenset({"x", "y", "origin", "target"})

_INTENT_LOOKUP = {i.value: i for i in Intent}


@dataclass(frozen=True)
class Action:
    """An intent plus its named arguments.

    Construction validates the argument set against the intent's signature;
    an invalid combination raises InvalidAction.
    """

    intent: Intent
    args: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        intent = Intent(self.intent)
        object.__setattr__(self, "intent", intent)
        args = dict(self.args)
        keys = set(args)
        sig = next((s for s in SIGNATURES[intent] if set(s) == keys), None)
        if sig is None:
            want = " or ".join("(" + ",".join(s) + ")" for s in SIGNATURES[intent])
            raise InvalidAction(f"{intent.value} takes {want}, got ({','.join(sorted(keys))})")
        for k, v in args.items():
            if k in INT_ARGS:
                if not isinstance(v, int) or isinstance(v, bool):
                    raise InvalidAction(f"{intent.value}: argument {k} must be an integer")
            elif not isinstance(v, str):
                raise InvalidAction(f"{intent.value}: argument {k} must be a string")
        if intent is Intent.SAY and args["speaker"] not in SPEAKERS:
            raise InvalidAction(f"say: speaker must be one of {SPEAKERS}")
        object.__setattr__(self, "args", {k: args[k] for k in sig})

    def __hash__(self):
        return hash((self.intent, tuple(self.args.items())))

    def __getitem__(self, key: str) -> Any:
        return self.args[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.args.get(key, default)

    @property
    def uid(self) -> str | None:
        return self.args.get("uid")

    @property
    def has_element(self) -> bool:
        return "uid" in self.args or (self.intent in (Intent.CLICK, Intent.HOVER) and "x" in self.args)

    def __str__(self) -> str:
        return serialize_action(self)


def make_action(intent: Intent | str, **args) -> Action:
    return Action(Intent(intent), args)


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_action(a: Action) -> str:
    """Canonical ``intent(key="value",...)`` form; integer arguments are unquoted."""
    parts = []
    for k, v in a.args.items():
        parts.append(f"{k}={v}" if k in INT_ARGS else f"{k}={_quote(v)}")
    return f"{a.intent.value}({','.join(parts)})"


_CALL_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(")
_KEY_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*")
_INT_RE = re.compile(r"-?\d+")
_WS_RE = re.compile(r"\s*")


def _read_string(raw: str, pos: int) -> tuple[str, int] | None:
    quote = raw[pos]
    out = []
    i = pos + 1
    n = len(raw)
    while i < n:
        ch = raw[i]
        if ch == "\\" and i + 1 < n and raw[i + 1] in (quote, "\\"):
            out.append(raw[i + 1])
            i += 2
        elif ch == quote:
            return "".join(out), i + 1
        else:
            out.append(ch)
            i += 1
    return None


def _read_args(raw: str, pos: int) -> tuple[dict, int] | None:
    """Parse ``key=value, ...)`` starting right after an opening paren."""
    args: dict[str, Any] = {}
    pos = _WS_RE.match(raw, pos).end()
    if raw.startswith(")", pos):
        return args, pos + 1
    while True:
        m = _KEY_RE.match(raw, pos)
        if not m:
            return None
        key = m.group(1)
        pos = m.end()
        if pos >= len(raw):
            return None
        if raw[pos] in "\"'":
            got = _read_string(raw, pos)
            if got is None:
                return None
            value, pos = got
        else:
            m = _INT_RE.match(raw, pos)
            if not m:
                return None
            value, pos = int(m.group()), m.end()
        if key in args:
            return None
        args[key] = value
        pos = _WS_RE.match(raw, pos).end()
        if raw.startswith(",", pos):
            pos += 1
        elif raw.startswith(")", pos):
            return args, pos + 1
        else:
            return None


def _coerce(args: dict) -> dict:
    out = {}
    for k, v in args.items():
        if k in INT_ARGS and isinstance(v, str) and _INT_RE.fullmatch(v.strip()):
            v = int(v.strip())
        elif k not in INT_ARGS and isinstance(v, int):
            v = str(v)
        out[k] = v
    return out


def parse_action_string(raw: str, agent: bool = False) -> Action:
    """Return the first well-formed action call found in ``raw``.

    The text is scanned left to right; prose, markup and later calls are
    ignored. With ``agent=True`` a ``say`` whose speaker is the instructor
    is skipped, since agents may only speak as the navigator.
    """
    for m in _CALL_RE.finditer(raw):
        intent = _INTENT_LOOKUP.get(m.group(1).lower())
        if intent is None:
            continue
        got = _read_args(raw, m.end())
        if got is None:
            continue
        try:
            action = Action(intent, _coerce(got[0]))
        except InvalidAction:
            continue
        if agent and intent is Intent.SAY and action["speaker"] != "navigator":
            continue
        return action
    raise NoParsableAction(f"no valid action call in {raw[:80]!r}")


@dataclass(frozen=True)
class UrlSegments:
    netloc: str
    path_segments: tuple[str, ...] = ()

    def bag(self) -> list[str]:
        return ([self.netloc] if self.netloc else []) + list(self.path_segments)

    def to_url(self) -> str:
        path = [s for s in self.path_segments if not s.startswith(("?", "#"))]
        tail = "".join(s for s in self.path_segments if s.startswith(("?", "#")))
        return "https://" + self.netloc + "/" + "/".join(path) + tail


def _strip_www(netloc: str) -> str:
    while netloc.startswith("www."):
        netloc = netloc[4:]
    return netloc


def segment_url(url: str) -> UrlSegments:
    """Split a URL into a normalized network location and path segments.

    The scheme is dropped and leading ``www.`` removed from the host. Path
    pieces are split on ``/`` with empty pieces discarded; a non-empty query
    and fragment are appended as ``?query`` and ``#fragment``.
    """
    url = url.strip()
    if "://" not in url and not url.startswith("//"):
        url = "//" + url
    try:
        parts = urlsplit(url)
    except ValueError:
        return UrlSegments(_strip_www(url.split("://", 1)[-1].lstrip("/")))
    segs = [s for s in parts.path.split("/") if s]
    if parts.query:
        segs.append("?" + parts.query)
    if parts.fragment:
        segs.append("#" + parts.fragment)
    return UrlSegments(_strip_www(parts.netloc), tuple(segs))


def resolve_element_arg(a: Action, snap: DomSnapshot) -> str:
    """uid targeted by ``a``; coordinate targets map to the smallest element under the point."""
    if "uid" in a.args:
        snap[a.args["uid"]]
        return a.args["uid"]
    if "x" in a.args and a.intent in (Intent.CLICK, Intent.HOVER):
        return element_at_point(snap, a.args["x"], a.args["y"])
    raise InvalidAction(f"{a.intent.value} has no element argument")
