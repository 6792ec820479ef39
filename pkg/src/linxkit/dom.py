"""DOM snapshots: parsing, uid indexing, xpaths, hit-testing and pruning.

A snapshot is stored on disk as one nested JSON object per element::

    {"uid": "a1", "tag": "div", "attributes": [["class", "x"]], "text": "",
     "bbox": {"x": 0, "y": 0, "width": 10, "height": 10}, "children": [...]}

``bbox`` may be omitted (or null) for elements that were not rendered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import DuplicateUid, NoElementAtPoint, SchemaViolation, UnknownUid


@dataclass(frozen=True)
class Viewport:
    width: int
    height: int

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"viewport dimensions must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise ValueError("bounding box width and height must be >= 0")

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, px: float, py: float) -> bool:
        # half-open: left/top inclusive, right/bottom exclusive
        return self.x <= px < self.x + self.width and self.y <= py < self.y + self.height

    def scaled(self, factor: float) -> "BoundingBox":
        return BoundingBox(self.x * factor, self.y * factor, self.width * factor, self.height * factor)


@dataclass(frozen=True)
class DomElement:
    uid: str
    tag: str
    attributes: tuple[tuple[str, str], ...] = ()
    text: str = ""
    bbox: BoundingBox | None = None
    children: tuple["DomElement", ...] = ()

    def attr(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.attributes:
            if k == key:
                return v
        return default

    def iter(self) -> Iterator["DomElement"]:
        """Pre-order (document order) traversal of this subtree."""
        stack = [self]
        while stack:
            el = stack.pop()
            yield el
            stack.extend(reversed(el.children))


@dataclass(frozen=True)
class _Info:
    parent: str | None
    depth: int
    order: int
    xpath: str


@dataclass(frozen=True, eq=False)
class DomSnapshot:
    """Immutable DOM tree plus lookup tables built once at construction."""

    root: DomElement
    viewport: Viewport | None = None
    uid_index: dict[str, DomElement] = field(init=False, repr=False)
    _info: dict[str, _Info] = field(init=False, repr=False)

    def __post_init__(self):
        index: dict[str, DomElement] = {}
        info: dict[str, _Info] = {}
        # (element, parent uid, depth, xpath)
        stack: list[tuple[DomElement, str | None, int, str]] = [(self.root, None, 0, "/" + self.root.tag)]
        order = 0
        while stack:
            el, parent, depth, xp = stack.pop()
            if el.uid in index:
                raise DuplicateUid(f"uid {el.uid!r} occurs more than once")
            index[el.uid] = el
            info[el.uid] = _Info(parent, depth, order, xp)
            order += 1
            tag_totals: dict[str, int] = {}
            for c in el.children:
                tag_totals[c.tag] = tag_totals.get(c.tag, 0) + 1
            seen: dict[str, int] = {}
            entries = []
            for c in el.children:
                seen[c.tag] = seen.get(c.tag, 0) + 1
                step = c.tag if tag_totals[c.tag] == 1 else f"{c.tag}[{seen[c.tag]}]"
                entries.append((c, el.uid, depth + 1, f"{xp}/{step}"))
            stack.extend(reversed(entries))
        object.__setattr__(self, "uid_index", index)
        object.__setattr__(self, "_info", info)

    def __eq__(self, other):
        if not isinstance(other, DomSnapshot):
            return NotImplemented
        return self.root == other.root and self.viewport == other.viewport

    def __hash__(self):
        return hash((self.root, self.viewport))

    def __len__(self) -> int:
        return len(self.uid_index)

    def __contains__(self, uid: object) -> bool:
        return uid in self.uid_index

    def __getitem__(self, uid: str) -> DomElement:
        try:
            return self.uid_index[uid]
        except KeyError:
            raise UnknownUid(f"unknown uid {uid!r}") from None

    def elements(self) -> list[DomElement]:
        """All elements in document order."""
        return sorted(self.uid_index.values(), key=lambda e: self._info[e.uid].order)

    def parent_of(self, uid: str) -> DomElement | None:
        self[uid]
        p = self._info[uid].parent
        return None if p is None else self.uid_index[p]

    def depth_of(self, uid: str) -> int:
        self[uid]
        return self._info[uid].depth

    def order_of(self, uid: str) -> int:
        self[uid]
        return self._info[uid].order

    def ancestors(self, uid: str) -> list[str]:
        """uids from the parent of ``uid`` up to the root."""
        self[uid]
        out = []
        p = self._info[uid].parent
        while p is not None:
            out.append(p)
            p = self._info[p].parent
        return out


def _parse_element(obj, where: str) -> DomElement:
    if not isinstance(obj, dict):
        raise SchemaViolation(where, "element must be an object")
    uid = obj.get("uid")
    if not isinstance(uid, str) or not uid:
        raise SchemaViolation(f"{where}.uid", "must be a non-empty string")
    tag = obj.get("tag")
    if not isinstance(tag, str) or not tag.strip():
        raise SchemaViolation(f"{where}.tag", "must be a non-empty string")
    attrs_raw = obj.get("attributes", [])
    if not isinstance(attrs_raw, list):
        raise SchemaViolation(f"{where}.attributes", "must be a list of [key, value] pairs")
    attrs = []
    keys = set()
    for i, pair in enumerate(attrs_raw):
        if (
            not isinstance(pair, (list, tuple))
            or len(pair) != 2
            or not all(isinstance(p, str) for p in pair)
        ):
            raise SchemaViolation(f"{where}.attributes[{i}]", "must be a [key, value] pair of strings")
        if pair[0] in keys:
            raise SchemaViolation(f"{where}.attributes[{i}]", f"duplicate attribute key {pair[0]!r}")
        keys.add(pair[0])
        attrs.append((pair[0], pair[1]))
    text = obj.get("text", "")
    if text is None:
        text = ""
    if not isinstance(text, str):
        raise SchemaViolation(f"{where}.text", "must be a string")
    bbox = None
    if obj.get("bbox") is not None:
        b = obj["bbox"]
        try:
            bbox = BoundingBox(*(b[k] for k in ("x", "y", "width", "height")))
        except (KeyError, TypeError) as exc:
            raise SchemaViolation(f"{where}.bbox", "needs numeric x, y, width, height") from exc
        except ValueError as exc:
            raise SchemaViolation(f"{where}.bbox", str(exc)) from exc
        if not all(isinstance(getattr(bbox, k), (int, float)) and not isinstance(getattr(bbox, k), bool)
                   for k in ("x", "y", "width", "height")):
            raise SchemaViolation(f"{where}.bbox", "coordinates must be numbers")
    children_raw = obj.get("children", [])
    if not isinstance(children_raw, list):
        raise SchemaViolation(f"{where}.children", "must be a list")
    children = tuple(_parse_element(c, f"{where}.children[{i}]") for i, c in enumerate(children_raw))
    return DomElement(uid, tag.strip().lower(), tuple(attrs), text, bbox, children)


def parse_snapshot(data, viewport: Viewport | None = None) -> DomSnapshot:
    """Parse a serialized snapshot (bytes, str or an already-decoded dict).

    Raises SchemaViolation for malformed input and DuplicateUid when two
    elements share a uid.
    """
    if isinstance(data, (bytes, bytearray, str)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("<root>", f"invalid JSON: {exc}") from exc
    return DomSnapshot(_parse_element(data, "root"), viewport)


def element_to_dict(el: DomElement) -> dict:
    out: dict = {"uid": el.uid, "tag": el.tag, "attributes": [list(a) for a in el.attributes], "text": el.text}
    if el.bbox is not None:
        b = el.bbox
        out["bbox"] = {"x": b.x, "y": b.y, "width": b.width, "height": b.height}
    out["children"] = [element_to_dict(c) for c in el.children]
    return out


def dump_snapshot(snap: DomSnapshot) -> str:
    return json.dumps(element_to_dict(snap.root), ensure_ascii=False)


def xpath_of(snap: DomSnapshot, uid: str) -> str:
    """Absolute xpath; same-tag siblings get 1-based ordinals, e.g. ``/html/body/div[2]/a``."""
    snap[uid]
    return snap._info[uid].xpath


def element_at_point(snap: DomSnapshot, x: float, y: float) -> str:
    """uid of the smallest-area element whose box contains ``(x, y)``.

    Equal areas resolve to the deepest element, then to the one latest in
    document order. Elements without a box never match.
    """
    vp = snap.viewport
    if x < 0 or y < 0 or (vp is not None and (x >= vp.width or y >= vp.height)):
        raise NoElementAtPoint(f"point ({x}, {y}) lies outside the viewport")
    best = None
    best_key = None
    for uid, el in snap.uid_index.items():
        if el.bbox is None or not el.bbox.contains(x, y):
            continue
        info = snap._info[uid]
        key = (el.bbox.area, -info.depth, -info.order)
        if best_key is None or key < best_key:
            best, best_key = uid, key
    if best is None:
        raise NoElementAtPoint(f"no element contains point ({x}, {y})")
    return best


def prune_to_candidates(snap: DomSnapshot, candidates: Iterable[str]) -> DomSnapshot:
    """Keep candidates, their ancestors, and stub copies of candidates' direct children.

    Stubs keep only tag and uid. Everything else is dropped; document order
    is unchanged.
    """
    cands = set()
    for uid in candidates:
        snap[uid]
        cands.add(uid)
    keep = set(cands)
    for uid in cands:
        keep.update(snap.ancestors(uid))

    def build(el: DomElement) -> DomElement:
        kids = []
        for c in el.children:
            if c.uid in keep:
                kids.append(build(c))
            elif el.uid in cands:
                kids.append(DomElement(c.uid, c.tag))
        return DomElement(el.uid, el.tag, el.attributes, el.text, el.bbox, tuple(kids))

    return DomSnapshot(build(snap.root), snap.viewport)
