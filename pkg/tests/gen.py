"""Seeded random inputs shared by the property and acceptance tests."""

import numpy as np

from linxkit import make_action
from linxkit.actions import SIGNATURES, Intent

TAGS = ["div", "span", "a", "button", "input", "li", "ul", "p"]
TEXT_CHARS = list("abcxyz AB,.;:-_/?#=&") + ['"', "'", "\\", "(", ")", "é", "ß", "日"]


def random_tree(rng, max_nodes=40, width=200, height=200, p_nobox=0.15):
    """A dom JSON dict whose boxes are random (not necessarily nested) rectangles."""
    n = int(rng.integers(1, max_nodes + 1))
    nodes = []
    for i in range(n):
        node = {"uid": f"e{i}", "tag": TAGS[int(rng.integers(len(TAGS)))], "attributes": [], "text": "",
                "children": []}
        if i == 0 or rng.random() > p_nobox:
            x, y = int(rng.integers(0, width)), int(rng.integers(0, height))
            node["bbox"] = {"x": x, "y": y, "width": int(rng.integers(0, width - x + 1)),
                            "height": int(rng.integers(0, height - y + 1))}
        if i:
            nodes[int(rng.integers(i))]["children"].append(node)
        nodes.append(node)
    return nodes[0]


def random_text(rng, max_len=12):
    return "".join(TEXT_CHARS[int(i)] for i in rng.integers(0, len(TEXT_CHARS), int(rng.integers(0, max_len + 1))))


def random_action(rng):
    intent = list(Intent)[int(rng.integers(len(Intent)))]
    sigs = SIGNATURES[intent]
    sig = sigs[int(rng.integers(len(sigs)))]
    args = {}
    for k in sig:
        if k in ("x", "y", "origin", "target"):
            args[k] = int(rng.integers(-50, 5000))
        elif k == "speaker":
            args[k] = ["instructor", "navigator"][int(rng.integers(2))]
        elif k == "uid":
            args[k] = f"u{int(rng.integers(10**6))}"
        elif k == "url":
            args[k] = "https://" + random_text(rng, 20)
        else:
            args[k] = random_text(rng)
    return make_action(intent, **args)
