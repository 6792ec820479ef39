"""Extract actions from free-form model outputs and show their canonical form."""

import argparse
import sys

from linxkit import parse_action_string, serialize_action
from linxkit.errors import NoParsableAction

SAMPLES = [
    'click(uid="btn-42")',
    "I will now click( x = 120 , y = 48 ) to open the menu.",
    "<action>textinput(value=\"size 42, red\", uid='q')</action>",
    'say(speaker="navigator", utterance="Which size do you need?") then load(url="https://a.com")',
    "tabCreate()",
    "click(uid=) oops, click(uid=\"ok\")",
    "I am not sure what to do here.",
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("text", nargs="*", help="outputs to parse (default: built-in samples; '-' reads stdin)")
    args = ap.parse_args()
    texts = args.text or SAMPLES
    if texts == ["-"]:
        texts = sys.stdin.read().splitlines()
    for raw in texts:
        try:
            print(f"{raw!r}\n    -> {serialize_action(parse_action_string(raw))}")
        except NoParsableAction as exc:
            print(f"{raw!r}\n    -> no action ({exc})")


if __name__ == "__main__":
    main()
