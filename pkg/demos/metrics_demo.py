"""Score a few hand-written predictions against references and print the report."""

import argparse

from linxkit import aggregate, make_action, parse_snapshot, turn_score

PAGE = parse_snapshot({"uid": "root", "tag": "html", "children": [
    {"uid": "search", "tag": "input", "bbox": {"x": 40, "y": 20, "width": 300, "height": 30}},
    {"uid": "go", "tag": "button", "bbox": {"x": 350, "y": 20, "width": 60, "height": 30}, "text": "Go"},
    {"uid": "logo", "tag": "img", "bbox": {"x": 0, "y": 0, "width": 40, "height": 40}},
]})

CASES = [
    ("exact click", make_action("click", uid="go"), make_action("click", uid="go")),
    ("click by coordinates", make_action("click", x=370, y=30), make_action("click", uid="go")),
    ("wrong element", make_action("click", uid="logo"), make_action("click", uid="go")),
    ("typo in typed text", make_action("textinput", uid="search", value="red runing shoes"),
     make_action("textinput", uid="search", value="red running shoes")),
    ("url without www", make_action("load", url="https://shop.example/cart"),
     make_action("load", url="https://www.shop.example/cart?ref=nav")),
    ("paraphrased reply", make_action("say", speaker="navigator", utterance="Done, it is in your cart."),
     make_action("say", speaker="navigator", utterance="I added it to your cart.")),
    ("wrong intent", make_action("submit", uid="go"), make_action("click", uid="go")),
    ("unparsable output", None, make_action("click", uid="go")),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", action="store_true", help="print the report as CSV instead of JSON")
    args = ap.parse_args()
    scores = []
    for i, (label, pred, ref) in enumerate(CASES):
        s = turn_score(pred, ref, PAGE, "demo", i)
        scores.append(s)
        print(f"{label:<22} im={s.im} element={s.element_score} text={s.text_score} -> {s.turn_value:.3f}")
    report = aggregate(scores)
    print(report.to_csv() if args.csv else report.to_json())


if __name__ == "__main__":
    main()
