"""Show threshold truncation on a length list and on a rendered candidate line."""

import argparse
import json
from pathlib import Path

from linxkit import Viewport, parse_snapshot, render_candidate_line, truncate_to_budget
from linxkit.otr import DEFAULT_COUNTER

PAGE = Path(__file__).resolve().parent.parent / "tests" / "data" / "pages" / "page12.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", type=int, nargs="+", default=[10, 50, 100])
    ap.add_argument("--limit", type=int, default=120)
    ap.add_argument("--uid", default="btn1", help="element of the sample page to render")
    args = ap.parse_args()

    out = truncate_to_budget(list(enumerate(args.lengths)), args.limit)
    print(f"lengths {args.lengths} under limit {args.limit} -> {[n for _, n in out]}")

    dom = parse_snapshot(json.loads(PAGE.read_text()), Viewport(1280, 720))
    for limit in (10 ** 6, 65, 45):
        line = render_candidate_line(dom[args.uid], dom, limit)
        print(f"\nlimit {limit}: {DEFAULT_COUNTER.count(line)} tokens\n  {line}")


if __name__ == "__main__":
    main()
