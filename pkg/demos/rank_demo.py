"""Rank the elements of a page against a dialogue query with the hashing embedder."""

import argparse
import json
import time
from pathlib import Path

from linxkit import (
    Viewport,
    build_candidate_doc,
    build_query,
    make_action,
    parse_snapshot,
    rank_candidates,
    window_history,
)
from linxkit.demos import State

PAGE = Path(__file__).resolve().parent.parent / "tests" / "data" / "pages" / "page12.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--page", default=str(PAGE), help="DOM snapshot JSON")
    ap.add_argument("--utterance", default="please sign me in")
    ap.add_argument("-k", type=int, default=5)
    args = ap.parse_args()

    dom = parse_snapshot(json.loads(Path(args.page).read_text()), Viewport(1280, 720))
    hist = window_history([make_action("load", url="https://minishop.example/")], [args.utterance])
    state = State("demo", 2, dom, Viewport(1280, 720), None, hist)
    query = build_query(state, hist)
    docs = [build_candidate_doc(el, dom) for el in dom.elements()]
    rank_candidates(query, docs, args.k)  # first call compiles the hashing kernel
    t0 = time.perf_counter()
    result = rank_candidates(query, docs, args.k)
    ms = (time.perf_counter() - t0) * 1000
    print("query:\n  " + query.text.replace("\n", "\n  "))
    print(f"top {args.k} of {len(docs)} elements ({ms:.1f} ms):")
    text = {d.uid: d.text for d in docs}
    for rank, (uid, score) in enumerate(result.entries, start=1):
        print(f"{rank:>2}. {score:+.4f}  {text[uid][:90]}")


if __name__ == "__main__":
    main()
