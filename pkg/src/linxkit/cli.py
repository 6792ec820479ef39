"""Command-line pipeline: validate -> rank -> build-input -> score, plus train-dmr and report.

Settings come from built-in defaults, then ``--config`` (a JSON file), then
the ``LINXKIT_DATA_ROOT`` environment variable, then command-line flags.
Outputs are whole-file writes into ``<output>/run-<hash>``, where the hash
is taken over the resolved settings, so identical settings always reuse
the same directory and identical inputs give identical bytes.

Exit codes: 0 success, 1 domain failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import parse_action_string, resolve_element_arg
from .demos import iter_eval_turns, list_demo_ids, load_demonstration, load_splits, validate_demonstration
from .dmr import (
    ExternalEmbedder,
    HashingEmbedder,
    ProjectionModel,
    TrainConfig,
    TrainExample,
    build_candidate_doc,
    build_query,
    rank_candidates,
    recall_at_k,
    RankResult,
    sample_examples,
    train_projection,
)
from .errors import BudgetExceeded, DegenerateData, LinxError
from .metrics import aggregate, turn_score
from .otr import TokenBudget, build_otr_input

log = logging.getLogger("linxkit")

ENV_DATA_ROOT = "LINXKIT_DATA_ROOT"
RECALL_CUTOFFS = (1, 5, 10)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_root: str = "."
    split: str | None = None
    k: int = 10
    w: int = 5
    seed: int = 0
    embedder: str = "hashing"
    output: str = "runs"
    budget: TokenBudget = field(default_factory=TokenBudget)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if self.w < 1:
            raise UsageError("w must be >= 1")
        kind = self.embedder.split(":", 1)[0]
        if kind not in ("hashing", "projection", "external") or (kind != "hashing" and ":" not in self.embedder):
            raise UsageError("embedder must be 'hashing', 'projection:<model-file>' or 'external:<vectors-file>'")

    def digest(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def run_dir(self) -> Path:
        return Path(self.output) / f"run-{self.digest()}"


_SIMPLE_KEYS = {"data_root": str, "split": str, "k": int, "w": int, "seed": int, "embedder": str, "output": str}


def _apply(cfg: dict, raw: dict, where: str) -> None:
    for key, value in raw.items():
        if key in _SIMPLE_KEYS:
            if value is not None and not isinstance(value, _SIMPLE_KEYS[key]):
                raise UsageError(f"{where}: {key} must be {_SIMPLE_KEYS[key].__name__}")
            cfg[key] = value
        elif key in ("budget", "train"):
            allowed = {f.name for f in dataclasses.fields(TokenBudget if key == "budget" else TrainConfig)}
            if not isinstance(value, dict) or not set(value) <= allowed:
                raise UsageError(f"{where}: {key} accepts keys {sorted(allowed)}")
            cfg[key].update(value)
        else:
            raise UsageError(f"{where}: unknown config key {key!r}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg: dict = {"budget": {}, "train": {}}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        _apply(cfg, raw, str(path))
    if os.environ.get(ENV_DATA_ROOT):
        cfg["data_root"] = os.environ[ENV_DATA_ROOT]
    flags = {k: getattr(args, k) for k in _SIMPLE_KEYS if getattr(args, k, None) is not None}
    _apply(cfg, flags, "flags")
    for name in ("total", "dom", "per_utterance", "per_action", "per_candidate"):
        v = getattr(args, f"budget_{name}", None)
        if v is not None:
            cfg["budget"][name] = v
    for name in ("lr", "steps", "batch", "negatives", "log_every", "optimizer"):
        v = getattr(args, name, None)
        if v is not None:
            cfg["train"][name] = v
    try:
        budget = TokenBudget(**cfg.pop("budget"))
        train = TrainConfig(**{"seed": cfg.get("seed", 0), **cfg.pop("train")})
        return RunConfig(budget=budget, train=train, **cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _demo_ids(cfg: RunConfig) -> list[str]:
    root = Path(cfg.data_root)
    if not root.is_dir():
        raise UsageError(f"data root {root} does not exist")
    if cfg.split is None:
        return list_demo_ids(root)
    splits = load_splits(root)
    if cfg.split not in splits:
        raise UsageError(f"split {cfg.split!r} not in {root / 'splits.json'}")
    return sorted(splits[cfg.split].demo_ids)


def _embedder(cfg: RunConfig):
    kind, _, arg = cfg.embedder.partition(":")
    if kind == "hashing":
        return HashingEmbedder()
    if not Path(arg).is_file():
        raise UsageError(f"embedder file {arg} not found")
    if kind == "projection":
        return HashingEmbedder(ProjectionModel.load(arg))
    return ExternalEmbedder.from_jsonl(arg)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def _eval_turns(cfg: RunConfig):
    """(demo_id, turn, state) for every evaluated turn, in (demo_id, turn_index) order."""
    for demo_id in _demo_ids(cfg):
        demo = load_demonstration(cfg.data_root, demo_id)
        for turn, state in iter_eval_turns(demo, cfg.w):
            yield demo_id, turn, state


def _gold_uid(turn, state) -> str | None:
    if state.dom is None or not turn.action.has_element:
        return None
    try:
        return resolve_element_arg(turn.action, state.dom)
    except LinxError:
        return None


def cmd_validate(cfg: RunConfig, args) -> int:
    bad = 0
    for demo_id in _demo_ids(cfg):
        try:
            demo = load_demonstration(cfg.data_root, demo_id, strict=False)
        except LinxError as exc:
            print(f"{demo_id}: {exc}")
            bad += 1
            continue
        for issue in validate_demonstration(demo):
            print(f"{demo_id}: {issue}")
            bad += 1
    print(f"{bad} issue(s)")
    return 1 if bad else 0


def cmd_rank(cfg: RunConfig, args) -> int:
    embedder = _embedder(cfg)
    records, scored = [], []
    for demo_id, turn, state in _eval_turns(cfg):
        if state.dom is None:
            print(f"notice: {demo_id} turn {turn.index} has no DOM; skipped", file=sys.stderr)
            continue
        els = state.dom.elements()
        docs = [build_candidate_doc(el, state.dom, key=f"{demo_id}:{turn.index}:{el.uid}") for el in els]
        result = rank_candidates(build_query(state, state.history), docs, cfg.k, embedder)
        records.append({"demo_id": demo_id, "turn_index": turn.index, "topk": result.to_list()})
        if turn.action.has_element:
            scored.append((result, _gold_uid(turn, state)))
    run = cfg.run_dir
    _write(run / "rank.jsonl", _jsonl(records))
    summary = {"turns_ranked": len(records), "turns_with_gold": len(scored)}
    if scored:
        for cut in RECALL_CUTOFFS:
            if cut <= cfg.k:
                summary[f"recall@{cut}"] = recall_at_k(scored, cut)
    _write(run / "rank_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for key, value in summary.items():
        print(f"{key}: {value}")
    return 0


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise LinxError(f"{path}:{n}: {exc}") from exc
    return out


def cmd_build_input(cfg: RunConfig, args) -> int:
    rank_path = cfg.run_dir / "rank.jsonl"
    if not rank_path.is_file():
        raise UsageError(f"{rank_path} not found; run `linxkit rank` with the same settings first")
    ranks = {(r["demo_id"], r["turn_index"]): [c["uid"] for c in r["topk"]] for r in _read_jsonl(rank_path)}
    template = None
    if args.template:
        if not Path(args.template).is_file():
            raise UsageError(f"template {args.template} not found")
        template = Path(args.template).read_text(encoding="utf-8")
    records = []
    for demo_id, turn, state in _eval_turns(cfg):
        cands = ranks.get((demo_id, turn.index), [])[: cfg.k]
        try:
            otr = build_otr_input(state, state.history, cands, cfg.budget)
        except ValueError as exc:
            raise UsageError(f"{demo_id} turn {turn.index}: {exc}") from exc
        rec = {"demo_id": demo_id, "turn_index": turn.index, **otr.to_dict()}
        if template is not None:
            rec["prompt"] = template.replace("{state}", otr.text) if "{state}" in template \
                else template + otr.text
        records.append(rec)
    _write(cfg.run_dir / "inputs.jsonl", _jsonl(records))
    return 0


def cmd_score(cfg: RunConfig, args) -> int:
    pred_path = Path(args.predictions)
    if not pred_path.is_file():
        raise UsageError(f"predictions file {pred_path} not found")
    preds: dict[tuple[str, int], str] = {}
    for rec in _read_jsonl(pred_path):
        if not isinstance(rec.get("demo_id"), str) or not isinstance(rec.get("turn_index"), int) \
                or not isinstance(rec.get("raw_output"), str):
            raise LinxError(f"{pred_path}: records need demo_id, turn_index and raw_output")
        key = (rec["demo_id"], rec["turn_index"])
        if key in preds:
            raise LinxError(f"{pred_path}: duplicate prediction for {key}")
        preds[key] = rec["raw_output"]
    scores = []
    for demo_id, turn, state in _eval_turns(cfg):
        raw = preds.pop((demo_id, turn.index), None)
        try:
            pred = parse_action_string(raw, agent=True) if raw is not None else None
        except LinxError:
            pred = None
        scores.append(turn_score(pred, turn.action, state.dom, demo_id, turn.index))
    for key in sorted(preds):
        print(f"notice: prediction for {key} does not match an evaluated turn; ignored", file=sys.stderr)
    if not scores:
        raise LinxError("no evaluated turns found")
    report = aggregate(scores)
    out = cfg.run_dir / f"score-{pred_path.stem}"
    _write(out / "turns.jsonl", _jsonl(s.to_dict() for s in scores))
    _write(out / "report.json", report.to_json())
    _write(out / "report.csv", report.to_csv())
    print(f"overall {report.overall:.4f}  im {report.im_rate:.4f}")
    return 0


def _examples_from_data(cfg: RunConfig) -> list[TrainExample]:
    rng = np.random.default_rng(cfg.train.seed)
    out = []
    for demo_id, turn, state in _eval_turns(cfg):
        gold = _gold_uid(turn, state)
        if gold is None:
            continue
        docs = [build_candidate_doc(el, state.dom) for el in state.dom.elements()]
        out += sample_examples(build_query(state, state.history), docs, gold, cfg.train.negatives, rng)
    return out


def cmd_train_dmr(cfg: RunConfig, args) -> int:
    if args.examples:
        path = Path(args.examples)
        if not path.is_file():
            raise UsageError(f"examples file {path} not found")
        examples = [TrainExample.from_dict(r) for r in _read_jsonl(path)]
    else:
        examples = _examples_from_data(cfg)
    result = train_projection(examples, cfg.train)
    out = cfg.run_dir / "dmr"
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / ("model.json" if args.model_format == "json" else "model.bin")
    result.model.save(model_path)
    print(f"wrote {model_path}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for step, loss in result.curve:
        w.writerow([step, repr(loss)])
    _write(out / "loss_curve.csv", buf.getvalue())
    print(f"loss {result.curve[0][1]:.6f} -> {result.curve[-1][1]:.6f}")
    return 0


def cmd_report(cfg, args) -> int:
    path = Path(args.report)
    if not path.is_file():
        raise UsageError(f"report {path} not found")
    rep = json.loads(path.read_text())
    if args.format == "json":
        print(json.dumps(rep, indent=2, sort_keys=True))
        return 0
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    rows = [(name, cell["n"], cell["im"], cell.get("iou"), cell.get("f1"), cell["score"])
            for name, cell in sorted(rep["per_intent"].items())]
    rows.append(("overall", rep["n"], rep["im"], rep["eg_iou"], rep["tg_f1"], rep["overall"]))
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["intent", "n", "im", "iou", "f1", "score"])
        w.writerows([(r[0], r[1], *(fmt(v) for v in r[2:])) for r in rows])
        return 0
    print(f"{'intent':<10} {'n':>5} {'IM':>7} {'IoU':>7} {'F1':>7} {'score':>7}")
    for r in rows:
        print(f"{r[0]:<10} {r[1]:>5} " + " ".join(f"{fmt(v):>7}" for v in r[2:]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--data-root", dest="data_root", help=f"demonstrations directory (env: {ENV_DATA_ROOT})")
    common.add_argument("--split", help="split name from splits.json (default: every demonstration)")
    common.add_argument("--output", help="directory holding run-<hash> output directories")
    common.add_argument("-k", type=int, dest="k", help="number of ranked candidates (default 10)")
    common.add_argument("-w", type=int, dest="w", help="history window (default 5)")
    common.add_argument("--seed", type=int)
    common.add_argument("--embedder", help="hashing | projection:<model> | external:<vectors.jsonl>")
    for name in ("total", "dom", "per_utterance", "per_action", "per_candidate"):
        common.add_argument(f"--budget-{name.replace('_', '-')}", dest=f"budget_{name}", type=int)

    p = argparse.ArgumentParser(prog="linxkit", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check demonstrations against the schema and invariants")
    sub.add_parser("rank", parents=[common], help="rank DOM elements for every evaluated turn")
    b = sub.add_parser("build-input", parents=[common], help="render budgeted model inputs from ranked candidates")
    b.add_argument("--template", help="text file prepended to each input ({state} marks the insertion point)")
    s = sub.add_parser("score", parents=[common], help="score predicted actions against references")
    s.add_argument("--predictions", required=True, help="JSONL of {demo_id, turn_index, raw_output}")
    t = sub.add_parser("train-dmr", parents=[common], help="train the ranking projection")
    t.add_argument("--examples", help="JSONL of {query, candidate, label} (default: sample from the data)")
    t.add_argument("--lr", type=float)
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--negatives", type=int)
    t.add_argument("--log-every", dest="log_every", type=int)
    t.add_argument("--optimizer", choices=("adam", "sgd"))
    t.add_argument("--model-format", choices=("bin", "json"), default="bin")
    r = sub.add_parser("report", help="print a score report")
    r.add_argument("report", help="report.json written by `linxkit score`")
    r.add_argument("--format", choices=("table", "csv", "json"), default="table")
    return p


COMMANDS = {
    "validate": cmd_validate,
    "rank": cmd_rank,
    "build-input": cmd_build_input,
    "score": cmd_score,
    "train-dmr": cmd_train_dmr,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = None if args.command == "report" else resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"linxkit: error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateData, BudgetExceeded, LinxError) as exc:
        print(f"linxkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
