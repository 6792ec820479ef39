"""Dense Markup Ranking: dual-encoder cosine ranking of DOM elements.

The built-in encoder hashes lowercase character trigrams into ``hash_dim``
buckets and projects the counts to ``out_dim`` dimensions, either with a
fixed seeded random sign matrix or with a trained projection matrix. All
embeddings are L2-normalized; an all-zero projection maps to ``e_1``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
import scipy.sparse as sp

from .actions import serialize_action
from .dom import DomElement, DomSnapshot, xpath_of
from .errors import DegenerateData, GoldUidAbsentFromCorpus, MissingVector, SchemaViolation
from .otr import HistoryWindow, state_utterances

log = logging.getLogger(__name__)

HASH_DIM = 4096
OUT_DIM = 256
HASH_SEED = 0x5EED_11A5
PROJECTION_SEED = 0
SALIENT_ATTRIBUTES = ("id", "class", "name", "role", "aria-label", "placeholder", "href", "value", "type", "title")
MAX_DOC_TEXT = 64

_MULT = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True)
class Query:
    text: str
    key: str | None = None


@dataclass(frozen=True)
class CandidateDoc:
    uid: str
    text: str
    key: str | None = None


def build_query(state, history: HistoryWindow) -> Query:
    """Flatten recent utterances, recent actions and the viewport into query text."""
    lines = [f"user: {u}" for u in state_utterances(state, history)]
    lines += [serialize_action(a) for a in history.actions]
    vp = state.viewport
    if vp is not None:
        lines.append(f"viewport {vp.width}x{vp.height}")
    key = None
    if getattr(state, "demo_id", None) is not None:
        key = f"{state.demo_id}:{state.turn_index}"
    return Query("\n".join(lines), key)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def build_candidate_doc(el: DomElement, snap: DomSnapshot, key: str | None = None) -> CandidateDoc:
    parts = [el.tag]
    attrs = [(k, el.attr(k)) for k in SALIENT_ATTRIBUTES if el.attr(k) is not None][:5]
    parts += [f'{k}="{v}"' for k, v in attrs]
    text = " ".join(el.text.split())[:MAX_DOC_TEXT]
    if text:
        parts.append(text)
    steps = xpath_of(snap, el.uid).split("/")[1:]
    parts.append("/" + "/".join(steps[-3:]))
    if el.bbox is None:
        parts.append("bbox(none)")
    else:
        b = el.bbox
        parts.append(f"bbox({_fmt(b.x)},{_fmt(b.y)},{_fmt(b.width)},{_fmt(b.height)})")
    return CandidateDoc(el.uid, " ".join(parts), key)


def _code_points(texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Lowercased, space-padded texts as one uint64 code-point array plus per-text lengths."""
    padded = [" " + t.lower() + " " for t in texts]
    lens = np.fromiter((len(t) for t in padded), dtype=np.int64, count=len(padded))
    cps = np.frombuffer("".join(padded).encode("utf-32-le"), dtype=np.uint32).astype(np.uint64)
    return cps, lens


def trigram_counts(texts: Sequence[str], hash_dim: int = HASH_DIM, dtype=np.float32) -> sp.csr_matrix:
    """Sparse (len(texts), hash_dim) matrix of hashed character-trigram counts.

    Each text is lowercased and padded with one space on both sides. Rows may
    hold repeated column indices; sparse products sum them.
    """
    cps, lens = _code_points(texts)
    n = len(lens)
    ntri = np.maximum(lens - 2, 0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(ntri, out=indptr[1:])
    if indptr[-1] == 0:
        return sp.csr_matrix((n, hash_dim), dtype=dtype)
    # code points fit in 21 bits, so the packed trigram is injective
    x = (cps[:-2] << np.uint64(42)) | (cps[1:-1] << np.uint64(21)) | cps[2:]
    with np.errstate(over="ignore"):
        h = (x ^ np.uint64(HASH_SEED)) * _MULT
    buckets = (((h >> np.uint64(32)) * np.uint64(hash_dim)) >> np.uint64(32)).astype(np.int32)
    valid = np.ones(len(cps), dtype=bool)
    ends = np.cumsum(lens)
    valid[ends - 1] = False
    valid[ends - 2] = False
    buckets = buckets[valid[:-2]]
    data = np.ones(len(buckets), dtype=dtype)
    return sp.csr_matrix((data, buckets, indptr), shape=(n, hash_dim))


@lru_cache(maxsize=8)
def sign_matrix(seed: int = PROJECTION_SEED, hash_dim: int = HASH_DIM, out_dim: int = OUT_DIM) -> np.ndarray:
    """Fixed random ±1 matrix (float32, read-only) used when no trained projection is given."""
    rng = np.random.default_rng(seed)
    m = np.where(rng.random((hash_dim, out_dim)) < 0.5, -1.0, 1.0).astype(np.float32)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=8)
def _sign_matrix_i8(seed: int, hash_dim: int, out_dim: int) -> np.ndarray:
    return sign_matrix(seed, hash_dim, out_dim).astype(np.int8)


@numba.njit(cache=True, nogil=True)
def _project_signs(cps, ends, hash_dim, seed, signs, out):  # pragma: no cover - compiled
    # Same trigram hash as trigram_counts, fused with the ±1 projection.
    s42 = np.uint64(42)
    s21 = np.uint64(21)
    s32 = np.uint64(32)
    hd = np.uint64(hash_dim)
    mult = np.uint64(0x9E3779B97F4A7C15)
    acc = np.zeros(signs.shape[1], dtype=np.int32)
    start = 0
    for d in range(ends.shape[0]):
        end = ends[d]
        acc[:] = 0
        for i in range(start, end - 2):
            x = (cps[i] << s42) | (cps[i + 1] << s21) | cps[i + 2]
            h = (x ^ seed) * mult
            row = signs[((h >> s32) * hd) >> s32]
            for j in range(acc.shape[0]):
                acc[j] += row[j]
        for j in range(acc.shape[0]):
            out[d, j] = acc[j]
        start = end


def _normalize_rows(e: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", e, e))
    zero = norms == 0
    norms[zero] = 1.0
    e = e / norms[:, None]
    if zero.any():
        e[zero] = 0.0
        e[zero, 0] = 1.0
    return e


@dataclass(eq=False)
class ProjectionModel:
    """Trainable linear map from hashed trigram counts to the embedding space."""

    W: np.ndarray
    seed: int = PROJECTION_SEED

    @property
    def hash_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def initial(cls, seed: int = PROJECTION_SEED, hash_dim: int = HASH_DIM, out_dim: int = OUT_DIM):
        return cls(sign_matrix(seed, hash_dim, out_dim).astype(np.float64) / np.sqrt(out_dim), seed)

    def __eq__(self, other):
        if not isinstance(other, ProjectionModel):
            return NotImplemented
        return self.seed == other.seed and self.W.shape == other.W.shape and np.array_equal(self.W, other.W)

    def save(self, path) -> None:
        """Write the model; ``.json`` paths get a JSON dump, anything else a binary dump."""
        path = Path(path)
        header = {"seed": int(self.seed), "hash_dim": self.hash_dim, "out_dim": self.out_dim}
        if path.suffix == ".json":
            header["W"] = self.W.tolist()
            path.write_text(json.dumps(header))
            return
        header["dtype"] = "<f8"
        with open(path, "wb") as f:
            f.write(b"LINXPROJ1\n")
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            f.write(np.ascontiguousarray(self.W, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ProjectionModel":
        path = Path(path)
        raw = path.read_bytes()
        if raw.startswith(b"LINXPROJ1\n"):
            _, head, body = raw.split(b"\n", 2)
            meta = json.loads(head)
            W = np.frombuffer(body, dtype="<f8").reshape(meta["hash_dim"], meta["out_dim"]).astype(np.float64)
        else:
            meta = json.loads(raw)
            W = np.asarray(meta["W"], dtype=np.float64)
            if W.shape != (meta["hash_dim"], meta["out_dim"]):
                raise SchemaViolation(str(path), "W shape does not match hash_dim/out_dim")
        return cls(W, meta["seed"])


def embed_texts(texts: Sequence[str], model: ProjectionModel | None = None) -> np.ndarray:
    """Unit-norm embeddings, one row per text."""
    if model is None:
        cps, lens = _code_points(texts)
        e = np.empty((len(lens), OUT_DIM), dtype=np.float64)
        _project_signs(cps, np.cumsum(lens), HASH_DIM, np.uint64(HASH_SEED),
                       _sign_matrix_i8(PROJECTION_SEED, HASH_DIM, OUT_DIM), e)
    else:
        counts = trigram_counts(texts, model.hash_dim, np.float64)
        e = np.asarray(counts @ model.W)
    return _normalize_rows(e)


def embed_hashed(text: str, model: ProjectionModel | None = None) -> np.ndarray:
    return embed_texts([text], model)[0]


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clipped to [-1, 1]."""
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


class HashingEmbedder:
    def __init__(self, model: ProjectionModel | None = None):
        self.model = model

    def embed_query(self, q: Query) -> np.ndarray:
        return embed_hashed(q.text, self.model)

    def embed_docs(self, docs: Sequence[CandidateDoc]) -> np.ndarray:
        return embed_texts([d.text for d in docs], self.model)


class ExternalEmbedder:
    """Precomputed vectors looked up by ``Query.key`` / ``CandidateDoc.key``.

    File format: a header line ``{"dimension": D}`` followed by one
    ``{"id": ..., "vector": [...]}`` object per line.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int):
        self.vectors = vectors
        self.dimension = dimension

    @classmethod
    def from_jsonl(cls, path) -> "ExternalEmbedder":
        with open(path, encoding="utf-8") as f:
            lines = [ln for ln in f if ln.strip()]
        if not lines:
            raise SchemaViolation(str(path), "empty vectors file")
        header = json.loads(lines[0])
        dim = header.get("dimension")
        if not isinstance(dim, int) or dim < 1:
            raise SchemaViolation(f"{path}:1", "header must declare a positive integer dimension")
        ids, rows = [], []
        for n, line in enumerate(lines[1:], start=2):
            rec = json.loads(line)
            vec = rec.get("vector")
            if not isinstance(rec.get("id"), str) or not isinstance(vec, list) or len(vec) != dim:
                raise SchemaViolation(f"{path}:{n}", f"expected {{id, vector}} with {dim} components")
            ids.append(rec["id"])
            rows.append(vec)
        mat = _normalize_rows(np.asarray(rows, dtype=np.float64).reshape(len(rows), dim))
        return cls(dict(zip(ids, mat)), dim)

    def _get(self, key: str | None) -> np.ndarray:
        if key is None or key not in self.vectors:
            raise MissingVector(f"no external vector for id {key!r}")
        return self.vectors[key]

    def embed_query(self, q: Query) -> np.ndarray:
        return self._get(q.key)

    def embed_docs(self, docs: Sequence[CandidateDoc]) -> np.ndarray:
        if not docs:
            return np.zeros((0, self.dimension))
        return np.stack([self._get(d.key) for d in docs])


@dataclass(frozen=True)
class RankResult:
    entries: tuple[tuple[str, float], ...]
    k: int
    corpus: frozenset = field(default=frozenset(), compare=False, repr=False)

    def uids(self) -> list[str]:
        return [u for u, _ in self.entries]

    def to_list(self) -> list[dict]:
        return [{"uid": u, "score": s} for u, s in self.entries]


def rank_candidates(q: Query, docs: Sequence[CandidateDoc], k: int, embedder=None) -> RankResult:
    """Top-``k`` docs by cosine similarity; ties keep the input (document) order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not docs:
        raise ValueError("docs must be non-empty")
    embedder = embedder or HashingEmbedder()
    qv = embedder.embed_query(q)
    scores = np.clip(embedder.embed_docs(docs) @ qv, -1.0, 1.0)
    order = np.argsort(-scores, kind="stable")[:k]
    entries = tuple((docs[i].uid, float(scores[i])) for i in order)
    return RankResult(entries, k, frozenset(d.uid for d in docs))


def recall_at_k(results: Iterable[tuple[RankResult, str | None]], k: int) -> float:
    """Fraction of turns whose gold uid is among the first ``k`` ranked entries.

    A gold uid missing from the ranked corpus counts as a miss and is logged.
    """
    hits = total = 0
    for res, gold in results:
        if k > res.k:
            raise ValueError(f"k={k} exceeds the result cutoff {res.k}")
        total += 1
        if gold is None or (res.corpus and gold not in res.corpus):
            log.warning("%s", GoldUidAbsentFromCorpus(f"gold uid {gold!r} not in ranked corpus"))
            continue
        hits += gold in res.uids()[:k]
    if total == 0:
        raise ValueError("no results to evaluate")
    return hits / total


@dataclass(frozen=True)
class TrainExample:
    query: Query
    candidate: CandidateDoc
    label: int

    def to_dict(self) -> dict:
        return {"query": self.query.text, "uid": self.candidate.uid, "candidate": self.candidate.text,
                "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainExample":
        if d.get("label") not in (0, 1) or not isinstance(d.get("query"), str) \
                or not isinstance(d.get("candidate"), str):
            raise SchemaViolation("example", "needs string query/candidate and label 0 or 1")
        return cls(Query(d["query"]), CandidateDoc(str(d.get("uid", "")), d["candidate"]), d["label"])


def sample_examples(query: Query, docs: Sequence[CandidateDoc], gold_uid: str, m: int,
                    rng: np.random.Generator) -> list[TrainExample]:
    """One positive plus up to ``m`` uniformly drawn non-target negatives."""
    pos = [d for d in docs if d.uid == gold_uid]
    if not pos:
        return []
    neg = [d for d in docs if d.uid != gold_uid]
    picks = rng.choice(len(neg), size=min(m, len(neg)), replace=False) if neg else []
    return [TrainExample(query, pos[0], 1)] + [TrainExample(query, neg[i], 0) for i in sorted(picks)]


def pair_loss(example: TrainExample, model: ProjectionModel | None = None) -> float:
    """Squared error between the label and the query/candidate cosine."""
    e = embed_texts([example.query.text, example.candidate.text], model)
    return (example.label - cosine_sim(e[0], e[1])) ** 2


def mean_pair_loss(examples: Sequence[TrainExample], model: ProjectionModel | None = None) -> float:
    return float(np.mean([pair_loss(ex, model) for ex in examples]))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    steps: int = 500
    batch: int = 64
    negatives: int = 15
    seed: int = 0
    log_every: int = 10
    optimizer: str = "adam"
    hash_dim: int = HASH_DIM
    out_dim: int = OUT_DIM


@dataclass
class TrainResult:
    model: ProjectionModel
    curve: list[tuple[int, float]]


class _EncodedBatch:
    def __init__(self, examples: Sequence[TrainExample], hash_dim: int):
        self.Q = trigram_counts([e.query.text for e in examples], hash_dim, np.float64)
        self.D = trigram_counts([e.candidate.text for e in examples], hash_dim, np.float64)
        self.y = np.array([e.label for e in examples], dtype=np.float64)

    def rows(self, idx: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
        return self.Q[idx], self.D[idx], self.y[idx]


def loss_and_grad(W: np.ndarray, Q: sp.csr_matrix, D: sp.csr_matrix, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of (y - cos(QW, DW))^2 and its gradient with respect to W."""
    a = np.asarray(Q @ W)
    b = np.asarray(D @ W)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ah, bh = _normalize_rows(a), _normalize_rows(b)
    cos = np.einsum("ij,ij->i", ah, bh)
    r = y - cos
    loss = float(np.mean(r ** 2))
    dcos = -2.0 * r / len(y)
    # zero projections embed to the constant e_1 and carry no gradient
    inv_a = np.divide(1.0, na, out=np.zeros_like(na), where=na > 0)
    inv_b = np.divide(1.0, nb, out=np.zeros_like(nb), where=nb > 0)
    ga = (dcos * inv_a)[:, None] * (bh - cos[:, None] * ah)
    gb = (dcos * inv_b)[:, None] * (ah - cos[:, None] * bh)
    grad = np.asarray(Q.T @ ga) + np.asarray(D.T @ gb)
    return loss, grad


def _check_data(examples: Sequence[TrainExample]) -> None:
    if not examples:
        raise DegenerateData("no training examples")
    labels = {e.label for e in examples}
    if len(labels) < 2:
        raise DegenerateData(f"all {len(examples)} labels are {labels.pop()}")
    groups: dict[str, int] = {}
    for e in examples:
        groups[e.query.text] = groups.get(e.query.text, 0) + e.label
    missing = sum(1 for v in groups.values() if v == 0)
    if missing:
        raise DegenerateData(f"{missing} query group(s) have no positive example")


def train_projection(examples: Sequence[TrainExample], config: TrainConfig = TrainConfig(),
                     init: ProjectionModel | None = None) -> TrainResult:
    """Fit the projection matrix by mini-batch descent on the mean pair loss.

    The loss curve logs the full-data mean loss at step 0 and every
    ``log_every`` steps thereafter (plus the final step).
    """
    _check_data(examples)
    model = init or ProjectionModel.initial(config.seed, config.hash_dim, config.out_dim)
    W_full = model.W.copy()
    data = _EncodedBatch(examples, W_full.shape[0])
    # rows no feature touches never receive gradient, so only the active ones are optimized
    active = np.union1d(data.Q.indices, data.D.indices)
    data.Q, data.D = data.Q[:, active], data.D[:, active]
    W = W_full[active]
    full = np.arange(len(examples))
    rng = np.random.default_rng(config.seed)
    m = np.zeros_like(W)
    v = np.zeros_like(W)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    curve = [(0, loss_and_grad(W, data.Q, data.D, data.y)[0])]
    for step in range(1, config.steps + 1):
        if config.batch >= len(examples):
            idx = full
        else:
            idx = np.sort(rng.choice(len(examples), size=config.batch, replace=False))
        _, g = loss_and_grad(W, *data.rows(idx))
        if config.optimizer == "adam":
            m *= beta1
            m += (1 - beta1) * g
            np.multiply(g, g, out=g)
            v *= beta2
            v += (1 - beta2) * g
            np.sqrt(v / (1 - beta2 ** step), out=g)
            g += eps
            np.divide(m, g, out=g)
            W -= (config.lr / (1 - beta1 ** step)) * g
        elif config.optimizer == "sgd":
            W -= config.lr * g
        else:
            raise ValueError(f"unknown optimizer {config.optimizer!r}")
        if step % config.log_every == 0 or step == config.steps:
            curve.append((step, loss_and_grad(W, data.Q, data.D, data.y)[0]))
    W_full[active] = W
    return TrainResult(ProjectionModel(W_full, model.seed), curve)
