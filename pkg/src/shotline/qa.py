"""Multi-choice question answering over clip features and text embeddings.

Each choice is scored by a weight-shared MLP over the concatenation of
the clip feature, the question embedding, and that answer's embedding;
a softmax over the choices gives the answer distribution.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from hashlib import blake2b

import numpy as np

from . import autodiff as ad
from .autodiff import SgdOptimizer, Tensor
from .features import FeatureStore
from .nn import RowMlp
from .rng import derive_rng
from .temporal import ShotId, format_shot_id, parse_shot_id

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class TableEmbeddingProvider:
    """Mean of per-token vectors from a lookup table; unknown tokens are zero."""

    def __init__(self, table: dict, dim: int | None = None):
        if not table and dim is None:
            raise ValueError("need an explicit dim for an empty table")
        self.table = {k: np.asarray(v, dtype=np.float32) for k, v in table.items()}
        self.dim = dim if dim is not None else next(iter(self.table.values())).shape[0]
        for token, vec in self.table.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"vector for {token!r} has shape {vec.shape}, expected ({self.dim},)")

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            return np.zeros(self.dim, dtype=np.float32)
        acc = np.zeros(self.dim, dtype=np.float32)
        for token in tokens:
            vec = self.table.get(token)
            if vec is not None:
                acc += vec
        return acc / len(tokens)


class HashingEmbeddingProvider:
    """Feature hashing fallback: signed token buckets, L2-normalized."""

    def __init__(self, dim: int = 300):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = blake2b(token.encode("utf-8"), digest_size=9).digest()
        bucket = int.from_bytes(digest[:8], "little") % self.dim
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        return bucket, sign

    def embed(self, text: str) -> np.ndarray:
        acc = np.zeros(self.dim, dtype=np.float32)
        for token in tokenize(text):
            bucket, sign = self._bucket(token)
            acc[bucket] += sign
        norm = np.linalg.norm(acc)
        return acc / norm if norm > 0 else acc


def write_embedding_table(path, table: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in table.items():
            fh.write(token + " " + " ".join(f"{v:.6f}" for v in np.asarray(vec)) + "\n")


def read_embedding_table(path) -> dict:
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ValueError(f"{path}: line {line_no}: token without values")
            table[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float32)
    return table


@dataclass
class QaItem:
    qid: str
    question: str
    answers: list[str]
    clip_shots: list[ShotId]
    correct_index: int

    def __post_init__(self):
        if len(self.answers) < 2:
            raise ValueError(f"item {self.qid}: need at least 2 answers")
        if not 0 <= self.correct_index < len(self.answers):
            raise ValueError(f"item {self.qid}: correct_index out of range")


def write_qa_items(path, items: list[QaItem]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            for text in [item.question, *item.answers]:
                if "|" in text or "\t" in text:
                    raise ValueError(f"item {item.qid}: '|' and tab are not allowed in texts")
            clip = ",".join(format_shot_id(s) for s in item.clip_shots)
            fh.write(f"{item.qid}\t{item.question}\t{'|'.join(item.answers)}\t{clip}\t"
                     f"{item.correct_index}\n")


def read_qa_items(path) -> list[QaItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}: line {line_no}: expected 5 fields, got {len(parts)}")
            items.append(QaItem(
                qid=parts[0], question=parts[1], answers=parts[2].split("|"),
                clip_shots=[parse_shot_id(s) for s in parts[3].split(",")],
                correct_index=int(parts[4]),
            ))
    return items


def encode_clip(shot_ids: list[ShotId], store: FeatureStore) -> np.ndarray:
    """Mean of the clip's shot features."""
    if not shot_ids:
        raise ValueError("encode_clip: empty clip")
    return store.rows(shot_ids).mean(axis=0)


class QaModel:
    """Weight-shared scorer over [clip | question | answer] rows."""

    def __init__(self, clip_dim: int, embed_dim: int,
                 scorer_widths: tuple[int, ...] = (256, 64), seed: int = 0):
        self.clip_dim = clip_dim
        self.embed_dim = embed_dim
        self.scorer = RowMlp(clip_dim + 2 * embed_dim, scorer_widths, derive_rng(seed, "qa.scorer"))

    def probabilities_batch(self, clips: np.ndarray, question_vecs: np.ndarray,
                            answer_vecs: np.ndarray) -> Tensor:
        """(batch, n) answer distributions from stacked per-item arrays."""
        batch, n, _ = answer_vecs.shape
        base = np.concatenate([clips, question_vecs], axis=1).astype(np.float32)
        rows = ad.concat_cols(ad.repeat_rows(Tensor(base), n),
                              Tensor(answer_vecs.reshape(batch * n, -1).astype(np.float32)))
        scores = self.scorer.scores(rows)
        return ad.softmax_rows(ad.reshape(scores, (batch, n)))

    def parameters(self) -> dict:
        return {f"qa.{k}": v for k, v in self.scorer.parameters().items()}

    def load_state(self, state: dict) -> None:
        for name, tensor in self.parameters().items():
            tensor.data[...] = state[name]


def qa_forward(item: QaItem, provider, store: FeatureStore, model: QaModel) -> np.ndarray:
    """Answer distribution for one item."""
    clip = encode_clip(item.clip_shots, store)
    q_vec = provider.embed(item.question)
    a_vecs = np.stack([provider.embed(a) for a in item.answers])
    probs = model.probabilities_batch(clip[None, :], q_vec[None, :], a_vecs[None, :, :])
    return probs.data[0]


def qa_answer(item: QaItem, provider, store: FeatureStore, model: QaModel) -> int:
    return int(np.argmax(qa_forward(item, provider, store, model)))


def _item_arrays(items: list[QaItem], provider, store: FeatureStore):
    n = len(items[0].answers)
    for item in items:
        if len(item.answers) != n:
            raise ValueError("items in one batch must share the answer count")
    clips = np.stack([encode_clip(i.clip_shots, store) for i in items])
    questions = np.stack([provider.embed(i.question) for i in items])
    answers = np.stack([np.stack([provider.embed(a) for a in i.answers]) for i in items])
    targets = np.array([i.correct_index for i in items], dtype=np.int64)
    return clips, questions, answers, targets


@dataclass
class QaTrainConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    scorer_widths: tuple[int, ...] = (256, 64)
    patience: int = 5


def train_qa(train_items: list[QaItem], provider, store: FeatureStore,
             config: QaTrainConfig, seed: int,
             val_items: list[QaItem] | None = None) -> tuple[QaModel, dict]:
    """SGD on the answer NLL with early stopping on validation accuracy."""
    if not train_items:
        raise ValueError("train_qa: empty training set")
    model = QaModel(store.dim, provider.dim, config.scorer_widths,
                    seed=derive_rng(seed, "qa.init").integers(2**32))
    optimizer = SgdOptimizer(model.parameters(), config.learning_rate, config.momentum)
    clips, questions, answers, targets = _item_arrays(train_items, provider, store)
    history = {"loss": [], "val_accuracy": []}
    best_val = -1.0
    best_state = None
    stale = 0
    for epoch in range(config.epochs):
        order = derive_rng(seed, "qa.epoch", epoch).permutation(len(train_items))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            probs = model.probabilities_batch(clips[idx], questions[idx], answers[idx])
            loss = ad.nll_loss(probs, targets[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * idx.size
        history["loss"].append(epoch_loss / len(train_items))
        if val_items is not None:
            acc = evaluate_qa(model, val_items, provider, store)
            history["val_accuracy"].append(acc)
            if acc > best_val:
                best_val = acc
                best_state = {k: v.data.copy() for k, v in model.parameters().items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_state is not None:
        model.load_state(best_state)
    return model, history


def evaluate_qa(model: QaModel, items: list[QaItem], provider, store: FeatureStore,
                batch_size: int = 256) -> float:
    if not items:
        raise ValueError("evaluate_qa: empty item set")
    by_n: dict[int, list[QaItem]] = {}
    for item in items:
        by_n.setdefault(len(item.answers), []).append(item)
    correct = 0
    for group in by_n.values():
        for start in range(0, len(group), batch_size):
            batch = group[start:start + batch_size]
            clips, questions, answers, targets = _item_arrays(batch, provider, store)
            probs = model.probabilities_batch(clips, questions, answers).data
            correct += int((np.argmax(probs, axis=1) == targets).sum())
    return correct / len(items)
