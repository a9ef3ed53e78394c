"""Validation metrics (masked sparse cross-entropy, top-k accuracy) and
rendering of the source x target result tables."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .errors import ContractError, EncodingError, TransferError
from .vocab import PAD_ID


@dataclass
class MetricsReport:
    """Validation metrics for one (source, target) experiment cell.

    PAD positions are excluded from every number; ``pad_excluded``
    records that convention in serialized reports.
    """

    domain: str
    source_domain: str | None
    loss: float
    accuracy: float
    top5: float
    top10: float
    token_count: int
    pad_excluded: bool = True

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= self.top5 <= self.top10 <= 1.0:
            raise ContractError(
                f"metric ordering violated: acc={self.accuracy} top5={self.top5} top10={self.top10}"
            )
        if self.loss < 0.0:
            raise ContractError(f"loss must be non-negative, got {self.loss}")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "source_domain": self.source_domain,
            "loss": self.loss,
            "accuracy": self.accuracy,
            "top5": self.top5,
            "top10": self.top10,
            "token_count": self.token_count,
            "pad_excluded": self.pad_excluded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def _flatten(logits: np.ndarray, target_ids: np.ndarray):
    logits = np.asarray(logits)
    targets = np.asarray(target_ids)
    vocab = logits.shape[-1]
    logits = logits.reshape(-1, vocab)
    targets = targets.reshape(-1)
    if logits.shape[0] != targets.shape[0]:
        raise ContractError(
            f"logits rows {logits.shape[0]} != target count {targets.shape[0]}"
        )
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise EncodingError(f"target id outside [0, {vocab})")
    return logits, targets


def _nll_per_position(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    target_logit = np.take_along_axis(shifted, targets[:, None], axis=-1)[:, 0]
    return log_z - target_logit


def sparse_ce_loss(logits, target_ids, pad_id: int = PAD_ID) -> float:
    """Mean -log softmax(logits)[target] over non-PAD positions."""
    logits, targets = _flatten(logits, target_ids)
    mask = targets != pad_id
    if not mask.any():
        return 0.0
    return float(_nll_per_position(logits[mask], targets[mask]).mean())


def _ranks(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Rank of each target under (logit desc, id asc) ordering."""
    target_logit = np.take_along_axis(logits, targets[:, None], axis=-1)
    higher = (logits > target_logit).sum(axis=-1)
    ids = np.arange(logits.shape[-1])[None, :]
    tied_lower = ((logits == target_logit) & (ids < targets[:, None])).sum(axis=-1)
    return higher + tied_lower


def top_k_accuracy(logits, target_ids, k: int, pad_id: int = PAD_ID) -> float:
    """Fraction of non-PAD positions whose target is in the top k logits."""
    logits, targets = _flatten(logits, target_ids)
    if not 1 <= k <= logits.shape[-1]:
        raise ContractError(f"k={k} outside [1, {logits.shape[-1]}]")
    mask = targets != pad_id
    if not mask.any():
        return 0.0
    return float((_ranks(logits[mask], targets[mask]) < k).mean())


@dataclass
class _Accumulator:
    nll_sum: float = 0.0
    hits: dict = field(default_factory=lambda: {1: 0, 5: 0, 10: 0})
    count: int = 0

    def update(self, logits: np.ndarray, targets: np.ndarray, pad_id: int) -> None:
        logits, targets = _flatten(logits, targets)
        mask = targets != pad_id
        if not mask.any():
            return
        logits, targets = logits[mask], targets[mask]
        self.nll_sum += float(_nll_per_position(logits, targets).sum())
        ranks = _ranks(logits, targets)
        for k in self.hits:
            self.hits[k] += int((ranks < min(k, logits.shape[-1])).sum())
        self.count += int(mask.sum())


def evaluate_model(checkpoint, split, vocab, batch_size: int = 32) -> MetricsReport:
    """Single teacher-forced pass over a validation split.

    Accumulates token-level sums so the result is independent of
    ``batch_size``.
    """
    if checkpoint.vocab_fingerprint != vocab.fingerprint:
        raise TransferError(
            "checkpoint was trained under a different vocabulary "
            f"({checkpoint.vocab_fingerprint[:12]} != {vocab.fingerprint[:12]})"
        )
    config = checkpoint.config
    params = checkpoint.to_params()
    pairs = split.validation
    inputs = np.stack([vocab.encode(p.context, config.max_len) for p in pairs])
    targets = np.stack([vocab.encode(p.response, config.max_len) for p in pairs])
    acc = _Accumulator()
    for start in range(0, len(pairs), batch_size):
        batch_in = inputs[start:start + batch_size]
        batch_tg = targets[start:start + batch_size]
        logits = model_mod.forward(params, config, batch_in, batch_tg[:, :-1])
        acc.update(logits.data, batch_tg[:, 1:], PAD_ID)
    if acc.count == 0:
        raise ContractError("validation split contains no non-PAD tokens")
    return MetricsReport(
        domain=split.domain,
        source_domain=checkpoint.source_domain,
        loss=acc.nll_sum / acc.count,
        accuracy=acc.hits[1] / acc.count,
        top5=acc.hits[5] / acc.count,
        top10=acc.hits[10] / acc.count,
        token_count=acc.count,
    )


_METRIC_FIELDS = ("loss", "accuracy", "top5", "top10")


def render_matrix_tables(reports, domains=None) -> dict:
    """CSV table per metric (rows = target, columns = source, diagonal =
    baseline) plus the per-target improved-over-baseline summary."""
    reports = list(reports)
    if domains is None:
        domains = sorted({r.domain for r in reports} |
                         {r.source_domain for r in reports if r.source_domain})
    cells = {}
    for r in reports:
        source = r.source_domain if r.source_domain else r.domain
        cells[(source, r.domain)] = r

    tables = {}
    for metric in _METRIC_FIELDS:
        buf = io.StringIO()
        buf.write("target," + ",".join(domains) + "\n")
        for target in domains:
            row = [target]
            for source in domains:
                r = cells.get((source, target))
                row.append("" if r is None else f"{getattr(r, metric):.4f}")
            buf.write(",".join(row) + "\n")
        tables[metric] = buf.getvalue()

    summary = {}
    for metric in _METRIC_FIELDS:
        improved = []
        total = 0
        for target in domains:
            baseline = cells.get((target, target))
            transfers = [cells[(s, target)] for s in domains
                         if s != target and (s, target) in cells]
            if baseline is None or not transfers:
                continue
            total += 1
            base = getattr(baseline, metric)
            values = [getattr(r, metric) for r in transfers]
            better = min(values) < base if metric == "loss" else max(values) > base
            if better:
                improved.append(target)
        summary[metric] = {
            "improved_targets": improved,
            "improved": len(improved),
            "total": total,
        }
    tables["summary"] = summary
    return tables
