"""Training runs, transfer initialization, the experiment matrix and the
topology grid search.

A run is deterministic for a fixed (data, config, seed); matrix cells
write their result files atomically so an interrupted matrix resumes by
skipping finished cells.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics as metrics_mod
from . import model as model_mod
from .autodiff import AdamState, Tensor, adam_step
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import SplitCorpus
from .errors import (
    ConfigError,
    DivergenceError,
    NumericError,
    OrderingError,
    TransferError,
)
from .metrics import MetricsReport
from .model import ModelConfig
from .vocab import PAD_ID, Vocabulary


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-9
    patience: int = 3  # 0 disables early stopping

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "seed": self.seed,
            "learning_rate": self.learning_rate, "beta1": self.beta1,
            "beta2": self.beta2, "epsilon": self.epsilon, "patience": self.patience,
        }


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    val_top5: float
    val_top10: float
    wall_time: float

    def metrics_tuple(self) -> tuple:
        """Everything except wall time, for determinism comparisons."""
        return (self.epoch, self.train_loss, self.val_loss,
                self.val_accuracy, self.val_top5, self.val_top10)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch, "train_loss": self.train_loss,
            "val_loss": self.val_loss, "val_accuracy": self.val_accuracy,
            "val_top5": self.val_top5, "val_top10": self.val_top10,
            "wall_time": self.wall_time,
        }


def _encode_pairs(pairs, vocab: Vocabulary, max_len: int):
    inputs = np.stack([vocab.encode(p.context, max_len) for p in pairs])
    targets = np.stack([vocab.encode(p.response, max_len) for p in pairs])
    return inputs, targets


def _masked_ce(logits: Tensor, labels: np.ndarray):
    """Sum of -log p(label) over non-PAD positions, and the position count."""
    mask = (labels != PAD_ID).astype(logits.dtype)
    count = int(mask.sum())
    logp = ad.log_softmax(logits, axis=-1)
    picked = ad.take_along_last(logp, labels)
    total = -(picked * Tensor(mask)).sum()
    return total, count


def _batch_metrics(params, config, inputs, targets, batch_size):
    acc = metrics_mod._Accumulator()
    for start in range(0, inputs.shape[0], batch_size):
        logits = model_mod.forward(params, config,
                                   inputs[start:start + batch_size],
                                   targets[start:start + batch_size, :-1])
        acc.update(logits.data, targets[start:start + batch_size, 1:], PAD_ID)
    return acc


def train(corpus: SplitCorpus, vocab: Vocabulary, model_config: ModelConfig | None,
          train_config: TrainConfig, init: Checkpoint | None = None):
    """Teacher-forced training; returns (best checkpoint, epoch logs).

    ``init=None`` starts from seeded random weights; an init checkpoint
    transfers every weight (its vocabulary fingerprint must match) while
    the optimizer always starts fresh.
    """
    if init is not None:
        if init.vocab_fingerprint != vocab.fingerprint:
            raise TransferError(
                "init checkpoint vocabulary fingerprint "
                f"{init.vocab_fingerprint[:12]} does not match active vocabulary "
                f"{vocab.fingerprint[:12]}"
            )
        config = init.config
        params = init.to_params()
        source_domain = init.domain
    else:
        if model_config is None:
            raise ConfigError("model_config is required for random initialization")
        config = model_config
        params = model_mod.init_parameters(config, train_config.seed)
        source_domain = None

    train_in, train_tg = _encode_pairs(corpus.train, vocab, config.max_len)
    val_in, val_tg = _encode_pairs(corpus.validation, vocab, config.max_len)

    state = AdamState(
        learning_rate=train_config.learning_rate, beta1=train_config.beta1,
        beta2=train_config.beta2, epsilon=train_config.epsilon,
    )
    shuffle_rng = np.random.default_rng(train_config.seed)
    dropout_rng = (np.random.default_rng(ad.derive_seed(train_config.seed, "dropout"))
                   if config.dropout > 0 else None)

    logs: list[EpochLog] = []
    best_loss = float("inf")
    best_tensors = None
    since_best = 0
    n = train_in.shape[0]

    for epoch in range(1, train_config.epochs + 1):
        started = time.perf_counter()
        order = shuffle_rng.permutation(n)
        nll_sum, token_count = 0.0, 0
        try:
            for start in range(0, n, train_config.batch_size):
                idx = order[start:start + train_config.batch_size]
                labels = train_tg[idx][:, 1:]
                with ad.record() as tape:
                    logits = model_mod.forward(params, config, train_in[idx],
                                               train_tg[idx][:, :-1], dropout_rng)
                    total, count = _masked_ce(logits, labels)
                    loss = total * (1.0 / max(count, 1))
                if not np.isfinite(loss.data):
                    raise NumericError("training loss is not finite")
                ad.backward(tape, loss)
                grads = {name: t.grad for name, t in params.items() if t.grad is not None}
                adam_step(params, grads, state)
                for t in params.values():
                    t.grad = None
                nll_sum += float(total.data)
                token_count += count
            val = _batch_metrics(params, config, val_in, val_tg, train_config.batch_size)
            val_loss = val.nll_sum / max(val.count, 1)
            if not np.isfinite(val_loss):
                raise NumericError("validation loss is not finite")
        except NumericError as exc:
            last_stable = epoch - 1
            raise DivergenceError(
                f"loss diverged in epoch {epoch}; last stable epoch {last_stable}",
                last_stable_epoch=last_stable,
            ) from exc
        logs.append(EpochLog(
            epoch=epoch,
            train_loss=nll_sum / max(token_count, 1),
            val_loss=val_loss,
            val_accuracy=val.hits[1] / max(val.count, 1),
            val_top5=val.hits[5] / max(val.count, 1),
            val_top10=val.hits[10] / max(val.count, 1),
            wall_time=time.perf_counter() - started,
        ))
        if val_loss < best_loss:
            best_loss = val_loss
            best_tensors = {name: t.data.copy() for name, t in params.items()}
            since_best = 0
        else:
            since_best += 1
            if train_config.patience > 0 and since_best >= train_config.patience:
                break

    ckpt = Checkpoint(
        config=config,
        vocab_fingerprint=vocab.fingerprint,
        tensors={name: arr.astype("<f4") for name, arr in best_tensors.items()},
        domain=corpus.domain,
        source_domain=source_domain,
    )
    return ckpt, logs


def train_token_accuracy(ckpt: Checkpoint, pairs, vocab: Vocabulary,
                         batch_size: int = 64) -> float:
    """Teacher-forced token accuracy over a pair list (e.g. the train split)."""
    params = ckpt.to_params()
    inputs, targets = _encode_pairs(pairs, vocab, ckpt.config.max_len)
    acc = _batch_metrics(params, ckpt.config, inputs, targets, batch_size)
    return acc.hits[1] / max(acc.count, 1)


# ---------------------------------------------------------------------------
# experiment matrix


@dataclass
class ExperimentPlan:
    """All runs of one study: a baseline per domain plus every ordered
    (source, target) transfer pair."""

    domains: list[str]
    train_config: TrainConfig
    overrides: dict = field(default_factory=dict)  # (source, target) -> TrainConfig

    def cells(self) -> list[tuple[str, str]]:
        baselines = [(d, d) for d in self.domains]
        transfers = [(s, t) for t in self.domains for s in self.domains if s != t]
        return baselines + transfers

    def cell_count(self) -> int:
        n = len(self.domains)
        return n + n * (n - 1)

    def config_for(self, source: str, target: str) -> TrainConfig:
        return self.overrides.get((source, target), self.train_config)


def _cell_path(out_dir, source, target) -> str:
    return os.path.join(out_dir, f"{source}__{target}.json")


def _baseline_ckpt_path(out_dir, domain) -> str:
    return os.path.join(out_dir, f"{domain}.atxf")


def _write_json_atomic(payload: dict, path: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    os.replace(tmp, path)


@dataclass
class MatrixResult:
    reports: list[MetricsReport]
    executed: list[tuple[str, str]]
    skipped: list[tuple[str, str]]


def run_experiment_matrix(plan: ExperimentPlan, corpora: dict[str, SplitCorpus],
                          vocab: Vocabulary, model_config: ModelConfig,
                          out_dir, max_cells: int | None = None) -> MatrixResult:
    """Run (or resume) the full baseline + transfer matrix.

    A cell is skipped when its result file already exists, so rerunning
    after an interruption executes only the missing cells. ``max_cells``
    bounds how many new cells this call executes (handy for tests and
    budgeted sessions).
    """
    os.makedirs(out_dir, exist_ok=True)
    reports: list[MetricsReport] = []
    executed: list[tuple[str, str]] = []
    skipped: list[tuple[str, str]] = []

    def budget_left() -> bool:
        return max_cells is None or len(executed) < max_cells

    for source, target in plan.cells():
        cell_file = _cell_path(out_dir, source, target)
        if os.path.exists(cell_file):
            with open(cell_file, encoding="utf-8") as fh:
                reports.append(MetricsReport.from_dict(json.load(fh)["metrics"]))
            skipped.append((source, target))
            continue
        if not budget_left():
            continue
        train_config = plan.config_for(source, target)
        if source == target:
            ckpt, logs = train(corpora[target], vocab, model_config, train_config)
            save_checkpoint(ckpt, _baseline_ckpt_path(out_dir, target))
        else:
            src_path = _baseline_ckpt_path(out_dir, source)
            if not os.path.exists(src_path):
                raise OrderingError(
                    f"baseline checkpoint for source '{source}' is missing; "
                    "baselines must run before transfers"
                )
            ckpt, logs = train(corpora[target], vocab, None, train_config,
                               init=load_checkpoint(src_path))
        report = metrics_mod.evaluate_model(ckpt, corpora[target], vocab,
                                            batch_size=train_config.batch_size)
        _write_json_atomic({
            "metrics": report.to_dict(),
            "epochs_run": len(logs),
            "train_config": train_config.to_dict(),
        }, cell_file)
        reports.append(report)
        executed.append((source, target))
    return MatrixResult(reports, executed, skipped)


# ---------------------------------------------------------------------------
# topology grid search


def select_best_cell(losses: dict[tuple[int, int], float]) -> tuple[int, int]:
    """Argmin cell; ties prefer fewer heads, then smaller d_ff."""
    return min(losses, key=lambda cell: (losses[cell], cell[0], cell[1]))


@dataclass
class GridResult:
    losses: dict[tuple[int, int], float]
    best: tuple[int, int]


def topology_grid_search(corpus: SplitCorpus, vocab: Vocabulary,
                         heads_set, dff_set, epochs: int,
                         base_model_config: ModelConfig,
                         train_config: TrainConfig | None = None) -> GridResult:
    """Train one model per (heads, d_ff) cell, reporting validation loss."""
    heads_set, dff_set = list(heads_set), list(dff_set)
    if not heads_set or not dff_set:
        raise ConfigError("grid axes must be non-empty")
    if train_config is None:
        train_config = TrainConfig(epochs=epochs, patience=0)
    losses = {}
    for h in heads_set:
        for dff in dff_set:
            cfg_dict = base_model_config.to_dict()
            cfg_dict.update(num_heads=h, d_ff=dff)
            cell_config = ModelConfig.from_dict(cfg_dict)
            cell_train = TrainConfig(**{**train_config.to_dict(),
                                        "epochs": epochs, "patience": 0})
            _, logs = train(corpus, vocab, cell_config, cell_train)
            losses[(h, dff)] = logs[-1].val_loss
    return GridResult(losses, select_best_cell(losses))
