"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one
[ACCEPTANCE] line per criterion.
"""

import math
import statistics

import numpy as np
import pytest

import atxf.autodiff as ad
from atxf.autodiff import Tensor, backward, record
from atxf.chat import DomainModel, PacingConfig, greedy_decode, tts_wait_seconds
from atxf.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from atxf.corpus import ConversationPair, SplitCorpus, clean_text, filter_profanity, split_70_30
from atxf.errors import CheckpointError, TransferError
from atxf.metrics import evaluate_model, sparse_ce_loss, top_k_accuracy
from atxf.model import (
    ModelConfig,
    count_parameters,
    forward,
    init_parameters,
    multi_head_attention,
    scaled_dot_product_attention,
)
from atxf.training import TrainConfig, ExperimentPlan, run_experiment_matrix, train, train_token_accuracy
from atxf.vocab import build_shared_vocabulary, coverage

from conftest import memorization_corpus, micro_config, template_domain
from test_model import identity_attention_params


def _pass(name):
    print(f"\n[ACCEPTANCE] {name}: PASS")


@pytest.fixture(scope="module")
def small_model():
    """A quickly trained micro model shared by checkpoint/batching criteria."""
    pairs, corpus = memorization_corpus(20)
    vocab = build_shared_vocabulary({"toy": pairs}, capacity=200)
    config = micro_config(vocab_size=vocab.size)
    ckpt, _ = train(corpus, vocab, config,
                    TrainConfig(epochs=3, batch_size=16, seed=0, patience=0))
    return ckpt, corpus, vocab, pairs


def test_parameter_delta_law():
    def config_at(v):
        return ModelConfig(vocab_size=v, d_model=256, num_heads=8, d_ff=256,
                           num_encoder_layers=2, num_decoder_layers=2, max_len=40)

    for v in (10000, 15000, 20000, 25000):
        delta = count_parameters(config_at(v + 5000)) - count_parameters(config_at(v))
        assert delta == 2_565_000, f"delta at vocab {v} was {delta}"
    _pass("parameter-delta-law (2,565,000 per 5000 vocabulary tokens, exact)")


def test_gradient_fidelity_micro_transformer():
    config = ModelConfig(vocab_size=7, d_model=4, num_heads=2, d_ff=8,
                         num_encoder_layers=1, num_decoder_layers=1, max_len=5)
    params = init_parameters(config, seed=3, dtype=np.float64)
    inp = np.array([[1, 4, 5, 2, 0], [1, 6, 2, 0, 0]])
    tgt = np.array([[1, 5, 4, 2, 0], [1, 4, 2, 0, 0]])
    labels = tgt[:, 1:]
    mask = (labels != 0).astype(np.float64)
    count = mask.sum()

    def loss_value():
        logits = forward(params, config, inp, tgt[:, :-1])
        logp = ad.log_softmax(logits, axis=-1)
        picked = ad.take_along_last(logp, labels)
        return float(-(picked * Tensor(mask)).sum().data) / count

    with record() as tape:
        logits = forward(params, config, inp, tgt[:, :-1])
        logp = ad.log_softmax(logits, axis=-1)
        picked = ad.take_along_last(logp, labels)
        loss = -(picked * Tensor(mask)).sum() * (1.0 / count)
    backward(tape, loss)

    h = 1e-5
    checked = 0
    for name, t in params.items():
        assert t.grad is not None, f"no gradient for {name}"
        flat, gflat = t.data.reshape(-1), t.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            scale = max(abs(fd), abs(gflat[i]))
            if scale < 1e-8:
                checked += 1  # both below FD noise floor: structurally zero
                continue
            rel = abs(fd - gflat[i]) / scale
            assert rel < 1e-3, f"{name}[{i}]: fd={fd:.8g} analytic={gflat[i]:.8g} rel={rel:.3g}"
            checked += 1
    assert checked == sum(t.data.size for t in params.values())
    _pass(f"gradient-fidelity ({checked} parameters vs central differences, rel<1e-3)")


def test_attention_correctness():
    q = Tensor(np.array([[1.0, 0.0]]))
    k = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    v = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    out, weights = scaled_dot_product_attention(q, k, v, d_k=2)
    assert abs(weights.data[0, 0] - 0.6698) < 1e-4
    assert abs(weights.data[0, 1] - 0.3302) < 1e-4
    assert abs(out.data[0, 0] - 0.6698) < 1e-4
    assert abs(out.data[0, 1] - 0.3302) < 1e-4

    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((6, 8)))  # float64
    mha = multi_head_attention(x, x, x, identity_attention_params(8), h=1)
    single, _ = scaled_dot_product_attention(x, x, x, d_k=8)
    assert mha.data.dtype == np.float64 and single.data.dtype == np.float64
    assert np.array_equal(mha.data, single.data)
    _pass("attention-correctness (hand-computed weights 1e-4; h=1 bitwise)")


def test_overfit_oracle():
    pairs, corpus = memorization_corpus(50)
    vocab = build_shared_vocabulary({"toy": pairs}, capacity=500)
    config = micro_config(vocab_size=vocab.size, d_model=64, d_ff=128,
                          num_heads=4, max_len=12)
    ckpt, logs = train(corpus, vocab, config,
                       TrainConfig(epochs=300, batch_size=64, seed=1,
                                   learning_rate=2e-3, patience=0))
    assert len(logs) <= 300
    accuracy = train_token_accuracy(ckpt, pairs, vocab)
    assert accuracy >= 0.99, f"train accuracy {accuracy}"
    memorized_loss = evaluate_model(ckpt, corpus, vocab).loss
    assert memorized_loss < 0.02, f"memorized loss {memorized_loss}"
    dm = DomainModel(ckpt, vocab)
    for p in pairs:
        assert greedy_decode(dm, p.context) == p.response
    _pass(f"overfit-oracle (train acc {accuracy:.4f}, memorized loss "
          f"{memorized_loss:.4f}, all 50 replies exact)")


def test_transfer_trend():
    issues_nouns_src = ["parcel", "order", "refund", "invoice", "voucher", "basket"]
    issues_nouns_tgt = ["router", "signal", "contract", "handset", "plan", "hotspot"]
    src_pairs = template_domain("shop", issues_nouns_src, 600, 1)
    tgt_pairs = template_domain("tele", issues_nouns_tgt, 100, 2)
    vocab = build_shared_vocabulary({"shop": src_pairs, "tele": tgt_pairs}, capacity=500)
    config = micro_config(vocab_size=vocab.size, d_model=32, d_ff=64, max_len=14)

    src_ckpt, _ = train(split_70_30(src_pairs, seed=0), vocab, config,
                        TrainConfig(epochs=8, batch_size=32, seed=0,
                                    learning_rate=2e-3, patience=0))

    random_best, transfer_best = [], []
    for seed in range(5):
        split = split_70_30(tgt_pairs, seed=seed)
        cell = TrainConfig(epochs=6, batch_size=16, seed=seed,
                           learning_rate=2e-3, patience=0)
        _, logs_random = train(split, vocab, config, cell)
        _, logs_transfer = train(split, vocab, None, cell, init=src_ckpt)
        random_best.append(min(l.val_loss for l in logs_random))
        transfer_best.append(min(l.val_loss for l in logs_transfer))

    med_random = statistics.median(random_best)
    med_transfer = statistics.median(transfer_best)
    assert med_transfer <= med_random, (
        f"transfer median {med_transfer} > random median {med_random}"
    )
    _pass(f"transfer-trend (medians over 5 seeds: transfer {med_transfer:.4f} "
          f"<= random {med_random:.4f})")


def test_matrix_structure(tmp_path):
    domains = {
        "shop": template_domain("shop", ["parcel", "order", "invoice"], 20, 1),
        "tele": template_domain("tele", ["router", "signal", "plan"], 20, 2),
        "bank": template_domain("bank", ["card", "loan", "account"], 20, 3),
    }
    vocab = build_shared_vocabulary(domains, capacity=300)
    corpora = {d: SplitCorpus(d, pairs[:15], pairs[15:]) for d, pairs in domains.items()}
    config = micro_config(vocab_size=vocab.size, d_model=8, d_ff=16, max_len=12)
    plan = ExperimentPlan(sorted(domains), TrainConfig(epochs=1, batch_size=8,
                                                       seed=0, patience=0))
    assert plan.cell_count() == 9

    full_dir = tmp_path / "full"
    result = run_experiment_matrix(plan, corpora, vocab, config, full_dir)
    assert len(result.executed) == 9 and not result.skipped

    resume_dir = tmp_path / "resume"
    first = run_experiment_matrix(plan, corpora, vocab, config, resume_dir, max_cells=4)
    assert len(first.executed) == 4
    second = run_experiment_matrix(plan, corpora, vocab, config, resume_dir)
    assert len(second.executed) == 5 and len(second.skipped) == 4

    nineteen = ExperimentPlan([f"d{i:02d}" for i in range(19)],
                              TrainConfig(epochs=1, patience=0))
    assert nineteen.cell_count() == 361
    _pass("matrix-structure (9 cells for 3 domains, 361 for 19, resume runs "
          "only missing cells)")


def test_metric_laws():
    rng = np.random.default_rng(17)
    logits = rng.standard_normal((10_000, 40))
    targets = rng.integers(1, 40, size=10_000)
    top1 = top_k_accuracy(logits, targets, 1)
    top5 = top_k_accuracy(logits, targets, 5)
    top10 = top_k_accuracy(logits, targets, 10)
    assert 0.0 <= top1 <= top5 <= top10 <= 1.0

    for m in (2, 4, 100, 30000):
        loss = sparse_ce_loss(np.zeros((8, m)), np.full(8, m - 1))
        assert abs(loss - math.log(m)) < 1e-6

    base_logits = rng.standard_normal((64, 40))
    base_targets = rng.integers(1, 40, size=64)
    padded_logits = np.concatenate([base_logits, rng.standard_normal((16, 40))])
    padded_targets = np.concatenate([base_targets, np.zeros(16, dtype=np.int64)])
    assert sparse_ce_loss(padded_logits, padded_targets) == pytest.approx(
        sparse_ce_loss(base_logits, base_targets), abs=1e-12)
    for k in (1, 5, 10):
        assert top_k_accuracy(padded_logits, padded_targets, k) == pytest.approx(
            top_k_accuracy(base_logits, base_targets, k), abs=1e-12)
    _pass("metric-laws (10k-trial top-k ordering, ln M uniform loss, PAD "
          "invariance)")


def test_metric_batch_invariance(small_model):
    ckpt, corpus, vocab, _ = small_model
    r1 = evaluate_model(ckpt, corpus, vocab, batch_size=1)
    r32 = evaluate_model(ckpt, corpus, vocab, batch_size=32)
    assert abs(r1.loss - r32.loss) < 1e-5
    assert abs(r1.accuracy - r32.accuracy) < 1e-5
    assert abs(r1.top5 - r32.top5) < 1e-5
    assert abs(r1.top10 - r32.top10) < 1e-5
    _pass("metric-laws (evaluation batch-size invariance within 1e-5)")


def test_pipeline_fixtures(tmp_path):
    banned = tmp_path / "banned.txt"
    banned.write_text("damn\nscun\n", encoding="utf-8")
    from atxf.corpus import CleaningConfig
    config = CleaningConfig(banned)

    for s in ("Hello!!! My ORDER hasn't arrived", "@ShopHelp где мой заказ 7",
              "plain already clean text", "  MANY   spaces\tand\ttabs  "):
        once = clean_text(s, config)
        if once is not None:
            assert clean_text(once, config) == once

    pairs = [ConversationPair("d", "i live in scunthorpe", "fine"),
             ConversationPair("d", "damn this service", "sorry")]
    kept = filter_profanity(pairs, config.banned_words)
    assert kept == [pairs[0]]

    ten = [ConversationPair("d", f"c {i}", f"r {i}") for i in range(10)]
    split = split_70_30(ten, seed=0)
    assert (len(split.train), len(split.validation)) == (7, 3)
    amazon_scale = [ConversationPair("d", f"c {i}", f"r {i}") for i in range(30402)]
    split = split_70_30(amazon_scale, seed=0)
    assert (len(split.train), len(split.validation)) == (21281, 9121)

    assert abs(coverage(30000, 91967) - 0.3262) <= 1e-4
    _pass("pipeline-fixtures (idempotent cleaning, whole-word profanity, "
          "70:30 floors, 32.62% coverage)")


def test_pacing():
    eight_words = "the quick brown fox jumps over lazy dogs"
    assert len(eight_words.split()) == 8
    got = tts_wait_seconds(eight_words, PacingConfig(words_per_minute=152.88))
    assert abs(got - 3.14) <= 0.01
    got = tts_wait_seconds(eight_words, PacingConfig(words_per_minute=171.43))
    assert abs(got - 2.80) <= 0.01
    _pass("pacing (3.14 s at 152.88 WPM, 2.80 s at 171.43 WPM)")


def test_checkpoint_guarantees(small_model, tmp_path):
    ckpt, corpus, vocab, pairs = small_model
    path = tmp_path / "toy.atxf"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    for name, arr in ckpt.tensors.items():
        assert np.array_equal(loaded.tensors[name], arr)

    other_vocab = build_shared_vocabulary({"toy": pairs[:5]}, capacity=60)
    with pytest.raises(TransferError):
        train(corpus, other_vocab, None,
              TrainConfig(epochs=1, patience=0), init=loaded)
    with pytest.raises(TransferError):
        evaluate_model(loaded, corpus, other_vocab)

    blob = bytearray(path.read_bytes())
    blob[-80] ^= 0x01
    corrupt = tmp_path / "corrupt.atxf"
    corrupt.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(corrupt)
    _pass("checkpoint-guarantees (bitwise round-trip, fingerprint guard, "
          "corruption detected)")
