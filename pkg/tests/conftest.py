import numpy as np
import pytest

from atxf.corpus import CleaningConfig, ConversationPair, SplitCorpus
from atxf.model import ModelConfig
from atxf.vocab import build_shared_vocabulary

BANNED_FIXTURE = ["damn", "heck", "scun"]


@pytest.fixture
def banned_path(tmp_path):
    path = tmp_path / "banned.txt"
    path.write_text("\n".join(BANNED_FIXTURE) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def cleaning(banned_path):
    return CleaningConfig(banned_path)


def toy_pairs(n=50, domain="toy", salt=0):
    """Distinct, fully clean (context, response) pairs for memorization."""
    nouns = ["order", "refund", "parcel", "account", "card",
             "app", "delivery", "invoice", "ticket", "router"]
    verbs = ["arrived", "failed", "expired", "vanished", "crashed"]
    pairs = []
    for i in range(n):
        noun, verb = nouns[(i + salt) % 10], verbs[(i + salt) % 5]
        pairs.append(ConversationPair(
            domain,
            f"my {noun} {verb} case {i} please help",
            f"sorry about your {noun} ref {i} we will fix it",
        ))
    return pairs


def memorization_corpus(n=50, domain="toy"):
    """Train on every pair; validation is a subset (overfit fixture)."""
    pairs = toy_pairs(n, domain)
    return pairs, SplitCorpus(domain, pairs, pairs[: max(2, n // 10)])


def template_domain(name, nouns, n, salt):
    """Support-style sentences sharing scaffolding across domains."""
    issues = ["is broken", "has failed", "never arrived", "was charged twice", "is locked"]
    fixes = ["replace", "refund", "reset", "track", "restore"]
    rng = np.random.default_rng(salt)
    pairs = []
    for _ in range(n):
        noun = nouns[rng.integers(len(nouns))]
        issue = issues[rng.integers(len(issues))]
        fix = fixes[rng.integers(len(fixes))]
        pairs.append(ConversationPair(
            name,
            f"hi my {noun} {issue} and i need some help now",
            f"sorry to hear that we will {fix} your {noun} right away",
        ))
    return pairs


def micro_config(vocab_size, **overrides):
    cfg = dict(vocab_size=vocab_size, d_model=16, num_heads=2, d_ff=32,
               num_encoder_layers=1, num_decoder_layers=1, max_len=12)
    cfg.update(overrides)
    return ModelConfig(**cfg)


@pytest.fixture
def toy_vocab():
    pairs = toy_pairs()
    return build_shared_vocabulary({"toy": pairs}, capacity=500), pairs
