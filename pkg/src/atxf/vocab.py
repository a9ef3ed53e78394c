"""Shared word-level vocabulary with fixed special-token ids.

One vocabulary is built jointly over every domain so that checkpoints
stay shape-compatible and weights can be copied between domain models.
The fingerprint (SHA-256 of the serialized token list) is what the
transfer guard checks.
"""

from __future__ import annotations

import hashlib
from collections import Counter

import numpy as np

from .errors import ConfigError, ContractError, CorpusError

PAD_ID, START_ID, END_ID, UNK_ID = 0, 1, 2, 3
SPECIALS = ("<pad>", "<start>", "<end>", "<unk>")


class Vocabulary:
    def __init__(self, tokens: list[str], capacity: int):
        if tuple(tokens[:4]) != SPECIALS:
            raise ConfigError("vocabulary must start with the four special tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigError("duplicate token in vocabulary")
        self.capacity = capacity
        self.fingerprint = hashlib.sha256(self._serialize()).hexdigest()

    def _serialize(self) -> bytes:
        return ("\n".join(self.id_to_token) + "\n").encode("utf-8")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def content_size(self) -> int:
        """Token count excluding the four specials."""
        return self.size - len(SPECIALS)

    def encode(self, text: str, max_len: int) -> np.ndarray:
        """START + ids + END, truncated to max_len content tokens and
        PAD-padded to the fixed length max_len + 2."""
        ids = [self.token_to_id.get(tok, UNK_ID) for tok in text.split()[:max_len]]
        seq = [START_ID] + ids + [END_ID]
        seq += [PAD_ID] * (max_len + 2 - len(seq))
        return np.asarray(seq, dtype=np.int64)

    def decode(self, ids) -> str:
        """Tokens for the given ids, specials stripped, END terminating."""
        words = []
        for i in np.asarray(ids).reshape(-1):
            i = int(i)
            if i == END_ID:
                break
            if i in (PAD_ID, START_ID):
                continue
            words.append(self.id_to_token[i])
        return " ".join(words)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self._serialize())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens, capacity=len(tokens))


def build_shared_vocabulary(all_domain_corpora, capacity: int) -> Vocabulary:
    """Top (capacity - 4) tokens by global frequency across every domain.

    Ties break lexicographically, so the result is independent of the
    order the corpora are supplied in.
    """
    if capacity < 5:
        raise ConfigError(f"capacity must be at least 5, got {capacity}")
    if isinstance(all_domain_corpora, dict):
        corpora = list(all_domain_corpora.values())
    else:
        corpora = list(all_domain_corpora)
    counts: Counter[str] = Counter()
    for pairs in corpora:
        for p in pairs:
            counts.update(p.context.split())
            counts.update(p.response.split())
    if not counts:
        raise CorpusError("cannot build a vocabulary from empty corpora")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: capacity - len(SPECIALS)]]
    return Vocabulary(list(SPECIALS) + kept, capacity)


def coverage(vocab_size: int, global_unique: int) -> float:
    """Fraction of the global unique tokens the vocabulary content covers.

    ``vocab_size`` counts content tokens only (specials excluded).
    """
    if global_unique == 0:
        raise ContractError("global unique token count is zero")
    return vocab_size / global_unique
