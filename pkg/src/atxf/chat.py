"""Interactive inference: greedy decoding, chat sessions and the
robot speech-pacing calculator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import model as model_mod
from .checkpoint import Checkpoint
from .corpus import CleaningConfig, clean_text, default_cleaning_config
from .errors import ChatLookupError, ConfigError, InputError, TransferError
from .vocab import END_ID, START_ID, Vocabulary

DEFAULT_WORDS_PER_MINUTE = 152.88  # measured average robot speaking speed


class SpeechToText(Protocol):
    """Adapter for an external recognizer; the service itself is text-only.

    Robot clients run recognition server-side and hand the transcript to
    the chat endpoint, so no implementation ships here.
    """

    def transcribe(self, audio: bytes) -> str: ...


@dataclass(frozen=True)
class PacingConfig:
    words_per_minute: float = DEFAULT_WORDS_PER_MINUTE

    def __post_init__(self):
        if self.words_per_minute <= 0:
            raise ConfigError(f"words_per_minute must be > 0, got {self.words_per_minute}")


def tts_wait_seconds(text: str, pacing: PacingConfig) -> float:
    """How long the robot needs to speak ``text``: words / WPM * 60."""
    words = len(text.split())
    return words / pacing.words_per_minute * 60.0


@dataclass
class DomainModel:
    """One loaded domain chatbot: parameters bound to a vocabulary."""

    checkpoint: Checkpoint
    vocab: Vocabulary
    params: dict = None

    def __post_init__(self):
        if self.checkpoint.vocab_fingerprint != self.vocab.fingerprint:
            raise TransferError(
                f"checkpoint for '{self.checkpoint.domain}' does not match "
                "the active vocabulary"
            )
        if self.params is None:
            self.params = self.checkpoint.to_params()

    @property
    def domain(self) -> str:
        return self.checkpoint.domain


def _decode_ids(dm: DomainModel, cleaned: str, max_len: int | None,
                temperature: float, rng):
    config = dm.checkpoint.config
    if max_len is None:
        max_len = config.max_len
    input_ids = dm.vocab.encode(cleaned, config.max_len)[None, :]
    emitted: list[int] = []
    first_logits = None
    for _ in range(max_len):
        dec_in = np.asarray([[START_ID] + emitted], dtype=np.int64)
        logits = model_mod.forward(dm.params, config, input_ids, dec_in)
        step = logits.data[0, -1]
        if first_logits is None:
            first_logits = step.copy()
        if temperature > 0.0:
            scaled = (step - step.max()) / temperature
            p = np.exp(scaled) / np.exp(scaled).sum()
            next_id = int((rng or np.random.default_rng()).choice(len(p), p=p))
        else:
            next_id = int(np.argmax(step))  # lowest id wins ties
        if next_id == END_ID:
            break
        emitted.append(next_id)
    return emitted, first_logits


def greedy_decode(dm: DomainModel, input_text: str, max_len: int | None = None,
                  cleaning: CleaningConfig | None = None,
                  temperature: float = 0.0, rng=None) -> str:
    """Deterministic argmax decoding of a reply to ``input_text``."""
    cleaning = cleaning or default_cleaning_config()
    cleaned = clean_text(input_text, cleaning)
    if cleaned is None:
        raise InputError("message is empty after cleaning")
    ids, _ = _decode_ids(dm, cleaned, max_len, temperature, rng)
    return dm.vocab.decode(ids)


def decode_with_details(dm: DomainModel, input_text: str,
                        cleaning: CleaningConfig | None = None,
                        top_n: int = 5) -> tuple[str, list[str]]:
    """Reply plus the top-N first-step candidate tokens (ties to lower id)."""
    cleaning = cleaning or default_cleaning_config()
    cleaned = clean_text(input_text, cleaning)
    if cleaned is None:
        raise InputError("message is empty after cleaning")
    ids, first_logits = _decode_ids(dm, cleaned, None, 0.0, None)
    n = min(top_n, first_logits.shape[0])
    order = np.lexsort((np.arange(first_logits.shape[0]), -first_logits))
    top = [dm.vocab.id_to_token[int(i)] for i in order[:n]]
    return dm.vocab.decode(ids), top


@dataclass
class ChatSession:
    session_id: str
    domain: str
    history: list[tuple[str, str]] = field(default_factory=list)
    max_history: int = 1

    def append(self, user: str, bot: str) -> None:
        self.history.append((user, bot))
        if len(self.history) > self.max_history:
            del self.history[: len(self.history) - self.max_history]


def chat_turn(session: ChatSession, message: str, models: dict[str, DomainModel],
              cleaning: CleaningConfig | None = None) -> str:
    """Clean, decode, record the turn; returns the bot reply."""
    dm = models.get(session.domain)
    if dm is None:
        raise ChatLookupError(f"unknown domain '{session.domain}'")
    reply = greedy_decode(dm, message, cleaning=cleaning)
    session.append(message, reply)
    return reply
