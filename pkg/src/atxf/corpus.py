"""Corpus ingestion and cleaning.

Raw support-tweet CSV rows are threaded into (customer context, support
response) pairs, cleaned to lower-case alphanumeric text, filtered for
language and profanity, then split 70:30 per domain.
"""

from __future__ import annotations

import csv
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, CorpusError, SchemaError

CSV_COLUMNS = (
    "tweet_id",
    "author_id",
    "inbound",
    "created_at",
    "text",
    "response_tweet_id",
    "in_response_to_tweet_id",
)

_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_HANDLE_RE = re.compile(r"@\w+")
_NON_ALNUM_RE = re.compile(r"[^a-z0-9\s]")


@dataclass
class RawRecord:
    tweet_id: str
    author_id: str
    inbound: bool
    created_at: str
    text: str
    response_tweet_id: list[str] = field(default_factory=list)
    in_response_to_tweet_id: str | None = None


@dataclass(frozen=True)
class ConversationPair:
    domain: str
    context: str
    response: str


@dataclass
class SplitCorpus:
    domain: str
    train: list[ConversationPair]
    validation: list[ConversationPair]

    @property
    def size(self) -> int:
        return len(self.train) + len(self.validation)


def _read_token_file(path) -> set[str]:
    tokens = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tok = line.strip().lower()
            if tok:
                tokens.add(tok)
    return tokens


def _bundled(name: str) -> set[str]:
    text = resources.files("atxf.data").joinpath(name).read_text(encoding="utf-8")
    return {line.strip() for line in text.splitlines() if line.strip()}


def default_banned_words_path() -> Path:
    return Path(str(resources.files("atxf.data").joinpath("banned_words_default.txt")))


ENGLISH_FUNCTION_WORDS = frozenset(_bundled("english_function_words.txt"))


class CleaningConfig:
    """Cleaning rules: banned-word list, optional name list, language
    threshold and the per-side token cap (overlong sides are truncated,
    not dropped)."""

    def __init__(self, banned_words_path, name_list_path=None,
                 english_stopword_threshold: float = 0.1,
                 max_sequence_tokens: int = 40):
        if not 0.0 <= english_stopword_threshold <= 1.0:
            raise ConfigError(
                f"english_stopword_threshold must be in [0,1], got {english_stopword_threshold}"
            )
        if max_sequence_tokens < 1:
            raise ConfigError("max_sequence_tokens must be positive")
        self.banned_words_path = Path(banned_words_path)
        self.name_list_path = Path(name_list_path) if name_list_path else None
        self.english_stopword_threshold = english_stopword_threshold
        self.max_sequence_tokens = max_sequence_tokens
        self.banned_words = _read_token_file(self.banned_words_path)
        if not self.banned_words:
            raise ConfigError(f"banned-word list {self.banned_words_path} is empty")
        self.name_tokens = _read_token_file(self.name_list_path) if self.name_list_path else set()


def default_cleaning_config(**overrides) -> CleaningConfig:
    return CleaningConfig(default_banned_words_path(), **overrides)


@dataclass
class IngestResult:
    records: list[RawRecord]
    skipped: int


def ingest_csv(path, domain: str) -> IngestResult:
    """Parse one domain's raw CSV; malformed rows are counted, not fatal."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        records: list[RawRecord] = []
        skipped = 0
        for row in reader:
            tweet_id = (row.get("tweet_id") or "").strip()
            text = row.get("text") or ""
            inbound_raw = (row.get("inbound") or "").strip().lower()
            if not tweet_id or not text.strip() or inbound_raw not in ("true", "false"):
                skipped += 1
                continue
            response_ids = [t.strip() for t in (row.get("response_tweet_id") or "").split(",")
                            if t.strip()]
            in_response = (row.get("in_response_to_tweet_id") or "").strip() or None
            records.append(RawRecord(
                tweet_id=tweet_id,
                author_id=(row.get("author_id") or "").strip(),
                inbound=inbound_raw == "true",
                created_at=(row.get("created_at") or "").strip(),
                text=text,
                response_tweet_id=response_ids,
                in_response_to_tweet_id=in_response,
            ))
    return IngestResult(records, skipped)


def thread_pairs(records: list[RawRecord], support_author: str | None = None):
    """Link each inbound customer tweet to the support reply answering it.

    Returns raw (context, response) text pairs in reply order; tweets
    without an answering support reply are dropped.
    """
    by_id = {r.tweet_id: r for r in records}
    pairs = []
    for r in records:
        if r.inbound or not r.in_response_to_tweet_id:
            continue
        if support_author is not None and r.author_id != support_author:
            continue
        parent = by_id.get(r.in_response_to_tweet_id)
        if parent is not None and parent.inbound:
            pairs.append((parent.text, r.text))
    return pairs


def clean_text(s: str, config: CleaningConfig) -> str | None:
    """Lower-case, strip handles/URLs/names/punctuation; None = drop."""
    s = s.lower()
    s = _URL_RE.sub(" ", s)
    s = _HANDLE_RE.sub(" ", s)
    s = _NON_ALNUM_RE.sub("", s)
    tokens = [t for t in s.split() if t not in config.name_tokens]
    tokens = tokens[: config.max_sequence_tokens]
    return " ".join(tokens) if tokens else None


def clean_pairs(raw_pairs, domain: str, config: CleaningConfig) -> list[ConversationPair]:
    """Clean both sides; a pair survives only if both sides survive."""
    out = []
    for context, response in raw_pairs:
        c = clean_text(context, config)
        r = clean_text(response, config)
        if c is not None and r is not None:
            out.append(ConversationPair(domain, c, r))
    return out


def filter_profanity(pairs, banned_words) -> list[ConversationPair]:
    """Drop pairs where either side contains a banned token as a whole word."""
    banned = set(banned_words)
    if not banned:
        raise ConfigError("banned-word list is empty")

    def offensive(text: str) -> bool:
        return any(tok in banned for tok in text.split())

    return [p for p in pairs if not offensive(p.context) and not offensive(p.response)]


def filter_non_english(pairs, config: CleaningConfig) -> list[ConversationPair]:
    """Keep pairs whose customer side hits enough English function words."""
    threshold = config.english_stopword_threshold
    kept = []
    for p in pairs:
        tokens = p.context.split()
        hits = sum(1 for t in tokens if t in ENGLISH_FUNCTION_WORDS)
        if tokens and hits / len(tokens) >= threshold:
            kept.append(p)
    return kept


def split_70_30(pairs, seed: int, domain: str | None = None) -> SplitCorpus:
    """Deterministic seeded shuffle, first floor(0.7 N) pairs to train."""
    if len(pairs) < 2:
        raise CorpusError(f"need at least 2 pairs to split, got {len(pairs)}")
    shuffled = list(pairs)
    random.Random(seed).shuffle(shuffled)
    cut = int(0.7 * len(shuffled))
    name = domain if domain is not None else shuffled[0].domain
    return SplitCorpus(name, shuffled[:cut], shuffled[cut:])


@dataclass
class CorpusStats:
    pair_counts: dict[str, int]
    unique_tokens: int


def corpus_stats(corpora: dict[str, list[ConversationPair]]) -> CorpusStats:
    """Per-domain pair counts plus the union vocabulary size."""
    tokens: set[str] = set()
    counts = {}
    for domain, pairs in corpora.items():
        counts[domain] = len(pairs)
        for p in pairs:
            tokens.update(p.context.split())
            tokens.update(p.response.split())
    return CorpusStats(counts, len(tokens))


def build_domain_pairs(records, domain: str, support_author,
                       config: CleaningConfig) -> list[ConversationPair]:
    """Thread, clean, language-filter and profanity-filter one domain."""
    raw = thread_pairs(records, support_author)
    pairs = clean_pairs(raw, domain, config)
    pairs = filter_non_english(pairs, config)
    return filter_profanity(pairs, config.banned_words)


def write_pairs_tsv(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"{p.context}\t{p.response}\n")


def read_pairs_tsv(path, domain: str) -> list[ConversationPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise SchemaError(f"{path}: expected 2 tab-separated columns, got {len(parts)}")
            pairs.append(ConversationPair(domain, parts[0], parts[1]))
    return pairs
