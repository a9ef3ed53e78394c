"""Desk-scale transformer support chatbots with cross-domain weight transfer."""

from .autodiff import AdamState, ComputationRecord, Tensor, adam_step, backward, record, seeded_init
from .chat import ChatSession, DomainModel, PacingConfig, greedy_decode, tts_wait_seconds
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import (
    CleaningConfig,
    ConversationPair,
    RawRecord,
    SplitCorpus,
    clean_text,
    corpus_stats,
    filter_non_english,
    filter_profanity,
    ingest_csv,
    split_70_30,
    thread_pairs,
)
from .metrics import MetricsReport, evaluate_model, render_matrix_tables, sparse_ce_loss, top_k_accuracy
from .model import (
    ModelConfig,
    count_parameters,
    forward,
    init_parameters,
    make_masks,
    multi_head_attention,
    positional_encoding,
    scaled_dot_product_attention,
)
from .training import EpochLog, ExperimentPlan, TrainConfig, run_experiment_matrix, topology_grid_search, train
from .vocab import Vocabulary, build_shared_vocabulary, coverage

__version__ = "0.1.0"
