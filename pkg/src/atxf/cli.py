"""Command-line entry points: ingest, build-vocab, train, matrix, grid,
evaluate, chat, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import training as training_mod
from .chat import DomainModel, PacingConfig, greedy_decode, tts_wait_seconds
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import CleaningConfig, default_banned_words_path
from .errors import AtxfError
from .model import ModelConfig, count_parameters
from .server import ModelStore, serve_http
from .training import ExperimentPlan, TrainConfig
from .vocab import Vocabulary, build_shared_vocabulary

MODEL_DIR_ENV = "ATXF_MODEL_DIR"


def _load_config_file(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _model_config(args, overrides: dict, vocab_size: int) -> ModelConfig:
    cfg = {
        "vocab_size": vocab_size,
        "d_model": args.d_model,
        "num_heads": args.heads,
        "d_ff": args.d_ff,
        "num_encoder_layers": args.enc_layers,
        "num_decoder_layers": args.dec_layers,
        "max_len": args.max_len,
        "dropout": args.dropout,
    }
    cfg.update(overrides.get("model", {}))
    cfg["vocab_size"] = vocab_size
    return ModelConfig.from_dict(cfg)


def _train_config(args, overrides: dict) -> TrainConfig:
    cfg = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "learning_rate": args.lr,
        "patience": args.patience,
    }
    cfg.update(overrides.get("train", {}))
    return TrainConfig(**cfg)


def _model_dir(args) -> Path:
    if args.model_dir:
        return Path(args.model_dir)
    env = os.environ.get(MODEL_DIR_ENV)
    return Path(env) if env else Path("models")


def _cleaning(args) -> CleaningConfig:
    banned = args.banned_words or default_banned_words_path()
    return CleaningConfig(banned, name_list_path=args.name_list,
                          english_stopword_threshold=args.english_threshold,
                          max_sequence_tokens=args.max_len)


def _load_split(path, domain, seed) -> corpus_mod.SplitCorpus:
    pairs = corpus_mod.read_pairs_tsv(path, domain)
    return corpus_mod.split_70_30(pairs, seed, domain=domain)


def _corpus_dir_domains(corpus_dir) -> dict[str, Path]:
    return {p.stem: p for p in sorted(Path(corpus_dir).glob("*.tsv"))}


def cmd_ingest(args) -> int:
    cleaning = _cleaning(args)
    if args.csv:
        result = corpus_mod.ingest_csv(args.csv, args.domain)
        pairs = corpus_mod.build_domain_pairs(result.records, args.domain,
                                              args.support_author, cleaning)
        print(f"{args.domain}: {len(result.records)} records "
              f"({result.skipped} malformed rows skipped)")
    else:
        raw = corpus_mod.read_pairs_tsv(args.tsv, args.domain)
        pairs = corpus_mod.clean_pairs(((p.context, p.response) for p in raw),
                                       args.domain, cleaning)
        pairs = corpus_mod.filter_non_english(pairs, cleaning)
        pairs = corpus_mod.filter_profanity(pairs, cleaning.banned_words)
    corpus_mod.write_pairs_tsv(pairs, args.out)
    print(f"{args.domain}: wrote {len(pairs)} cleaned pairs to {args.out}")
    return 0


def cmd_build_vocab(args) -> int:
    corpora = {}
    for path in args.corpus:
        domain = Path(path).stem
        corpora[domain] = corpus_mod.read_pairs_tsv(path, domain)
    vocab = build_shared_vocabulary(corpora, args.capacity)
    vocab.save(args.out)
    stats = corpus_mod.corpus_stats(corpora)
    print(f"vocabulary: {vocab.size} tokens ({vocab.content_size} content) "
          f"over {stats.unique_tokens} unique corpus tokens")
    print(f"fingerprint: {vocab.fingerprint}")
    return 0


def cmd_train(args) -> int:
    overrides = _load_config_file(args.config)
    vocab = Vocabulary.load(args.vocab)
    split = _load_split(args.corpus, args.domain, args.seed)
    init = load_checkpoint(args.init) if args.init else None
    model_config = None if init else _model_config(args, overrides, vocab.size)
    train_config = _train_config(args, overrides)
    ckpt, logs = training_mod.train(split, vocab, model_config, train_config, init=init)
    for log in logs:
        print(f"epoch {log.epoch}: train_loss={log.train_loss:.4f} "
              f"val_loss={log.val_loss:.4f} val_acc={log.val_accuracy:.4f} "
              f"top5={log.val_top5:.4f} top10={log.val_top10:.4f}")
    save_checkpoint(ckpt, args.out)
    if args.log_json:
        with open(args.log_json, "w", encoding="utf-8") as fh:
            json.dump([log.to_dict() for log in logs], fh, indent=2)
    n_params = count_parameters(ckpt.config)
    print(f"saved {args.out} ({n_params} parameters, "
          f"best val_loss {min(l.val_loss for l in logs):.4f})")
    return 0


def cmd_matrix(args) -> int:
    overrides = _load_config_file(args.config)
    vocab = Vocabulary.load(args.vocab)
    paths = _corpus_dir_domains(args.corpus_dir or args.data_dir)
    domains = args.domains.split(",") if args.domains else sorted(paths)
    corpora = {d: _load_split(paths[d], d, args.seed) for d in domains}
    plan = ExperimentPlan(domains, _train_config(args, overrides))
    model_config = _model_config(args, overrides, vocab.size)
    result = training_mod.run_experiment_matrix(
        plan, corpora, vocab, model_config, args.out_dir, max_cells=args.max_cells)
    print(f"matrix: {len(result.executed)} cells executed, "
          f"{len(result.skipped)} skipped (of {plan.cell_count()})")
    tables = metrics_mod.render_matrix_tables(result.reports, domains)
    for metric in ("loss", "accuracy", "top5", "top10"):
        out = Path(args.out_dir) / f"table_{metric}.csv"
        out.write_text(tables[metric], encoding="utf-8")
    summary_path = Path(args.out_dir) / "summary.json"
    summary_path.write_text(json.dumps(tables["summary"], indent=2), encoding="utf-8")
    for metric, s in tables["summary"].items():
        print(f"{metric}: {s['improved']} of {s['total']} targets improved "
              f"by at least one source")
    return 0


def cmd_grid(args) -> int:
    overrides = _load_config_file(args.config)
    vocab = Vocabulary.load(args.vocab)
    split = _load_split(args.corpus, args.domain, args.seed)
    base = _model_config(args, overrides, vocab.size)
    heads = [int(h) for h in args.grid_heads.split(",")]
    dffs = [int(d) for d in args.grid_dff.split(",")]
    result = training_mod.topology_grid_search(
        split, vocab, heads, dffs, args.epochs, base,
        train_config=_train_config(args, overrides))
    for (h, dff), loss in sorted(result.losses.items()):
        marker = "  <- best" if (h, dff) == result.best else ""
        print(f"heads={h:<3d} d_ff={dff:<4d} val_loss={loss:.4f}{marker}")
    return 0


def cmd_evaluate(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    ckpt = load_checkpoint(args.checkpoint)
    split = _load_split(args.corpus, args.domain or ckpt.domain, args.seed)
    report = metrics_mod.evaluate_model(ckpt, split, vocab, batch_size=args.batch_size)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_chat(args) -> int:
    store = ModelStore(_model_dir(args), PacingConfig(args.wpm))
    domain = args.domain or store.domains()[0]
    if domain not in store.models:
        print(f"unknown domain '{domain}'; available: {store.domains()}", file=sys.stderr)
        return 1
    dm: DomainModel = store.models[domain]
    rng = np.random.default_rng(args.seed) if args.temperature > 0 else None

    def one_turn(message: str) -> None:
        reply = greedy_decode(dm, message, cleaning=store.cleaning,
                              temperature=args.temperature, rng=rng)
        wait = tts_wait_seconds(reply, store.pacing)
        print(f"[{domain}] {reply}")
        print(f"(speech pacing: {wait:.2f}s)")

    if args.message:
        one_turn(args.message)
        return 0
    print(f"chatting with '{domain}' (empty line quits)")
    while True:
        try:
            message = input("> ").strip()
        except EOFError:
            break
        if not message:
            break
        one_turn(message)
    return 0


def cmd_serve(args) -> int:
    store = ModelStore(_model_dir(args), PacingConfig(args.wpm))
    server = serve_http(None, args.address, static_dir=args.static_dir, store=store)
    host, port = server.server_address[:2]
    print(f"serving {store.domains()} on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atxf",
                                     description="domain chatbot training and serving")
    parser.add_argument("--config", help="JSON file with model/train overrides")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--model-dir", default=None,
                        help=f"model directory (env {MODEL_DIR_ENV} overrides default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean a raw CSV or pairs TSV into corpus TSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv")
    src.add_argument("--tsv")
    p.add_argument("--domain", required=True)
    p.add_argument("--support-author", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--banned-words", default=None)
    p.add_argument("--name-list", default=None)
    p.add_argument("--english-threshold", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=40)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-vocab", help="build the shared vocabulary")
    p.add_argument("--corpus", nargs="+", required=True, help="cleaned pair TSVs")
    p.add_argument("--capacity", type=int, default=30000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    def add_model_flags(p):
        p.add_argument("--d-model", type=int, default=256)
        p.add_argument("--heads", type=int, default=8)
        p.add_argument("--d-ff", type=int, default=256)
        p.add_argument("--enc-layers", type=int, default=2)
        p.add_argument("--dec-layers", type=int, default=2)
        p.add_argument("--max-len", type=int, default=40)
        p.add_argument("--dropout", type=float, default=0.0)

    def add_train_flags(p):
        p.add_argument("--epochs", type=int, default=20)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--patience", type=int, default=3)

    p = sub.add_parser("train", help="train one domain model")
    p.add_argument("--domain", required=True)
    p.add_argument("--corpus", required=True, help="cleaned pairs TSV")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", default=None, help="source checkpoint for transfer")
    p.add_argument("--log-json", default=None)
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("matrix", help="run the baseline + transfer matrix")
    p.add_argument("--corpus-dir", default=None, help="defaults to --data-dir")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--domains", default=None, help="comma-separated subset")
    p.add_argument("--max-cells", type=int, default=None)
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("grid", help="topology grid search")
    p.add_argument("--domain", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--grid-heads", default="2,4,8,16")
    p.add_argument("--grid-dff", default="64,128,256,512")
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", help="validation metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--domain", default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("chat", help="terminal REPL against a served domain")
    p.add_argument("--domain", default=None)
    p.add_argument("--message", default=None, help="single turn, then exit")
    p.add_argument("--wpm", type=float, default=152.88)
    p.add_argument("--temperature", type=float, default=0.0,
                   help="0 = greedy; >0 samples from the softmax")
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="HTTP inference service")
    p.add_argument("--address", default="127.0.0.1:8080")
    p.add_argument("--static-dir", default=None, help="browser console assets")
    p.add_argument("--wpm", type=float, default=152.88)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AtxfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
