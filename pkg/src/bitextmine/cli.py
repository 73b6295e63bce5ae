"""Command-line entry points.

Subcommands cover the full pipeline: generate a synthetic corpus, train a
checkpoint, encode text to embedding files, mine sentence pairs, match
documents, and evaluate retrieval precision.  Exit codes: 0 success, 1 user
error (bad files, bad config), 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback

import numpy as np

from . import annindex, corpusio, miner, serialization, trainer
from .encoder import ModelConfig, TowerConfig, encode_corpus
from .errors import MiningError
from .evalkit import SynthCorpusConfig, make_synthetic_corpus, precision_at_n
from .miner import DocMatchConfig
from .textpipe import FeaturizerConfig
from .trainer import TrainingConfig


def _read_text_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def load_train_configs(path: str) -> tuple[ModelConfig, TrainingConfig, int]:
    """Parse a flat key=value config into model + training configs.

    Returns (model config, training config, warm-up steps for hard-negative
    mining).  Keys mirror the dataclass field names; unknown keys are errors.
    """
    reader = corpusio.ConfigReader(corpusio.read_config(path), origin=str(path))
    featurizer = FeaturizerConfig(
        hash_buckets=reader.get_int("hash_buckets", 4096),
        hash_seed=reader.get_int("hash_seed", 0),
        lowercase=reader.get_bool("lowercase", True),
        unicode_normalize=reader.get_bool("unicode_normalize", True),
    )
    input_dim = reader.get_int("input_dim", 64)
    hidden_dims = reader.get_int_list("hidden_dims", (64, 64, 64, 64))
    tower = TowerConfig(
        input_dim=input_dim,
        hidden_dims=hidden_dims,
        residual_skip=reader.get_int("residual_skip", 1),
    )
    model_cfg = ModelConfig(
        featurizer=featurizer,
        source=tower,
        target=tower,
        dropout_rate=reader.get_float("dropout_rate", 0.4),
    )
    defaults = TrainingConfig()
    train_cfg = TrainingConfig(
        batch_size=reader.get_int("batch_size", defaults.batch_size),
        learning_rate=reader.get_float("learning_rate", defaults.learning_rate),
        decay_factor=reader.get_float("decay_factor", defaults.decay_factor),
        decay_every_steps=reader.get_int("decay_every_steps", defaults.decay_every_steps),
        total_steps=reader.get_int("total_steps", defaults.total_steps),
        hard_negatives_per_example=reader.get_int(
            "hard_negatives_per_example", defaults.hard_negatives_per_example
        ),
        hard_fraction=reader.get_float("hard_fraction", defaults.hard_fraction),
        confidence_task_fraction=reader.get_float(
            "confidence_task_fraction", defaults.confidence_task_fraction
        ),
        confidence_adagrad_rate=reader.get_float(
            "confidence_adagrad_rate", defaults.confidence_adagrad_rate
        ),
        seed=reader.get_int("seed", defaults.seed),
    )
    warmup = reader.get_int("hard_warmup_steps", train_cfg.total_steps)
    reader.reject_unknown()
    return model_cfg, train_cfg, warmup


def _progress_printer(every: int):
    if every <= 0:
        return None

    def on_step(step: int, task: str, loss: float, lr: float) -> None:
        if step % every == 0:
            print(f"{step}\t{task}\t{loss:.6f}\t{lr:.6g}")

    return on_step


def cmd_train(args: argparse.Namespace) -> int:
    model_cfg, train_cfg, warmup = load_train_configs(args.config)
    corpus = corpusio.read_parallel_corpus(args.corpus)
    on_step = _progress_printer(args.log_every)
    if args.hard_negatives:
        warm_cfg = dataclasses.replace(train_cfg, total_steps=warmup)
        model = trainer.train(warm_cfg, corpus, model_config=model_cfg, on_step=on_step)
        table = trainer.mine_hard_negatives(
            model,
            corpus,
            train_cfg.hard_negatives_per_example,
            train_cfg.hard_fraction,
            seed=train_cfg.seed,
        )
        print(f"mined hard negatives for {len(table)} sources", file=sys.stderr)
        model = trainer.train(train_cfg, corpus, hard_table=table, model=model, on_step=on_step)
    else:
        model = trainer.train(train_cfg, corpus, model_config=model_cfg, on_step=on_step)
    serialization.write_checkpoint(model, args.out)
    print(f"wrote checkpoint to {args.out} (step {model.step})", file=sys.stderr)
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    model = serialization.read_checkpoint(args.checkpoint)
    lines = _read_text_lines(args.text_file)
    matrix = encode_corpus(lines, args.side, model)
    serialization.write_embeddings(matrix, args.out)
    with open(args.out + ".ids", "w", encoding="utf-8") as f:
        for i in range(len(lines)):
            f.write(f"{i}\n")
    print(f"encoded {len(lines)} sentences -> {args.out}", file=sys.stderr)
    return 0


def _build_index(matrix: np.ndarray, ids: list, clusters: int, n_probe: int, seed: int):
    if clusters > 0:
        return annindex.build_partitioned(matrix, ids, clusters, n_probe, seed=seed)
    return annindex.build_exact(matrix, ids)


def cmd_mine_sentences(args: argparse.Namespace) -> int:
    model = serialization.read_checkpoint(args.checkpoint)
    src_lines = _read_text_lines(args.source_file)
    tgt_lines = _read_text_lines(args.target_file)
    if not src_lines or not tgt_lines:
        open(args.out, "w", encoding="utf-8").close()
        print("nothing to mine (empty input)", file=sys.stderr)
        return 0
    tgt_ids = [f"t{i}" for i in range(len(tgt_lines))]
    v = encode_corpus(tgt_lines, "target", model)
    index = _build_index(v, tgt_ids, args.clusters, args.n_probe, args.seed)
    sources = [(f"s{i}", text) for i, text in enumerate(src_lines)]
    retrievals = miner.retrieve(sources, index, model, n=1)
    pairs = miner.mine_sentence_pairs(
        retrievals,
        source_texts=dict(sources),
        target_texts=dict(zip(tgt_ids, tgt_lines)),
        featurizer=model.featurizer,
        threshold=args.threshold,
    )
    corpusio.write_mined_pairs(pairs, args.out)
    print(f"mined {len(pairs)} pairs -> {args.out}", file=sys.stderr)
    return 0


def cmd_match_docs(args: argparse.Namespace) -> int:
    model = serialization.read_checkpoint(args.checkpoint)
    source_docs = corpusio.read_documents(args.source_docs)
    target_docs = corpusio.read_documents(args.target_docs)
    cfg = DocMatchConfig(
        retrieval_depth=args.depth,
        w1=args.w1,
        w2=args.w2,
        normalized_positions=args.normalized_positions,
    )
    all_tgt = [(sid, text) for doc in target_docs for sid, text in zip(doc.sentence_ids, doc.texts)]
    v = encode_corpus([t for _, t in all_tgt], "target", model)
    index = annindex.build_exact(v, [sid for sid, _ in all_tgt])
    owners = miner.target_owner_map(target_docs)
    retrievals = miner.retrieve_for_docs(source_docs, index, model, cfg.retrieval_depth)

    method = "alignment-counts" if args.baseline else "rank-confidence-offset"
    print(f"# method={method} depth={cfg.retrieval_depth} w1={cfg.w1} w2={cfg.w2}")
    matches: dict[str, tuple[str, float]] = {}
    if args.baseline:
        all_src = [(sid, t) for doc in source_docs for sid, t in zip(doc.sentence_ids, doc.texts)]
        u = encode_corpus([t for _, t in all_src], "source", model)
        src_index = annindex.build_exact(u, [sid for sid, _ in all_src])
        reverse_best = miner.best_source_per_target(target_docs, src_index, model)
        for doc in source_docs:
            counts = miner.mutual_link_counts(doc, retrievals, reverse_best, owners, target_docs)
            if not counts:
                print(f"warning: no mutual links for {doc.doc_id}", file=sys.stderr)
                continue
            tgt_doc, count = miner.best_by_score(counts)
            matches[doc.doc_id] = (tgt_doc, float(count))
    else:
        for doc in source_docs:
            scores = miner.score_candidates(doc, retrievals, target_docs, owners, cfg)
            if not scores:
                print(f"warning: no candidates for {doc.doc_id}", file=sys.stderr)
                continue
            matches[doc.doc_id] = miner.best_by_score(scores)
    corpusio.write_doc_map(matches, args.out)
    for src_doc in sorted(matches):
        tgt_doc, score = matches[src_doc]
        print(f"{src_doc}\t{tgt_doc}\t{score:.6f}")
    if args.gold:
        gold = corpusio.read_doc_map(args.gold)
        correct = sum(1 for d, g in gold.items() if d in matches and matches[d][0] == g)
        print(f"accuracy\t{correct / len(gold):.6f}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = serialization.read_checkpoint(args.checkpoint)
    pairs = corpusio.read_parallel_corpus(args.eval_pairs)
    pool = _read_text_lines(args.pool_file) if args.pool_file else [t for _, t in pairs]
    if args.pool_size and args.pool_size < len(pool):
        rng = np.random.default_rng(args.seed)
        pool = [pool[i] for i in rng.choice(len(pool), size=args.pool_size, replace=False)]
    elif args.pool_size and args.pool_size > len(pool):
        print(
            f"warning: requested pool {args.pool_size} > available {len(pool)}; using all",
            file=sys.stderr,
        )
    ns = [int(x) for x in args.ns.split(",") if x.strip()]
    result = precision_at_n(model, pairs, pool, ns)
    print(f"# queries={result.num_queries} pool={len(pool)} ns={','.join(map(str, ns))}")
    for n in sorted(result.p_at):
        print(f"p_at\t{n}\t{result.p_at[n]:.6f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthCorpusConfig(
        seed=args.seed,
        num_pairs=args.num_pairs,
        vocab_size=args.vocab_size,
        sentence_length_range=(args.min_len, args.max_len),
        family_size=args.family_size,
        shared_fraction=args.shared_fraction,
        doc_size=args.doc_size,
        noise_rate=args.noise_rate,
        deletion_rate=args.deletion_rate,
    )
    corpus = make_synthetic_corpus(cfg)
    corpusio.write_parallel_corpus(corpus.pairs, f"{args.out_prefix}.pairs.tsv")
    print(f"wrote {len(corpus.pairs)} pairs", file=sys.stderr)
    if cfg.doc_size > 0:
        corpusio.write_documents(corpus.source_docs, f"{args.out_prefix}.source_docs.tsv")
        corpusio.write_documents(corpus.target_docs, f"{args.out_prefix}.target_docs.tsv")
        with open(f"{args.out_prefix}.gold_docs.tsv", "w", encoding="utf-8") as f:
            for src_doc in sorted(corpus.gold_doc_map):
                f.write(f"{src_doc}\t{corpus.gold_doc_map[src_doc]}\n")
        print(f"wrote {len(corpus.source_docs)} document pairs", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bitextmine", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a dual-encoder checkpoint")
    t.add_argument("config", help="key=value config file")
    t.add_argument("corpus", help="parallel corpus TSV (source<TAB>target)")
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--hard-negatives", action="store_true",
                   help="warm up, mine hard negatives, then continue training")
    t.add_argument("--log-every", type=int, default=100, help="progress line period (0 = off)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode", help="encode a text file to an embedding matrix")
    e.add_argument("checkpoint")
    e.add_argument("text_file")
    e.add_argument("--side", choices=("source", "target"), required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    m = sub.add_parser("mine-sentences", help="mine sentence pairs from two text files")
    m.add_argument("checkpoint")
    m.add_argument("source_file")
    m.add_argument("target_file")
    m.add_argument("--threshold", type=float, default=0.5)
    m.add_argument("--clusters", type=int, default=0, help="0 = exact scan")
    m.add_argument("--n-probe", type=int, default=1)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mine_sentences)

    d = sub.add_parser("match-docs", help="match source documents to target documents")
    d.add_argument("checkpoint")
    d.add_argument("source_docs")
    d.add_argument("target_docs")
    d.add_argument("--depth", type=int, default=10)
    d.add_argument("--w1", type=float, default=5.0)
    d.add_argument("--w2", type=float, default=-2.0)
    d.add_argument("--baseline", action="store_true", help="mutual-link counting instead")
    d.add_argument("--normalized-positions", action="store_true",
                   help="divide sentence positions by doc length in the offset term")
    d.add_argument("--gold", help="gold map TSV for accuracy reporting")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_match_docs)

    v = sub.add_parser("evaluate", help="precision@N of a checkpoint on eval pairs")
    v.add_argument("checkpoint")
    v.add_argument("eval_pairs", help="parallel corpus TSV")
    v.add_argument("--pool-file", help="distractor pool, one sentence per line")
    v.add_argument("--pool-size", type=int, default=0, help="0 = use the whole pool")
    v.add_argument("--ns", default="1,3,10")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="generate a synthetic cipher corpus")
    s.add_argument("--out-prefix", required=True)
    s.add_argument("--num-pairs", type=int, default=1000)
    s.add_argument("--vocab-size", type=int, default=100)
    s.add_argument("--min-len", type=int, default=4)
    s.add_argument("--max-len", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--family-size", type=int, default=1)
    s.add_argument("--shared-fraction", type=float, default=0.0)
    s.add_argument("--doc-size", type=int, default=0)
    s.add_argument("--noise-rate", type=float, default=0.0)
    s.add_argument("--deletion-rate", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MiningError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        print("internal error:", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
