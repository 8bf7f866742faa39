"""Command-line entry point.

Exit codes: 0 ok, 2 input error, 3 analysis error (e.g. empty cohort),
4 embedding lookup error, 5 checkpoint error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import impact as impact_mod
from .censornet import AGGREGATORS, ModelConfig, load_checkpoint, save_checkpoint
from .encoder import EMBED_DIM, EmbeddingStore, hash_vector, load_embedding_store, profile_text, text_key, write_embedding_file
from .errors import (
    CheckpointError,
    CohortEmpty,
    CorruptInput,
    EncoderError,
    SingleClass,
    TooFewUsers,
    ValidationError,
)
from .ingest import build_classification_cohort, ingest_jsonl, load_store, save_store
from .trainer import SPLITS, build_examples, evaluate, split_users, train

log = logging.getLogger("twcensor")

EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS, EXIT_ENCODER, EXIT_CHECKPOINT = 0, 2, 3, 4, 5


def _num(x) -> str:
    return f"{x:.10g}" if isinstance(x, float) else str(x)


def _windows(text: str) -> list[int]:
    try:
        out = sorted(int(w) for w in str(text).split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("windows must be positive integers")
    return out


def read_config_file(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# -- commands ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    store, reader = ingest_jsonl(args.input)
    if reader.n_lines == 0:
        log.warning("input %s holds no records", args.input)
    save_store(store, args.out)
    m = store.manifest()
    print(f"records={m['records']} accounts={m['accounts']} withheld_events={m['withheld_events']} "
          f"skipped={reader.n_skipped} duplicates={m['duplicates_dropped']}")
    return EXIT_OK


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_num(x) for x in row])


def cmd_impact(args) -> int:
    store = load_store(args.store)
    if not store.events:
        raise CohortEmpty("store contains no withholding events")
    result = impact_mod.run_study(store.timelines, store.events, args.windows,
                                  with_controls=args.controls, band=args.band, seed=args.seed)
    _write_csv(args.out, ["W", "metric", "group", "n", "pre_median", "post_median", "p_value", "significant"],
               [[t.W, t.metric, t.group, t.n, t.pre_median, t.post_median, t.p_value, int(t.significant)]
                for t in result.tests])
    print(f"cohort={len(result.withheld.cohort)} excluded={len(result.withheld.excluded)}"
          + (f" controls={len(result.matches)} unmatched={len(result.matches.unmatched)}" if result.matches is not None else ""))
    print("note: post interval spans W+1 days ([t, t+W]); pre interval spans W days")
    return EXIT_OK


def _read_audience(path) -> dict[int, str]:
    if not path:
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(r["account_id"]): r.get("audience_tag", "") for r in csv.DictReader(fh)}


def cmd_growth(args) -> int:
    store = load_store(args.store)
    if not store.events:
        raise CohortEmpty("store contains no withholding events")
    tags = _read_audience(args.audience)
    rows, skipped = [], 0
    for a, event in sorted(store.events.items()):
        try:
            g = impact_mod.relative_growth(store.timelines[a], event, args.horizon, tags.get(a, ""))
        except impact_mod.InsufficientSpan:
            skipped += 1
            continue
        rows.append([g.account_id, g.followers_at_t_i, g.pre_rate, g.post_rate, g.audience_tag])
    _write_csv(args.out, ["account_id", "followers_at_t_i", "pre_rate", "post_rate", "audience_tag"], rows)
    print(f"rows={len(rows)} skipped_insufficient_span={skipped}")
    return EXIT_OK


def cmd_embed_hash(args) -> int:
    """Stand-in for the external encoder: hash-test vectors for every text in a store."""
    store = load_store(args.store)
    texts = {t.text for tl in store.timelines.values() for t in tl.tweets}
    texts |= {profile_text(p) for p in store.profiles.values()}
    entries = {text_key(t): hash_vector(t, args.dim, args.seed) for t in texts}
    write_embedding_file(args.out, entries, args.dim, comment=f"hash_test seed={args.seed}")
    print(f"embeddings={len(entries)} dim={args.dim}")
    return EXIT_OK


def _examples(args, store, embeddings: EmbeddingStore, use_profile: bool, max_tweets: int, seed: int):
    cohort = build_classification_cohort(store.timelines, store.events)
    split = split_users(cohort, seed=seed)
    examples = build_examples(cohort, store.timelines, embeddings, store.profiles,
                              max_tweets=max_tweets, seed=seed, use_profile=use_profile)
    by_split = {s: [e for e in examples if split.assignment[e.account_id] == s] for s in SPLITS}
    return examples, by_split


def cmd_train(args) -> int:
    store = load_store(args.store)
    embeddings = load_embedding_store(args.embeddings, dim=None)
    config = ModelConfig(aggregator=args.aggregator, use_meta=args.use_meta, use_profile=args.use_profile,
                         max_tweets=args.max_tweets, embed_dim=embeddings.dim)
    _, data = _examples(args, store, embeddings, config.use_profile, config.max_tweets, args.seed)
    checkpoint, report = train(config, data, seed=args.seed, epochs=args.epochs,
                               batch_size=args.batch_size, lr=args.lr)
    save_checkpoint(checkpoint, args.model)
    if args.report:
        report.write(args.report, args.curves)
    print("\n".join(report.metrics_lines()))
    return EXIT_OK


def _load_for_inference(args):
    checkpoint = load_checkpoint(args.model)
    store = load_store(args.store)
    embeddings = load_embedding_store(args.embeddings, dim=None)
    seed = args.seed if args.seed is not None else int(checkpoint.metadata.get("seed", 0))
    cfg = checkpoint.config
    examples, by_split = _examples(args, store, embeddings, cfg.use_profile, cfg.max_tweets, seed)
    return checkpoint, examples, by_split


def cmd_eval(args) -> int:
    checkpoint, examples, by_split = _load_for_inference(args)
    users = examples if args.split == "all" else by_split[args.split]
    m = evaluate(checkpoint, users)
    print(f"variant={checkpoint.config.variant}")
    print(f"split={args.split}")
    for k, v in m.as_dict().items():
        print(f"{k}={_num(v)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    checkpoint, examples, by_split = _load_for_inference(args)
    users = examples if args.split == "all" else by_split[args.split]
    preds = checkpoint.predict(users)
    _write_csv(args.out, ["account_id", "score", "decision"],
               [[p.account_id, float(p.score), p.decision] for p in preds])
    print(f"predictions={len(preds)} threshold={checkpoint.threshold}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twcensor", description="Withheld-account impact analysis and censorship classifier.")
    p.add_argument("--config", help="key=value file with default flag values")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse a JSONL archive into a timeline store")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("impact", help="pre/post Wilcoxon analysis, one CSV row per (W, metric, group)")
    s.add_argument("--store", required=True)
    s.add_argument("--windows", type=_windows, default=list(impact_mod.DEFAULT_WINDOWS))
    s.add_argument("--out", default="impact.csv")
    s.add_argument("--controls", action="store_true", help="also analyse follower-matched controls")
    s.add_argument("--band", type=float, default=0.10)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_impact)

    s = sub.add_parser("growth", help="relative daily follower growth before and after withholding")
    s.add_argument("--store", required=True)
    s.add_argument("--horizon", type=int, default=90)
    s.add_argument("--out", default="growth.csv")
    s.add_argument("--audience", help="CSV with account_id,audience_tag columns")
    s.set_defaults(func=cmd_growth)

    s = sub.add_parser("embed-hash", help="write deterministic test embeddings for every text in a store")
    s.add_argument("--store", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dim", type=int, default=EMBED_DIM)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_embed_hash)

    def model_flags(s, training: bool):
        s.add_argument("--store", required=True)
        s.add_argument("--embeddings", required=True)
        s.add_argument("--model", required=True)
        if training:
            s.add_argument("--aggregator", choices=AGGREGATORS, default="conv")
            s.add_argument("--use-meta", action="store_true")
            s.add_argument("--use-profile", action="store_true")
            s.add_argument("--seed", type=int, default=0)
            s.add_argument("--epochs", type=int, default=20)
            s.add_argument("--batch-size", type=int, default=16)
            s.add_argument("--lr", type=float, default=2e-3)
            s.add_argument("--max-tweets", type=int, default=50)
        else:
            s.add_argument("--seed", type=int, default=None, help="split seed (default: from checkpoint)")
            s.add_argument("--split", choices=SPLITS + ("all",), default="test")

    s = sub.add_parser("train", help="train one classifier variant")
    model_flags(s, True)
    s.add_argument("--report", help="metrics file (key=value)")
    s.add_argument("--curves", help="per-epoch CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="ROC-AUC and F1 of a checkpoint on one split")
    model_flags(s, False)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="per-user scores and decisions")
    model_flags(s, False)
    s.add_argument("--out", default="predictions.csv")
    s.set_defaults(func=cmd_predict)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    """Parse flags; values from ``--config`` fill in anything not given explicitly."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config_file(known.config)
        subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        command = next((a for a in argv if a in subs.choices), None)
        if command is not None:
            sub = subs.choices[command]
            defaults = {}
            for action in sub._actions:
                if action.dest not in cfg:
                    continue
                raw = cfg[action.dest]
                if isinstance(action, argparse._StoreTrueAction):
                    defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    defaults[action.dest] = action.type(raw) if action.type else raw
                # the config file may satisfy a required flag
                action.required = False
            sub.set_defaults(**defaults)
            for key in sorted(set(cfg) - {a.dest for a in sub._actions}):
                print(f"warning: config key {key!r} does not apply to {command}", file=sys.stderr)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    effective = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "verbose")}
    print("# " + " ".join(f"{k}={','.join(map(str, v)) if isinstance(v, list) else v}" for k, v in effective.items()))
    try:
        return args.func(args)
    except (CorruptInput, ValidationError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CohortEmpty, TooFewUsers, SingleClass) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except EncoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENCODER
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
