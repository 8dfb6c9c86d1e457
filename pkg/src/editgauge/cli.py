"""Command-line interface: ``editgauge <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .corpus import (DEFAULT_CLASSES, build_corpus, group_by_page, open_dump, parse_dump,
                     read_corpus, read_gold_labels, sort_and_pair, split_corpus, split_sizes, write_corpus)
from .diff import line_diff, split_lines, token_diff
from .errors import DataError, EditGaugeError, OresError
from .estimator import EditQualityModel
from .extraction import SEGMENTERS, ExtractionConfig, extract_edit, tokenize
from .ores import OresClient, offline_transport
from .stats import stats_len_vs_acc, stats_lengths, write_csv
from .training import (SWEEP_LAMBDAS, TrainConfig, evaluate, format_sweep, length_correctness, split_records,
                       sweep_lambda, train)

log = logging.getLogger("editgauge")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _unit_interval(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="\n")


# --- extract / label / split --------------------------------------------------------------------

def _extract_pair(job):
    pair, cfg, min_sentences = job
    records, stats = build_corpus([pair], None, cfg, min_sentences)
    return records, stats


def cmd_extract(args):
    cfg = ExtractionConfig(args.lang, args.match_threshold, args.segmenter)
    with open_dump(args.dump) as fh:
        revisions = list(parse_dump(fh))
    pairs = [p for revs in group_by_page(revisions).values() for p in sort_and_pair(revs)]
    jobs = [(p, cfg, args.min_sentences) for p in pairs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_pair, jobs, chunksize=16))
    else:
        results = [_extract_pair(j) for j in jobs]
    records, totals = [], {}
    for recs, stats in results:
        records.extend(recs)
        for k, v in stats.items():
            totals[k] = totals.get(k, 0) + v
    write_corpus(records, args.out)
    log.info("revisions=%d %s", len(revisions), " ".join(f"{k}={v}" for k, v in sorted(totals.items())))
    print(json.dumps({"revisions": len(revisions), **totals}), file=sys.stderr)


def _fetch_all(client, rev_ids, skip_missing):
    if not skip_missing:
        return client.fetch_many(rev_ids)
    labels = {}
    for rev_id in rev_ids:
        try:
            labels[rev_id] = client.fetch(rev_id)
        except OresError as err:
            log.warning("no label for %d: %s", rev_id, err)
    return labels


def cmd_label(args):
    classes = tuple(args.classes.split(",")) if args.classes else DEFAULT_CLASSES
    records = read_corpus(args.corpus)
    if args.gold:
        labels = read_gold_labels(args.gold, classes)
        gold = True
    else:
        client = OresClient(args.wiki, args.endpoint, args.model, args.ores_cache, classes,
                            transport=offline_transport if args.offline else None,
                            retries=args.retries, parallelism=args.parallel)
        labels = _fetch_all(client, [r.rev_id for r in records], args.skip_missing)
        gold = False
        renorm = sum(1 for d in labels.values() if d.renormalized)
        if renorm:
            log.warning("%d distributions were renormalized", renorm)
    out, missing = [], 0
    for r in records:
        q = labels.get(r.rev_id)
        if q is None:
            missing += 1
            continue
        out.append(replace(r, quality=q, gold=gold))
    if missing and not args.skip_missing:
        raise DataError(f"{missing} records have no label (use --skip-missing to drop them)")
    write_corpus(out, args.out)
    print(json.dumps({"labelled": len(out), "missing": missing}), file=sys.stderr)


def cmd_split(args):
    records = split_corpus(read_corpus(args.corpus), args.seed)
    write_corpus(records, args.out)
    n_train, n_valid, n_test = split_sizes(len(records))
    print(json.dumps({"train": n_train, "valid": n_valid, "test": n_test}), file=sys.stderr)


# --- training and evaluation ----------------------------------------------------------------------

TRAIN_FLAGS = {
    "lam": "lam", "epochs": "epochs", "batch_size": "batch_size", "lr": "lr", "seed": "seed",
    "loss": "loss_mode", "encoder": "encoder", "pooling": "pooling", "combine_message": "combine_message",
    "beam": "beam", "max_steps": "max_steps", "patience": "patience", "d_tok": "d_tok", "d_lab": "d_lab",
    "enc_hidden": "enc_hidden", "dec_hidden": "dec_hidden", "min_msg_freq": "min_msg_freq",
}


def _train_config(args) -> TrainConfig:
    base = asdict(TrainConfig.from_json(args.config)) if args.config else asdict(TrainConfig())
    for flag, key in TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    return TrainConfig.from_dict(base)


def _add_train_flags(p):
    p.add_argument("--config", help="JSON file with training options (flags override it)")
    p.add_argument("--lambda", dest="lam", type=_unit_interval, help="classification loss weight")
    p.add_argument("--encoder", choices=["edit-sentence", "no-tags", "regular"])
    p.add_argument("--loss", choices=["kl", "ce", "auto"])
    p.add_argument("--pooling", choices=["max", "mean"])
    p.add_argument("--combine-message", action="store_const", const=True, default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--beam", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--d-tok", type=int)
    p.add_argument("--d-lab", type=int)
    p.add_argument("--enc-hidden", type=int)
    p.add_argument("--dec-hidden", type=int)
    p.add_argument("--min-msg-freq", type=int)


def cmd_train(args):
    cfg = _train_config(args)
    records = read_corpus(args.corpus)
    model = train(records, cfg)
    model.save(args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            json.dump(model.history_, fh, indent=1)
    last = model.history_[-1] if model.history_ else {}
    print(json.dumps({"epochs": model.n_epochs_, **{k: v for k, v in last.items() if k.startswith("val_")}}),
          file=sys.stderr)


def _load_checked(args, records):
    model = EditQualityModel.load(args.checkpoint)
    tr = split_records(records, "train")
    if tr:
        model.check_corpus([r.edit for r in tr], [list(r.message) for r in tr])
    return model


def cmd_eval(args):
    records = read_corpus(args.corpus)
    model = _load_checked(args, records)
    subset = split_records(records, args.split)
    if not subset:
        raise DataError(f"split {args.split!r} is empty")
    report = evaluate(subset, model)
    print(json.dumps(report.to_dict(), indent=1))


def cmd_sweep(args):
    cfg = _train_config(args)
    lambdas = [float(x) for x in args.lambdas.split(",")] if args.lambdas else list(SWEEP_LAMBDAS)
    rows = sweep_lambda(read_corpus(args.corpus), lambdas, cfg, args.jobs)
    with _open_out(args.out) as fh:
        fh.write(format_sweep(rows, args.format))


def _read_text(path):
    return Path(path).read_text(encoding="utf-8")


def _single_edit(args):
    cfg = ExtractionConfig(args.lang, args.match_threshold, args.segmenter)
    edit = extract_edit(_read_text(args.old), _read_text(args.new), cfg)
    if not edit.sentences:
        raise DataError("the two revisions produce no edit-sentences")
    return edit


def cmd_predict(args):
    model = EditQualityModel.load(args.checkpoint)
    if args.corpus:
        records = split_records(read_corpus(args.corpus), args.split)
        edits = [r.edit for r in records]
        msgs = [list(r.message) for r in records]
        ids = [r.rev_id for r in records]
    else:
        if not (args.old and args.new):
            raise UsageError("give --corpus or both --old and --new")
        edits = [_single_edit(args)]
        msgs = [tokenize(args.message or "")]
        ids = [None]
    probs = model.predict_proba(edits, msgs if model.combine_message else None)
    for rev_id, p in zip(ids, probs):
        row = {"rev_id": rev_id, "prediction": str(model.classes_[p.argmax()]),
               "probabilities": {str(c): round(float(v), 6) for c, v in zip(model.classes_, p)}}
        print(json.dumps(row))


def cmd_describe(args):
    model = EditQualityModel.load(args.checkpoint)
    message = model.generate([_single_edit(args)], args.beam, args.max_steps)[0]
    print(" ".join(message))


def cmd_stats_length(args):
    with open_dump(args.dump) as fh:
        rows = stats_lengths(parse_dump(fh))
    with _open_out(args.out) as fh:
        write_csv(rows, fh)


def cmd_stats_lenacc(args):
    records = read_corpus(args.corpus)
    model = _load_checked(args, records)
    subset = split_records(records, args.split)
    if not subset:
        raise DataError(f"split {args.split!r} is empty")
    edges = [int(e) for e in args.edges.split(",")] if args.edges else None
    rows = stats_len_vs_acc(length_correctness(subset, model), edges)
    with _open_out(args.out) as fh:
        write_csv(rows, fh)


def cmd_diff(args):
    old, new = _read_text(args.old), _read_text(args.new)
    if args.tokens:
        for label, tok in token_diff(tokenize(old), tokenize(new)).ops:
            print(f"{label} {tok}")
        return
    for h in line_diff(split_lines(old), split_lines(new)):
        print(f"@@ -{h.old_start + 1},{len(h.removed_lines)} +{h.new_start + 1},{len(h.added_lines)} @@")
        for line in h.removed_lines:
            print(f"-{line}")
        for line in h.added_lines:
            print(f"+{line}")


# --- parser -----------------------------------------------------------------------------------------

def _add_extraction_flags(p):
    p.add_argument("--lang", choices=["en", "de", "other"], default="en")
    p.add_argument("--match-threshold", type=float, default=0.5)
    p.add_argument("--segmenter", choices=sorted(SEGMENTERS), default="rules")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="editgauge", description="Edit-based article quality assessment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("extract", help="dump -> edit records (JSON lines)")
    p.add_argument("--dump", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-sentences", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("label", help="attach ORES (or gold) quality labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--wiki", default="enwiki")
    p.add_argument("--endpoint", help="scoring service base URL (default: $EDITGAUGE_ORES_ENDPOINT or ORES)")
    p.add_argument("--model", default="articlequality")
    p.add_argument("--ores-cache", metavar="DIR")
    p.add_argument("--offline", action="store_true", help="never touch the network; cache only")
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--gold", metavar="FILE", help="hand labels (Wikiclass style) instead of ORES")
    p.add_argument("--classes", help="comma-separated quality classes, best first")
    p.add_argument("--skip-missing", action="store_true")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("split", help="assign 70/10/20 train/valid/test splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the per-epoch log as JSON")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="lambda sweep table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lambdas", help="comma-separated values (default 0,0.2,0.5,0.8,0.9,1)")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="quality distribution for edits")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus")
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--old")
    p.add_argument("--new")
    p.add_argument("--message", help="edit message (needed by message-combining models)")
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("describe", help="generate an edit message for two revision files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--max-steps", type=int)
    _add_extraction_flags(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("stats-length", help="monthly article/edit length CSV")
    p.add_argument("--dump", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats_length)

    p = sub.add_parser("stats-lenacc", help="accuracy by edit length CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--edges", help="comma-separated bucket edges (default powers of 2 from 256)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats_lenacc)

    p = sub.add_parser("diff", help="debug: print a line or token diff")
    p.add_argument("--tokens", action="store_true")
    p.add_argument("old")
    p.add_argument("new")
    p.set_defaults(func=cmd_diff)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return stop.code if isinstance(stop.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as err:
        print(f"editgauge: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except EditGaugeError as err:
        print(f"editgauge: {type(err).__name__}: {err}", file=sys.stderr)
        return err.exit_code
    except (OSError, ValueError, KeyError) as err:
        print(f"editgauge: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
