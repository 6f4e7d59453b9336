"""Command-line entry point: ``amrqe <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import apps
from . import model as M
from .datagen import CORRUPTION_OPS, CorruptionSpec, gen_training_corpus, write_synthetic
from .graph import AmrEntry, read_corpus_file
from .metrics import DEFAULT_RESTARTS, N_SCORES, TASKS, ScoreVector, evaluate_all
from .preprocess import (DEFAULT_MAX_LEN, DEFAULT_MIN_FREQ, DepTree, Vocab, build_vocab, encode, encoded_to_record,
                         flat_tree, linearize_instance, read_dep_tsv_with_ids, record_to_encoded, tokenize)
from .tables import (SchemaError, ScoreTable, read_manifest, read_prior, read_splits, read_tsv, render, resolve,
                     write_tsv)

DATA_DIR_ENV = "AMRQE_DATA_DIR"
PERCENTILES = (5, 25, 75, 90, 95, 97, 99)
log = logging.getLogger("amrqe")


class CliError(Exception):
    """Expected failure reported as a single line with a nonzero exit code."""


# --------------------------------------------------------------------------- helpers

def _in(path: str | None) -> Path | None:
    """Resolve an input path against the data directory and check it exists."""
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(DATA_DIR_ENV)
    if not p.is_absolute() and base and not p.exists():
        p = Path(base) / p
    if not p.exists():
        raise CliError(f"missing input file: {path}")
    return p


def _out(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(DATA_DIR_ENV)
    if not p.is_absolute() and base:
        p = Path(base) / p
    return p


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _summary(text: str, path: str | None) -> None:
    if path:
        _emit(text, _out(path))
    else:
        sys.stderr.write(text)


class _CorpusCache:
    def __init__(self):
        self._files: dict[Path, list[AmrEntry]] = {}

    def entry(self, path: Path, offset: int) -> AmrEntry:
        if path not in self._files:
            if not path.exists():
                raise CliError(f"missing parse file: {path}")
            self._files[path] = read_corpus_file(path)
        entries = self._files[path]
        if not 0 <= offset < len(entries):
            raise SchemaError(f"{path}: offset {offset} out of range (0..{len(entries) - 1})")
        return entries[offset]


def _load_deps(path: Path | None) -> dict[str, DepTree]:
    if path is None:
        return {}
    out = {}
    for n, (sid, tree) in enumerate(read_dep_tsv_with_ids(path.read_text(encoding="utf-8"))):
        if sid is None:
            raise SchemaError(f"{path}: block {n + 1} lacks a '# sent_id = ...' line")
        out[sid] = tree
    return out


def _dep_for(sid: str, entry: AmrEntry, deps: dict[str, DepTree], fallback: str | None) -> DepTree:
    if sid in deps:
        return deps[sid]
    if fallback == "flat":
        if not entry.sentence:
            raise SchemaError(f"sentence {sid!r}: no '# ::snt' line for the flat fallback")
        return flat_tree(tokenize(entry.sentence))
    raise SchemaError(f"sentence {sid!r}: no dependency tree (pass --deps or --dep-fallback flat)")


def _linearized_records(manifest_path: Path, deps_path: Path | None, fallback: str | None):
    """Yield (sentence-id, system, dep-stream input, sentence-stream input) per parseable manifest row."""
    base = manifest_path.parent
    cache = _CorpusCache()
    deps = _load_deps(deps_path)
    skipped = 0
    for row in read_manifest(manifest_path):
        entry = cache.entry(resolve(base, row.parse_file), row.offset)
        if entry.graph is None:
            skipped += 1
            log.warning("skipping unparseable graph %s/%s: %s", row.sentence_id, row.system, entry.error)
            continue
        dep = _dep_for(row.sentence_id, entry, deps, fallback)
        yield (row.sentence_id, row.system, linearize_instance(entry.graph, dep, use_dep=True),
               linearize_instance(entry.graph, dep, use_dep=False))
    if skipped:
        log.warning("%d unparseable graphs skipped", skipped)


def _make_record(sid, system, lin_dep, lin_sent, vocab: Vocab, target=None) -> dict:
    rec = encoded_to_record(encode(lin_dep, vocab), f"{sid}\t{system}", target)
    sent = encode(lin_sent, vocab)
    rec.update(sentence_id=sid, system=system, sent_tokens=sent.dep_tokens[: sent.dep_length].tolist(),
               sent_pointers=sent.dep_pointers[: sent.dep_length].tolist(), sent_length=sent.dep_length)
    return rec


def _record_input(rec: dict, max_len: int, use_dep: bool):
    if not use_dep:
        rec = dict(rec, dep_tokens=rec["sent_tokens"], dep_pointers=rec["sent_pointers"], dep_length=rec["sent_length"])
    return record_to_encoded(rec, max_len)


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{path}: line {n}: invalid JSON") from exc
    for n, rec in enumerate(out, 1):
        for key in ("sentence_id", "system", "amr_tokens", "dep_tokens", "sent_tokens"):
            if key not in rec:
                raise SchemaError(f"{path}: record {n} lacks {key!r}; re-run prep")
    return out


# --------------------------------------------------------------------------- commands

def _eval_pair(job):
    pred, gold, restarts, seed = job
    return evaluate_all(pred, gold, restarts=restarts, seed=seed).to_array()


def cmd_eval(args) -> None:
    pred_path, gold_path = _in(args.pred), _in(args.gold)
    preds, golds = read_corpus_file(pred_path), read_corpus_file(gold_path)
    if len(preds) != len(golds):
        raise SchemaError(f"{len(preds)} predicted entries but {len(golds)} gold entries")
    for n, (p, g) in enumerate(zip(preds, golds)):
        if p.id is not None and g.id is not None and p.id != g.id:
            raise SchemaError(f"entry {n}: id mismatch {p.id!r} vs {g.id!r}")
        if g.graph is None:
            raise SchemaError(f"gold entry {n} does not parse: {g.error}")
    # per-instance seed keeps results independent of ordering and worker count
    jobs = [(p.graph, g.graph, args.restarts, args.seed ^ n) for n, (p, g) in enumerate(zip(preds, golds))]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_eval_pair, jobs, chunksize=16))
    else:
        rows = [_eval_pair(j) for j in jobs]
    system = Path(args.pred).stem
    keys = [(g.id if g.id is not None else str(n), system) for n, g in enumerate(golds)]
    values = np.array(rows).reshape(-1, N_SCORES)
    if args.summary:
        keys.append(("average", system))
        values = np.vstack([values, values.mean(axis=0, keepdims=True)])
    _emit(ScoreTable(keys, values).to_text(args.format), _out(args.output))


def _parse_severities(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise CliError(f"--severities must be comma-separated integers, got {text!r}") from exc


def cmd_gen(args) -> None:
    sev = _parse_severities(args.severities)
    ops = tuple(args.ops.split(",")) if args.ops else CORRUPTION_OPS
    specs = [CorruptionSpec(ops, s, 0) for s in sev]
    corpus = gen_training_corpus(args.sentences, specs, args.seed, args.min_nodes, args.max_nodes,
                                 args.restarts, jobs=args.jobs)
    paths = write_synthetic(corpus, _out(args.out), args.seed, args.dev_frac, args.test_frac, sev)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))


def cmd_prep(args) -> None:
    manifest = _in(args.manifest)
    deps = _in(args.deps)
    targets = ScoreTable.read(_in(args.targets)) if args.targets else None
    splits = read_splits(_in(args.splits)) if args.splits else None
    vocab_in = _in(args.vocab)
    out = _out(args.out)
    rows = list(_linearized_records(manifest, deps, args.dep_fallback))
    if not rows:
        raise SchemaError("no parseable instances in the manifest")

    def split_of(sid: str) -> str:
        if splits is None:
            return "all"
        if sid not in splits:
            raise SchemaError(f"sentence {sid!r} missing from the splits file")
        return splits[sid]

    if vocab_in is not None:
        vocab = Vocab.load(vocab_in)
    else:
        basis = [r[2] for r in rows if split_of(r[0]) in ("train", "all")]
        if not basis:
            raise SchemaError("no training instances to build a vocabulary from")
        vocab = build_vocab(basis, args.min_freq, args.max_len)
    index = targets.index() if targets is not None else None
    by_split: dict[str, list[str]] = {}
    for sid, system, lin_dep, lin_sent in rows:
        target = None
        if index is not None:
            if (sid, system) not in index:
                raise SchemaError(f"no target row for {sid}/{system}")
            target = targets.values[index[(sid, system)]]
        rec = _make_record(sid, system, lin_dep, lin_sent, vocab, target)
        by_split.setdefault(split_of(sid), []).append(json.dumps(rec, separators=(",", ":")))
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.json")
    for name, lines in sorted(by_split.items()):
        (out / f"{name}.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        log.info("%s: %d instances", name, len(lines))


def _train_xy(path: Path, cfg_use_dep: bool, max_len: int):
    recs = _read_jsonl(path)
    if not recs:
        raise SchemaError(f"{path}: no records")
    if any("target" not in r for r in recs):
        raise SchemaError(f"{path}: records lack targets; run prep with --targets")
    x = [_record_input(r, max_len, cfg_use_dep) for r in recs]
    y = np.array([r["target"] for r in recs], dtype=np.float64)
    if y.shape[1:] != (N_SCORES,):
        raise SchemaError(f"{path}: targets need {N_SCORES} values")
    return x, y


def cmd_train(args) -> None:
    train_path, dev_path, vocab_path = _in(args.train), _in(args.dev), _in(args.vocab)
    model_path, history_path = _out(args.model), _out(args.history)
    vocab = Vocab.load(vocab_path)
    cfg = M.ModelConfig(
        n_tokens=vocab.n_tokens, n_pointers=vocab.n_pointers, n_senses=vocab.n_senses,
        embed_dim=args.embed_dim, hidden_dim=args.hidden_dim, lstm_layers=1 if args.one_lstm else 2,
        use_dep=not args.no_dep, use_pointers=not args.no_pointers,
        hierarchical=not (args.no_hl or args.no_hmtl), multitask=not args.no_hmtl,
        lambda1=args.lambda1, lambda2=args.lambda2, max_len=vocab.max_len, seed=args.seed)
    tx, ty = _train_xy(train_path, cfg.use_dep, vocab.max_len)
    dx, dy = _train_xy(dev_path, cfg.use_dep, vocab.max_len)
    model = M.init_model(cfg)
    model.vocab = vocab.to_dict()
    trained, history = M.train(model, tx, ty, dx, dy, lr=args.lr, epochs=args.epochs, batch_size=args.batch,
                               seed=args.seed)
    M.save_model(trained, model_path)
    rows = [(h.epoch, h.train_loss, h.dev_rho) for h in history]
    if history_path is not None:
        _emit(write_tsv(rows, ("epoch", "train-loss", "dev-rho")), history_path)
    finite = [h for h in history if np.isfinite(h.dev_rho)]
    best = max(finite, key=lambda h: (h.dev_rho, -h.epoch)) if finite else None
    sys.stdout.write(write_tsv([(best.epoch, best.dev_rho)] if best else [], ("best-epoch", "dev-rho")))


def _load_model(path: Path) -> M.Model:
    model = M.load_model(path)
    if model.vocab is None:
        raise SchemaError(f"{path}: model file carries no vocabulary")
    return model


def cmd_predict(args) -> None:
    model = _load_model(_in(args.model))
    vocab = Vocab.from_dict(model.vocab)
    use_dep = model.config.use_dep
    if args.encoded:
        recs = _read_jsonl(_in(args.encoded))
    elif args.manifest:
        recs = [_make_record(sid, system, ld, ls, vocab)
                for sid, system, ld, ls in _linearized_records(_in(args.manifest), _in(args.deps), args.dep_fallback)]
    else:
        raise CliError("predict needs --encoded or --manifest")
    if not recs:
        raise SchemaError("nothing to predict")
    x = [_record_input(r, vocab.max_len, use_dep) for r in recs]
    preds = M.predict_all(model, x)
    keys = [(r["sentence_id"], r["system"]) for r in recs]
    _emit(ScoreTable(keys, preds).to_text(args.format), _out(args.output))


def _candidate_sets(manifest_rows, preds: ScoreTable, targets: ScoreTable | None) -> list[apps.CandidateSet]:
    pidx = preds.index()
    tidx = targets.index() if targets is not None else None
    grouped: dict[str, list[apps.Candidate]] = {}
    for row in manifest_rows:
        key = (row.sentence_id, row.system)
        if key not in pidx:
            raise SchemaError(f"no prediction for {row.sentence_id}/{row.system}")
        gold = None
        if tidx is not None:
            if key not in tidx:
                raise SchemaError(f"no target row for {row.sentence_id}/{row.system}")
            gold = ScoreVector.from_array(targets.values[tidx[key]])
        grouped.setdefault(row.sentence_id, []).append(
            apps.Candidate(row.system, ScoreVector.from_array(preds.values[pidx[key]]), gold))
    return [apps.CandidateSet(sid, tuple(c)) for sid, c in grouped.items()]


def cmd_rank(args) -> None:
    manifest_rows = read_manifest(_in(args.manifest))
    preds = ScoreTable.read(_in(args.predictions))
    targets = ScoreTable.read(_in(args.targets)) if args.targets else None
    prior = read_prior(_in(args.prior)) if args.prior else {}
    sets = _candidate_sets(manifest_rows, preds, targets)
    rows = []
    for cs in sets:
        choice = apps.select_parse(cs, prior)
        c = next(c for c in cs.candidates if c.system == choice)
        rows.append((cs.sentence_id, choice, c.predicted_f1, prior.get(choice, 0.0), c.predicted_f1 + prior.get(choice, 0.0)))
    _emit(render(rows, ("sentence-id", "system", "predicted-f1", "prior", "score"), args.format), _out(args.output))
    if targets is not None:
        rep = apps.ranking_report(sets, prior)
        summary = [(name, p, r, f) for name, p, r, f in rep.rows()]
        summary += [("rho-mean", rep.rho_mean, "", ""), ("n-scored", rep.n_scored, "", ""),
                    ("n-skipped", rep.n_skipped, "", ""), ("pct-pos", rep.pct_pos, "", "")]
        text = render(summary, ("setting", "P", "R", "F1"), args.format)
        _summary(text, args.summary)


def cmd_rank_systems(args) -> None:
    preds = ScoreTable.read(_in(args.predictions))
    f1 = preds.column("Smatch.F1")
    per_system: dict[str, dict[str, float]] = {}
    for (sid, system), v in zip(preds.keys, f1):
        per_system.setdefault(system, {})[sid] = float(v)
    sentence_sets = {frozenset(v) for v in per_system.values()}
    if len(sentence_sets) != 1:
        raise SchemaError("systems were predicted on different sentence sets")
    order = sorted(next(iter(sentence_sets)))
    ranking = apps.rank_systems({s: [v[k] for k in order] for s, v in per_system.items()})
    true_rank: dict[str, int] | None = None
    if args.true_ranks:
        true_rank = {}
        for n, r in enumerate(read_tsv(_in(args.true_ranks), ("system", "rank"))):
            try:
                true_rank[r["system"]] = int(r["rank"])
            except ValueError as exc:
                raise SchemaError(f"{args.true_ranks}: row {n + 2}: non-integer rank") from exc
    elif args.targets:
        gold = ScoreTable.read(_in(args.targets))
        gold_by: dict[str, list[float]] = {}
        for (sid, system), v in zip(gold.keys, gold.column("Smatch.F1")):
            gold_by.setdefault(system, []).append(float(v))
        true_rank = {name: rank for name, _, rank in apps.rank_systems(gold_by)}
    if true_rank is not None and set(true_rank) != set(per_system):
        raise SchemaError("true ranks and predictions cover different systems")
    rows = [(name, mean, rank, true_rank[name] if true_rank else "") for name, mean, rank in ranking]
    _emit(render(rows, ("system", "predicted-f1", "predicted-rank", "true-rank"), args.format), _out(args.output))
    if true_rank is None:
        return
    if len(ranking) < 3:
        log.warning("significance refused: fewer than 3 systems")
        return
    sig = apps.rank_significance([r[2] for r in rows], [r[3] for r in rows], args.trials, args.seed, args.jobs)
    text = render([(len(rows), args.trials, sig.rho, sig.p1, sig.p2)], ("n-systems", "trials", "rho", "p1", "p2"),
                  args.format)
    _summary(text, args.summary)


def cmd_report(args) -> None:
    preds = ScoreTable.read(_in(args.predictions))
    targets = ScoreTable.read(_in(args.targets)) if args.targets else None
    out = _out(args.out_dir)
    ext = "json" if args.format == "json" else "tsv"
    out.mkdir(parents=True, exist_ok=True)
    if targets is not None:
        tidx = targets.index()
        missing = [k for k in preds.keys if k not in tidx]
        if missing:
            raise SchemaError(f"no target row for {missing[0][0]}/{missing[0][1]}")
        gold = targets.values[[tidx[k] for k in preds.keys]]
        rows = []
        for t, task in enumerate(TASKS):
            cells = []
            for c in range(3):
                col = 3 * t + c
                try:
                    cells.append(apps.pearson(preds.values[:, col], gold[:, col]))
                except ValueError:
                    cells.append(float("nan"))
            rows.append((task, *cells))
        (out / f"correlations.{ext}").write_text(render(rows, ("task", "P", "R", "F1"), args.format), encoding="utf-8")
    f1 = preds.column("Smatch.F1")
    groups = {"all": f1}
    for name in sorted({s for _, s in preds.keys}):
        groups[name] = f1[[s == name for _, s in preds.keys]]
    prow = [(name, *apps.percentiles(v, PERCENTILES)) for name, v in groups.items()]
    (out / f"percentiles.{ext}").write_text(render(prow, ("group", *map(str, PERCENTILES)), args.format),
                                            encoding="utf-8")
    grid = np.linspace(0.0, 1.0, args.grid_points)
    dens = {}
    for name, v in groups.items():
        try:
            dens[name] = apps.kde_scott(v, grid)
        except ValueError:
            log.warning("group %s has zero variance; density omitted, see the histogram", name)
    krows = [(float(x), *(float(d[i]) for d in dens.values())) for i, x in enumerate(grid)]
    (out / f"kde.{ext}").write_text(render(krows, ("grid", *dens), args.format), encoding="utf-8")
    hist = {name: apps.histogram(v, args.bins)[0] for name, v in groups.items()}
    edges = apps.histogram(f1, args.bins)[1]
    hrows = [(float(edges[i]), float(edges[i + 1]), *(int(h[i]) for h in hist.values())) for i in range(args.bins)]
    (out / f"histogram.{ext}").write_text(render(hrows, ("lo", "hi", *hist), args.format), encoding="utf-8")


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amrqe", description="AMR evaluation, accuracy prediction and ranking.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, report: bool = True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for per-sentence work")
        if report:
            sp.add_argument("--format", choices=("tsv", "json"), default="tsv")

    sp = sub.add_parser("eval", help="36 scores per parse against gold")
    sp.add_argument("pred")
    sp.add_argument("gold")
    sp.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    sp.add_argument("--summary", action="store_true", help="append a sentence-average row")
    sp.add_argument("-o", "--output")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gen", help="synthetic corpus with graded corruptions")
    sp.add_argument("--sentences", type=int, default=500)
    sp.add_argument("--severities", default="1,3,6", help="one simulated system per severity")
    sp.add_argument("--ops", help=f"comma-separated subset of {','.join(CORRUPTION_OPS)}")
    sp.add_argument("--min-nodes", type=int, default=3)
    sp.add_argument("--max-nodes", type=int, default=14)
    sp.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    sp.add_argument("--dev-frac", type=float, default=0.15)
    sp.add_argument("--test-frac", type=float, default=0.15)
    sp.add_argument("--out", required=True)
    common(sp, report=False)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("prep", help="linearize and encode a manifest into JSONL plus vocabulary")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--deps", help="dependency TSV with '# sent_id = ...' lines")
    sp.add_argument("--dep-fallback", choices=("flat",), help="flat tree from the '# ::snt' line when no tree exists")
    sp.add_argument("--targets")
    sp.add_argument("--splits")
    sp.add_argument("--vocab", help="reuse an existing vocabulary instead of building one")
    sp.add_argument("--min-freq", type=int, default=DEFAULT_MIN_FREQ)
    sp.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    sp.add_argument("--out", required=True)
    common(sp, report=False)
    sp.set_defaults(func=cmd_prep)

    sp = sub.add_parser("train", help="train the accuracy predictor")
    sp.add_argument("--train", required=True)
    sp.add_argument("--dev", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--model", required=True, help="output model file")
    sp.add_argument("--history", help="per-epoch TSV")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--batch", type=int, default=16)
    sp.add_argument("--embed-dim", type=int, default=128)
    sp.add_argument("--hidden-dim", type=int, default=128)
    sp.add_argument("--lambda1", type=float, default=0.2)
    sp.add_argument("--lambda2", type=float, default=1.0)
    sp.add_argument("--no-dep", action="store_true", help="feed the sentence in surface order")
    sp.add_argument("--no-pointers", action="store_true")
    sp.add_argument("--no-hl", action="store_true", help="predict all 36 scores on one level")
    sp.add_argument("--no-hmtl", action="store_true", help="optimize Smatch only")
    sp.add_argument("--one-lstm", action="store_true", help="one BiLSTM layer per stream")
    common(sp, report=False)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="predicted 36-column scores")
    sp.add_argument("--model", required=True)
    sp.add_argument("--encoded", help="JSONL written by prep")
    sp.add_argument("--manifest")
    sp.add_argument("--deps")
    sp.add_argument("--dep-fallback", choices=("flat",))
    sp.add_argument("-o", "--output")
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("rank", help="select one parse per sentence")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--targets", help="gold scores; enables the summary")
    sp.add_argument("--prior", help="TSV of system, dev-f1")
    sp.add_argument("-o", "--output")
    sp.add_argument("--summary")
    common(sp)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("rank-systems", help="rank systems by mean predicted Smatch F1")
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--true-ranks", help="TSV of system, rank")
    sp.add_argument("--targets", help="gold scores to derive true ranks")
    sp.add_argument("--trials", type=int, default=10**6)
    sp.add_argument("-o", "--output")
    sp.add_argument("--summary")
    common(sp)
    sp.set_defaults(func=cmd_rank_systems)

    sp = sub.add_parser("report", help="correlations, percentiles, density and histogram tables")
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--targets")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--grid-points", type=int, default=201)
    sp.add_argument("--bins", type=int, default=20)
    common(sp)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s",
                        stream=sys.stderr)
    if getattr(args, "jobs", 1) < 1:
        sys.stderr.write(json.dumps({"error": "CliError", "message": "--jobs must be >= 1"}) + "\n")
        return 2
    try:
        args.func(args)
    except (CliError, SchemaError, M.ModelFormatError, M.TrainingError, OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "command": args.command,
                                     "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
