"""Acceptance criteria, one test each; every test prints a PASS/FAIL line for its criterion.

Criteria 6 and 7 share one 20-epoch training run on the 500-sentence synthetic corpus
(about 20 minutes on one core). They carry the ``slow`` marker but are part of the default run.
"""
import io
import math
import random
import time
from contextlib import redirect_stdout

import numpy as np
import pytest
from scipy import integrate
from threadpoolctl import threadpool_limits

from amrqe import apps
from amrqe import model as M
from amrqe.cli import main as cli_main
from amrqe.datagen import CorruptionSpec, corrupt, default_systems, gen_gold, gen_training_corpus, split_sentences
from amrqe.estimator import AmrFeaturizer
from amrqe.metrics import ScoreVector, evaluate_all, negation_items, named_entity_items, smatch, smatch_exhaustive, wiki_items
from amrqe.tables import ScoreTable

from conftest import DATA, random_graphs
from test_cli import files, pipeline

RESULTS: list[str] = []


def record(n: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# --------------------------------------------------------------------------- 1

FIG2 = {  # system: (Smatch F1, Concepts F1, IgnoreVars F1)
    "gpla": (0.70, 0.67, 0.55),
    "jamr": (0.30, 0.44, 0.00),
    "camr": (0.67, 0.50, 0.60),
}


def test_criterion_01_figure2(tmp_path):
    t0 = time.perf_counter()
    got, ok = {}, True
    for name, (sm, co, iv) in FIG2.items():
        out = tmp_path / f"{name}.tsv"
        assert cli_main(["eval", str(DATA / f"figure2_{name}.txt"), str(DATA / "figure1_gold.txt"), "-o", str(out)]) == 0
        t = ScoreTable.read(out)
        vals = (t.column("Smatch.F1")[0], t.column("Concepts.F1")[0], t.column("IgnoreVars.F1")[0])
        got[name] = tuple(round(float(v), 4) for v in vals)
        ok &= abs(vals[0] - sm) <= 0.005 and abs(vals[1] - co) <= 0.005 and abs(vals[2] - iv) <= 0.01
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    assert record(1, "Figure 2 scores", ok, f"(Smatch, Concepts, IgnoreVars) {got}, {elapsed:.2f}s")


# --------------------------------------------------------------------------- 2

def small_pairs(n: int, seed: int = 0, max_vars: int = 6):
    rng = random.Random(seed)
    out, k = [], 0
    while len(out) < n:
        k += 1
        gold, _ = gen_gold(rng.randint(1, max_vars), seed * 7919 + k)
        if rng.random() < 0.25:
            pred, _ = gen_gold(rng.randint(1, max_vars), seed * 7919 + k + 500_000)
        else:
            pred = corrupt(gold, CorruptionSpec(severity=rng.randint(0, 5), seed=k))
        if len(gold.nodes) <= max_vars and len(pred.nodes) <= max_vars:
            out.append((pred, gold))
    return out


def test_criterion_02_smatch_oracle():
    pairs = small_pairs(200)
    t0 = time.perf_counter()
    over = equal = 0
    for i, (pred, gold) in enumerate(pairs):
        hc, ex = smatch(pred, gold, restarts=4, seed=i).f1, smatch_exhaustive(pred, gold).f1
        over += hc > ex + 1e-12
        equal += abs(hc - ex) <= 1e-12
    elapsed = time.perf_counter() - t0
    ok = over == 0 and equal >= 190 and elapsed < 30
    assert record(2, "hill-climb vs exhaustive", ok, f"{equal}/200 equal, {over} above oracle, {elapsed:.1f}s")


# --------------------------------------------------------------------------- 3

def test_criterion_03_identity():
    graphs = random_graphs(500, seed=3)
    bad = sum(not np.all(evaluate_all(g, g).to_array() == 1.0) for g in graphs)
    lacking = {"negation": sum(not negation_items(g) for g in graphs),
               "wiki": sum(not wiki_items(g) for g in graphs),
               "names": sum(not named_entity_items(g) for g in graphs)}
    ok = bad == 0 and all(v > 0 for v in lacking.values())
    assert record(3, "self-evaluation all ones", ok, f"{500 - bad}/500 all-ones; graphs lacking {lacking}")


# --------------------------------------------------------------------------- 4

def tiny_data(n_items: int, seed: int):
    corpus = gen_training_corpus(n_items, default_systems(), seed=seed, min_nodes=2, max_nodes=5, restarts=2)
    X = [(x.pred, x.dep) for x in corpus.instances]
    y = np.array([x.scores.to_array() for x in corpus.instances])
    feats = AmrFeaturizer(min_freq=1, max_len=12).fit(X)
    return feats, feats.transform(X), y


def test_criterion_04_gradient_check():
    t0 = time.perf_counter()
    feats, items, y = tiny_data(12, seed=4)
    v = feats.vocab_
    errors = {}
    for hier in (True, False):
        cfg = M.ModelConfig(v.n_tokens, v.n_pointers, v.n_senses, embed_dim=8, hidden_dim=6, hierarchical=hier,
                            max_len=12, seed=0)
        m = M.init_model(cfg)
        batch = M.make_batch(items[:4])
        errors[("init", hier)] = M.grad_check(m, batch, y[:4], eps=1e-4, n_samples=200)
        trained, _ = M.train(m, items, y, items[:6], y[:6], epochs=1, batch_size=8, seed=0)
        errors[("epoch1", hier)] = M.grad_check(trained, batch, y[:4], eps=1e-4, n_samples=200)
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst < 1e-4 and elapsed < 120
    detail = ", ".join(f"{w}/{'HL' if h else 'no-HL'}={e:.1e}" for (w, h), e in errors.items())
    assert record(4, "gradient check", ok, f"max rel err {worst:.1e} ({detail}), {elapsed:.1f}s")


# --------------------------------------------------------------------------- 5

def test_criterion_05_loss_contracts():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 17))
        p, sub, main, t = rng.random((n, 36)), rng.random((n, 33)), rng.random((n, 3)), rng.random((n, 36))
        l1, l2 = float(rng.random()), float(rng.random()) + 0.05
        flat = sum((t[i, j] - p[i, j]) ** 2 for i in range(n) for j in range(36)) / (36 * n)
        s_sub = sum((t[i, 3 + j] - sub[i, j]) ** 2 for i in range(n) for j in range(33))
        s_main = sum((t[i, j] - main[i, j]) ** 2 for i in range(n) for j in range(3))
        hier = l1 * s_sub / (33 * n) + l2 * s_main / (3 * n)
        worst = max(worst, abs(M.loss_flat(p, t) - flat) / flat, abs(M.loss_hier(sub, main, t, l1, l2) - hier) / hier)
    reduction = all(M.loss_hier(sub, main, t, 0.0, 1.0) == M.loss_flat(main, t[:, :3])
                    for sub, main, t in ((rng.random((4, 33)), rng.random((4, 3)), rng.random((4, 36)))
                                         for _ in range(20)))
    ok = worst <= 1e-12 and reduction
    assert record(5, "loss contracts", ok, f"max rel diff {worst:.1e}, lambda1=0 reduction exact: {reduction}")


# --------------------------------------------------------------------------- 6 and 7

@pytest.fixture(scope="module")
def trained_run():
    corpus = gen_training_corpus(500, default_systems(), seed=0)
    split = split_sentences([sid for sid, _, _ in corpus.golds], seed=0)
    part = {k: [x for x in corpus.instances if split[x.sentence_id] == k] for k in ("train", "dev", "test")}
    feats = AmrFeaturizer().fit([(x.pred, x.dep) for x in part["train"]])
    X = {k: feats.transform([(x.pred, x.dep) for x in v]) for k, v in part.items()}
    Y = {k: np.array([x.scores.to_array() for x in v]) for k, v in part.items()}
    v = feats.vocab_
    model = M.init_model(M.ModelConfig(v.n_tokens, v.n_pointers, v.n_senses, seed=0))
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        best, history = M.train(model, X["train"], Y["train"], X["dev"], Y["dev"], lr=1e-3, epochs=20,
                                batch_size=16, seed=0)
    elapsed = time.perf_counter() - t0
    return dict(corpus=corpus, part=part, X=X, Y=Y, model=best, history=history, seconds=elapsed)


@pytest.mark.slow
def test_criterion_06_learning_signal(trained_run):
    hist = trained_run["history"]
    rho = max(h.dev_rho for h in hist)
    minutes = trained_run["seconds"] / 60
    ok = len(hist) == 20 and rho >= 0.6 and minutes < 30
    best_epoch = max(hist, key=lambda h: (h.dev_rho, -h.epoch)).epoch
    assert record(6, "synthetic learning signal", ok,
                  f"dev rho {rho:.3f} (best epoch {best_epoch}), 20 epochs in {minutes:.1f} min")


@pytest.mark.slow
def test_criterion_07_ranking_lift(trained_run):
    preds = M.predict_all(trained_run["model"], trained_run["X"]["test"])
    sets: dict[str, list] = {}
    for x, p in zip(trained_run["part"]["test"], preds):
        sets.setdefault(x.sentence_id, []).append(apps.Candidate(x.system, ScoreVector.from_array(p), x.scores))
    rep = apps.ranking_report([apps.CandidateSet(k, tuple(v)) for k, v in sets.items()])
    lo, rnd, sel, up = rep.lower.f1, rep.random.f1, rep.selected.f1, rep.upper.f1
    lift = 100 * (sel - rnd)
    ok = lo <= rnd <= sel <= up and lift >= 2.0
    assert record(7, "ranking sandwich and lift", ok,
                  f"lower {lo:.3f} <= random {rnd:.3f} <= selected {sel:.3f} <= upper {up:.3f}, lift {lift:+.1f} pp")


# --------------------------------------------------------------------------- 8

def test_criterion_08_rank_significance():
    bio = apps.rank_significance([3, 1, 2, 5, 4, 6], [1, 2, 3, 4, 5, 6], trials=10**6, seed=0)
    ldc = apps.pearson([7, 1, 2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13], [7, 4, 3, 1, 2, 8, 10, 12, 11, 5, 6, 13, 9])
    ok = abs(bio.rho - 0.771) <= 0.001 and abs(bio.p2 - 0.051) <= 0.003 and abs(ldc - 0.643) <= 0.005
    assert record(8, "system-rank significance", ok,
                  f"Bio rho {bio.rho:.4f} p1 {bio.p1:.4f} p2 {bio.p2:.4f}; LDC rho {ldc:.4f} (published 0.645)")


# --------------------------------------------------------------------------- 9

def test_criterion_09_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    with redirect_stdout(io.StringIO()) as out_a:
        pipeline(a)
    with redirect_stdout(io.StringIO()) as out_b:
        pipeline(b)
    names = files(a)
    diffs = [str(rel) for rel in names if (a / rel).read_bytes() != (b / rel).read_bytes()]
    ok = names == files(b) and not diffs and out_a.getvalue() == out_b.getvalue()
    assert record(9, "CLI determinism", ok, f"{len(names)} output files compared, {len(diffs)} differ")


# --------------------------------------------------------------------------- 10

def test_criterion_10_percentiles_and_kde():
    rng = np.random.default_rng(10)
    qs = [0, 5, 25, 50, 75, 90, 95, 97, 99, 100]
    mismatches = 0
    for _ in range(100):
        xs = sorted(rng.random(int(rng.integers(1, 60))))
        for q, got in zip(qs, apps.percentiles(xs, qs)):
            pos = (len(xs) - 1) * q / 100
            lo = math.floor(pos)
            hi = min(lo + 1, len(xs) - 1)
            mismatches += abs(got - (xs[lo] + (xs[hi] - xs[lo]) * (pos - lo))) > 1e-12
    integrals = []
    for n in (10, 100, 1000):
        xs = rng.beta(6, 2, n)
        grid = np.linspace(-1.0, 2.0, 3001)
        integrals.append(float(integrate.trapezoid(apps.kde_scott(xs, grid), grid)))
    ok = mismatches == 0 and all(abs(v - 1) <= 0.02 for v in integrals)
    assert record(10, "percentiles and KDE", ok,
                  f"{mismatches} percentile mismatches over 100 lists; KDE integrals {[round(v, 4) for v in integrals]}")
