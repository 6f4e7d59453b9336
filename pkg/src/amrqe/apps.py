"""Correlation analysis, per-sentence parse selection and corpus-level system ranking."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .graph import AmrGraph
from .metrics import PRF, ScoreVector

P2_CHUNK = 50_000
# observed-rho comparisons allow this much float slack so exact ties count as ">="
RHO_TIE_TOL = 1e-9


class UndefinedCorrelationError(ValueError):
    """Pearson correlation is undefined because one side has zero variance."""


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"pearson needs two equal-length 1-d sequences, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 points")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance; correlation undefined")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


# --------------------------------------------------------------------------- parse selection

@dataclass(frozen=True)
class Candidate:
    system: str
    predicted: ScoreVector
    gold: ScoreVector | None = None
    graph: AmrGraph | None = None

    @property
    def predicted_f1(self) -> float:
        return self.predicted["Smatch"].f1

    @property
    def gold_f1(self) -> float:
        if self.gold is None:
            raise ValueError(f"candidate {self.system!r} has no gold scores")
        return self.gold["Smatch"].f1


@dataclass(frozen=True)
class CandidateSet:
    sentence_id: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"sentence {self.sentence_id!r}: empty candidate set")
        names = [c.system for c in self.candidates]
        if len(set(names)) != len(names):
            raise ValueError(f"sentence {self.sentence_id!r}: duplicate system names")


def _argbest(cands: Sequence[Candidate], key, maximize: bool = True) -> Candidate:
    # lexicographic tie break on the system name
    sign = -1.0 if maximize else 1.0
    return min(cands, key=lambda c: (sign * key(c), c.system))


def select_parse(cs: CandidateSet, prior: Mapping[str, float] | None = None) -> str:
    """System whose candidate maximizes predicted Smatch F1 plus its prior (0 when absent)."""
    prior = prior or {}
    for name, value in prior.items():
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"prior for {name!r} outside [0, 1]: {value}")
    return _argbest(cs.candidates, lambda c: c.predicted_f1 + prior.get(c.system, 0.0)).system


@dataclass
class RankingReport:
    lower: PRF
    random: PRF
    selected: PRF
    upper: PRF
    rho_mean: float
    n_scored: int
    n_skipped: int
    pct_pos: float
    selections: list[tuple[str, str]]

    def rows(self) -> list[tuple[str, float, float, float]]:
        return [(name, *getattr(self, name)) for name in ("lower", "random", "selected", "upper")]


def _mean_prf(prfs: Sequence[PRF]) -> PRF:
    a = np.array(prfs, dtype=np.float64).reshape(-1, 3)
    return PRF(*(float(v) for v in a.mean(axis=0)))


def ranking_report(corpus: Sequence[CandidateSet], prior: Mapping[str, float] | None = None) -> RankingReport:
    """Selection quality against exact random and oracle baselines, all on gold Smatch."""
    if not corpus:
        raise ValueError("empty corpus")
    lower, rand, selected, upper, selections = [], [], [], [], []
    rhos: list[float] = []
    skipped = 0
    for cs in corpus:
        by_name = {c.system: c for c in cs.candidates}
        choice = select_parse(cs, prior)
        selections.append((cs.sentence_id, choice))
        selected.append(by_name[choice].gold["Smatch"] if by_name[choice].gold else _missing(cs))
        lower.append(_argbest(cs.candidates, lambda c: c.gold_f1, maximize=False).gold["Smatch"])
        upper.append(_argbest(cs.candidates, lambda c: c.gold_f1).gold["Smatch"])
        rand.append(_mean_prf([c.gold["Smatch"] for c in cs.candidates]))
        try:
            rhos.append(pearson([c.predicted_f1 for c in cs.candidates], [c.gold_f1 for c in cs.candidates]))
        except (UndefinedCorrelationError, ValueError):
            skipped += 1
    rho_mean = float(np.mean(rhos)) if rhos else float("nan")
    pct_pos = 100.0 * sum(r > 0 for r in rhos) / len(rhos) if rhos else float("nan")
    return RankingReport(_mean_prf(lower), _mean_prf(rand), _mean_prf(selected), _mean_prf(upper),
                         rho_mean, len(rhos), skipped, pct_pos, selections)


def _missing(cs: CandidateSet):
    raise ValueError(f"sentence {cs.sentence_id!r}: gold scores required for the ranking report")


# --------------------------------------------------------------------------- system ranking

def rank_systems(scores: Mapping[str, Sequence[float]]) -> list[tuple[str, float, int]]:
    """(system, mean predicted F1, rank) by descending mean; rank 1 is best, ties go lexicographic."""
    if not scores:
        raise ValueError("no systems to rank")
    lengths = {len(v) for v in scores.values()}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("every system needs predictions on the same non-empty sentence set")
    means = {name: float(np.mean(v)) for name, v in scores.items()}
    order = sorted(means, key=lambda s: (-means[s], s))
    return [(name, means[name], i + 1) for i, name in enumerate(order)]


@dataclass(frozen=True)
class Significance:
    rho: float
    p1: float
    p2: float


def pearson_t_pvalue(rho: float, n: int) -> float:
    """Two-sided p-value of the t-test for zero correlation."""
    if n < 3:
        raise ValueError("the t-test needs at least 3 pairs")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt(n - 2) / math.sqrt(1.0 - rho * rho)
    return float(2.0 * stats.t.sf(abs(t), df=n - 2))


def _perm_rhos(true_rank: np.ndarray, n_perm: int, rng: np.random.Generator) -> np.ndarray:
    perms = rng.permuted(np.tile(true_rank, (n_perm, 1)), axis=1)
    pc = perms - perms.mean(axis=1, keepdims=True)
    tc = true_rank - true_rank.mean()
    return (pc @ tc) / (np.sqrt((pc * pc).sum(axis=1)) * math.sqrt(float(tc @ tc)))


def permutation_pvalue(rho: float, true_rank: Sequence[float], trials: int = 10**6, seed: int = 0,
                       jobs: int = 1) -> float:
    """Fraction of uniformly random rankings whose correlation with ``true_rank`` is >= rho.

    Trials are split into fixed shards with spawned seeds, so the estimate does not depend on ``jobs``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    t = np.asarray(true_rank, dtype=np.float64)
    sizes = [P2_CHUNK] * (trials // P2_CHUNK) + ([trials % P2_CHUNK] if trials % P2_CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def shard(i: int) -> int:
        r = _perm_rhos(t, sizes[i], np.random.default_rng(seeds[i]))
        return int(np.count_nonzero(r >= rho - RHO_TIE_TOL))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            hits = sum(pool.map(shard, range(len(sizes))))
    else:
        hits = sum(shard(i) for i in range(len(sizes)))
    return hits / trials


def rank_significance(pred_rank: Sequence[float], true_rank: Sequence[float], trials: int = 10**6,
                      seed: int = 0, jobs: int = 1) -> Significance:
    if len(pred_rank) != len(true_rank):
        raise ValueError("rank lists differ in length")
    if len(pred_rank) < 3:
        raise ValueError("significance needs at least 3 systems")
    rho = pearson(pred_rank, true_rank)
    return Significance(rho, pearson_t_pvalue(rho, len(pred_rank)),
                        permutation_pvalue(rho, true_rank, trials, seed, jobs))


# --------------------------------------------------------------------------- distributions

def percentiles(scores: Sequence[float], qs: Sequence[float]) -> list[float]:
    """Linear-interpolation percentiles of ``scores``."""
    a = np.asarray(scores, dtype=np.float64)
    if a.size == 0:
        raise ValueError("percentiles of an empty list")
    q = np.asarray(qs, dtype=np.float64)
    if np.any((q < 0) | (q > 100)):
        raise ValueError("percentile q must lie in [0, 100]")
    return [float(v) for v in np.percentile(a, q, method="linear")]


def scott_bandwidth(scores: Sequence[float]) -> float:
    a = np.asarray(scores, dtype=np.float64)
    if a.size < 2:
        raise ValueError("density estimation needs at least 2 scores")
    sd = float(a.std(ddof=1))
    if sd == 0.0:
        raise UndefinedCorrelationError("zero variance; emit a histogram instead of a density")
    return sd * a.size ** (-1.0 / 5.0)


def kde_scott(scores: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """Gaussian kernel density on ``grid`` with Scott's bandwidth."""
    a = np.asarray(scores, dtype=np.float64)
    h = scott_bandwidth(a)
    z = (np.asarray(grid, dtype=np.float64)[:, None] - a[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (a.size * h * math.sqrt(2.0 * math.pi))


def histogram(scores: Sequence[float], bins: int = 20, range_: tuple[float, float] = (0.0, 1.0)):
    counts, edges = np.histogram(np.asarray(scores, dtype=np.float64), bins=bins, range=range_)
    return counts, edges
