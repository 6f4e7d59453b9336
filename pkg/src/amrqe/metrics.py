"""Smatch and the extended AMR evaluation suite (12 tasks x P/R/F1 = 36 scores)."""
from __future__ import annotations

import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .graph import TOP_RELATION, AmrGraph, Triple, to_triples, unquote

TASKS = (
    "Smatch",
    "Unlabeled",
    "NoWSD",
    "Concepts",
    "NamedEnt",
    "Negations",
    "Wikification",
    "Reentrancies",
    "SRL",
    "Frames",
    "NSFrames",
    "IgnoreVars",
)
N_SCORES = 3 * len(TASKS)
MAIN_SLICE = slice(0, 3)
SUB_SLICE = slice(3, N_SCORES)
SCORE_NAMES = tuple(f"{t}.{c}" for t in TASKS for c in ("P", "R", "F1"))

DEFAULT_RESTARTS = 4
EXHAUSTIVE_LIMIT = 8

_SENSE_RE = re.compile(r"^(.+)-(\d\d)$")
_ARG_RE = re.compile(r"^ARG\d$")


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


class SmatchSizeError(ValueError):
    """Raised when the exhaustive oracle is asked to enumerate too many mappings."""


def prf_from_counts(matched: int, n_pred: int, n_gold: int) -> PRF:
    """P/R/F1 from match counts; both sides empty scores 1, one side empty scores 0."""
    if matched < 0 or n_pred < 0 or n_gold < 0:
        raise ValueError("counts must be non-negative")
    if matched > min(n_pred, n_gold):
        raise ValueError(f"matched={matched} exceeds min(n_pred={n_pred}, n_gold={n_gold})")
    if n_pred == 0 and n_gold == 0:
        return PRF(1.0, 1.0, 1.0)
    if n_pred == 0 or n_gold == 0:
        return PRF(0.0, 0.0, 0.0)
    p = matched / n_pred
    r = matched / n_gold
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


@dataclass(frozen=True)
class ScoreVector:
    scores: dict[str, PRF]

    def __post_init__(self):
        if tuple(self.scores) != TASKS:
            raise ValueError(f"ScoreVector needs tasks in canonical order {TASKS}")

    def __getitem__(self, task: str) -> PRF:
        return self.scores[task]

    def to_array(self) -> np.ndarray:
        return np.array([v for t in TASKS for v in self.scores[t]], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ScoreVector":
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.shape != (N_SCORES,):
            raise ValueError(f"expected {N_SCORES} values, got {values.shape}")
        return cls({t: PRF(*map(float, values[3 * i: 3 * i + 3])) for i, t in enumerate(TASKS)})

    @classmethod
    def zeros(cls) -> "ScoreVector":
        return cls.from_array(np.zeros(N_SCORES))


# --------------------------------------------------------------------------- mapping search

class _Problem:
    """Precomputed match structure between two triple sets.

    Unary triples (instance, attribute, TOP, self-loops) score per (pred var, gold var)
    pair; relation triples between distinct variables score per pair of pairs.
    """

    def __init__(self, pred: Iterable[Triple], gold: Iterable[Triple],
                 pred_vars: Sequence[str], gold_vars: Sequence[str]):
        pred = set(pred)
        gold = set(gold)
        self.n_pred_triples = len(pred)
        self.n_gold_triples = len(gold)
        self.pred_vars = list(pred_vars)
        self.gold_vars = list(gold_vars)
        pidx = {v: i for i, v in enumerate(self.pred_vars)}
        gidx = {v: j for j, v in enumerate(self.gold_vars)}
        self.n = len(self.pred_vars)
        self.m = len(self.gold_vars)

        def split(triples, idx):
            unary = defaultdict(set)
            rels = []
            for t in triples:
                if t.kind == "relation":
                    a, b = idx[t.source], idx[t.target]
                    if a == b:
                        unary[a].add(("loop", t.relation, ""))
                    else:
                        rels.append((a, t.relation, b))
                else:
                    unary[idx[t.source]].add((t.kind, t.relation, t.target))
            return unary, rels

        pu, self.pred_rels = split(pred, pidx)
        gu, gold_rels = split(gold, gidx)
        self.unary = np.zeros((self.n, self.m + 1), dtype=np.int64)  # column m = unmapped
        for i, items in pu.items():
            for j, gitems in gu.items():
                self.unary[i, j] = len(items & gitems)
        self.unary_rows = self.unary.tolist()
        self.gold_rel_set = set(gold_rels)
        self.gold_src: dict[tuple[str, int], list[int]] = defaultdict(list)
        self.gold_tgt: dict[tuple[str, int], list[int]] = defaultdict(list)
        for ja, r, jb in self.gold_rel_set:
            self.gold_src[(r, jb)].append(ja)
            self.gold_tgt[(r, ja)].append(jb)
        self.gold_src, self.gold_tgt = dict(self.gold_src), dict(self.gold_tgt)
        self.shared: dict[tuple[int, int], list[int]] = defaultdict(list)
        self.rels_of = [[] for _ in range(self.n)]
        for k, (a, _, b) in enumerate(self.pred_rels):
            self.rels_of[a].append(k)
            self.rels_of[b].append(k)
            self.shared[(min(a, b), max(a, b))].append(k)

    def rel_match(self, k: int, mapping: list[int]) -> int:
        a, r, b = self.pred_rels[k]
        ja, jb = mapping[a], mapping[b]
        if ja < 0 or jb < 0:
            return 0
        return int((ja, r, jb) in self.gold_rel_set)

    def score(self, mapping: list[int]) -> int:
        s = sum(self.unary_rows[i][j] for i, j in enumerate(mapping) if j >= 0)
        return s + sum(self.rel_match(k, mapping) for k in range(len(self.pred_rels)))

    def _gain_row(self, i: int, mapping: list[int]) -> list[int]:
        """Unary plus relation score of var i at each gold var, other vars held fixed."""
        row = list(self.unary_rows[i][: self.m])
        for k in self.rels_of[i]:
            a, r, b = self.pred_rels[k]
            if a == i:
                other = mapping[b]
                hits = self.gold_src.get((r, other), ()) if other >= 0 else ()
            else:
                other = mapping[a]
                hits = self.gold_tgt.get((r, other), ()) if other >= 0 else ()
            for j in hits:
                row[j] += 1
        return row

    def climb(self, mapping: list[int]) -> tuple[list[int], int]:
        """Steepest-ascent over reassign/swap moves; ties go to the lowest pred index."""
        mapping = list(mapping)
        current = self.score(mapping)
        m = self.m
        while True:
            owner = {j: i for i, j in enumerate(mapping) if j >= 0}
            rows = [self._gain_row(i, mapping) for i in range(self.n)]
            best_gain, best_move = 0, None
            for i in range(self.n):
                old = mapping[i]
                row_i = rows[i]
                here = row_i[old] if old >= 0 else 0
                for j in list(range(m)) + [-1]:
                    if j == old:
                        continue
                    k = owner.get(j) if j >= 0 else None
                    gain = (row_i[j] if j >= 0 else 0) - here
                    if k is not None:
                        row_k = rows[k]
                        gain += (row_k[old] if old >= 0 else 0) - row_k[j]
                        for s in self.shared.get((min(i, k), max(i, k)), ()):
                            gain += self._swap_shared(s, i, k, old, j)
                    if gain > best_gain:
                        best_gain, best_move = gain, (i, j, k)
            if best_move is None:
                return mapping, current
            i, j, k = best_move
            old = mapping[i]
            mapping[i] = j
            if k is not None:
                mapping[k] = old
            current += best_gain

    def _swap_shared(self, s: int, i: int, k: int, old: int, j: int) -> int:
        # a relation between the two swapped vars is counted twice in the before-rows and zero
        # times in the after-rows (gold has no self-loops), so add it back on both sides
        a, r, b = self.pred_rels[s]
        pos_now = {i: old, k: j}
        pos_after = {i: j, k: old}
        ja, jb = pos_now[a], pos_now[b]
        now = int(ja >= 0 and jb >= 0 and (ja, r, jb) in self.gold_rel_set)
        ja, jb = pos_after[a], pos_after[b]
        after = int(ja >= 0 and jb >= 0 and (ja, r, jb) in self.gold_rel_set)
        return now + after

    def seeded_mapping(self) -> list[int]:
        mapping = [-1] * self.n
        used = set()
        for i in range(self.n):
            for j in np.argsort(-self.unary[i, : self.m], kind="stable"):
                j = int(j)
                if j not in used and self.unary[i, j] > 0:
                    mapping[i] = j
                    used.add(j)
                    break
        return mapping

    def random_mapping(self, rng: random.Random) -> list[int]:
        slots = list(range(self.m)) + [-1] * max(0, self.n - self.m)
        rng.shuffle(slots)
        return slots[: self.n]

    def exhaustive(self) -> int:
        """Exact optimum by depth-first enumeration with an admissible bound."""
        if min(self.n, self.m) > EXHAUSTIVE_LIMIT:
            raise SmatchSizeError(
                f"exhaustive search refused: min(|pred vars|={self.n}, |gold vars|={self.m}) > {EXHAUSTIVE_LIMIT}"
            )
        max_unary = self.unary[:, : self.m].max(axis=1) if self.m else np.zeros(self.n, dtype=np.int64)
        suffix_unary = np.concatenate([np.cumsum(max_unary[::-1])[::-1], [0]])
        # a relation is settled once both endpoints are assigned, i.e. at max(a, b)
        settle = defaultdict(list)
        for k, (a, _, b) in enumerate(self.pred_rels):
            settle[max(a, b)].append(k)
        open_rels = [sum(len(settle[d]) for d in range(i, self.n)) for i in range(self.n + 1)]
        spare = max(0, self.n - self.m)
        mapping = [-1] * self.n
        used = [False] * self.m
        best = [self.score(self.seeded_mapping())]

        def dfs(i: int, acc: int, unmapped: int):
            if acc + suffix_unary[i] + open_rels[i] <= best[0]:
                return
            if i == self.n:
                best[0] = acc
                return
            order = sorted(range(self.m), key=lambda j: -self.unary[i, j])
            options = [j for j in order if not used[j]]
            if unmapped < spare:
                options.append(-1)
            for j in options:
                mapping[i] = j
                if j >= 0:
                    used[j] = True
                gain = int(self.unary[i, j]) if j >= 0 else 0
                gain += sum(self.rel_match(k, mapping) for k in settle[i])
                dfs(i + 1, acc + gain, unmapped + (j < 0))
                if j >= 0:
                    used[j] = False
                mapping[i] = -1

        dfs(0, 0, 0)
        return best[0]


def _var_order(triples: Iterable[Triple], preferred: Sequence[str]) -> list[str]:
    present = set()
    for t in triples:
        present.add(t.source)
        if t.kind == "relation":
            present.add(t.target)
    return [v for v in preferred if v in present]


def best_match(pred: Iterable[Triple], gold: Iterable[Triple], pred_vars: Sequence[str],
               gold_vars: Sequence[str], restarts: int = DEFAULT_RESTARTS,
               seed: int = 0) -> tuple[int, int, int]:
    """Return (matched, |pred|, |gold|) under the best variable mapping found."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    pred, gold = list(pred), list(gold)
    prob = _Problem(pred, gold, _var_order(pred, pred_vars), _var_order(gold, gold_vars))
    if not prob.n or not prob.m:
        return 0, prob.n_pred_triples, prob.n_gold_triples
    rng = random.Random(seed)
    _, best = prob.climb(prob.seeded_mapping())
    for _ in range(restarts):
        _, s = prob.climb(prob.random_mapping(rng))
        best = max(best, s)
    return best, prob.n_pred_triples, prob.n_gold_triples


def match_count(pred_triples: Iterable[Triple], gold_triples: Iterable[Triple],
                mapping: dict[str, str]) -> int:
    """Number of pred triples equal to a gold triple after renaming variables by ``mapping``.

    ``mapping`` must be injective; unmapped variables match nothing.
    """
    if len(set(mapping.values())) != len(mapping):
        raise ValueError("variable mapping must be injective")
    gold = set(gold_triples)
    count = 0
    for t in set(pred_triples):
        src = mapping.get(t.source)
        if src is None:
            continue
        if t.kind == "relation":
            tgt = mapping.get(t.target)
            if tgt is None:
                continue
            count += Triple(t.kind, src, t.relation, tgt) in gold
        else:
            count += Triple(t.kind, src, t.relation, t.target) in gold
    return count


def _graph_vars(g: AmrGraph) -> list[str]:
    return list(g.nodes)


def smatch(pred: AmrGraph, gold: AmrGraph, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> PRF:
    return prf_from_counts(*best_match(to_triples(pred), to_triples(gold), _graph_vars(pred),
                                       _graph_vars(gold), restarts, seed))


def smatch_exhaustive(pred: AmrGraph, gold: AmrGraph) -> PRF:
    pt, gt = to_triples(pred), to_triples(gold)
    prob = _Problem(pt, gt, _var_order(pt, _graph_vars(pred)), _var_order(gt, _graph_vars(gold)))
    matched = prob.exhaustive() if prob.n and prob.m else 0
    return prf_from_counts(matched, len(pt), len(gt))


# --------------------------------------------------------------------------- task transforms

def strip_sense(concept: str) -> str:
    m = _SENSE_RE.match(concept)
    return m.group(1) if m else concept


def _multiset_prf(pred: Iterable, gold: Iterable) -> PRF:
    p, g = Counter(pred), Counter(gold)
    return prf_from_counts(sum((p & g).values()), sum(p.values()), sum(g.values()))


def unlabeled_triples(g: AmrGraph) -> frozenset[Triple]:
    return frozenset(t._replace(relation="rel") if t.kind == "relation" else t for t in to_triples(g))


def nowsd_triples(g: AmrGraph) -> frozenset[Triple]:
    out = set()
    for t in to_triples(g):
        if t.kind == "instance" or t.relation == TOP_RELATION:
            t = t._replace(target=strip_sense(t.target))
        out.add(t)
    return frozenset(out)


def _subgraph_triples(g: AmrGraph, keep_edge) -> frozenset[Triple]:
    out = set()
    for e in g.edges:
        if keep_edge(e):
            out.add(Triple("relation", e.source, e.relation, e.target))
            out.add(Triple("instance", e.source, "instance", g.nodes[e.source]))
            out.add(Triple("instance", e.target, "instance", g.nodes[e.target]))
    return frozenset(out)


def reentrancy_triples(g: AmrGraph) -> frozenset[Triple]:
    deg = g.surface_in_degree()
    return _subgraph_triples(g, lambda e: deg[e.surface_child] > 1)


def srl_triples(g: AmrGraph) -> frozenset[Triple]:
    return _subgraph_triples(g, lambda e: bool(_ARG_RE.match(e.relation)))


def concept_items(g: AmrGraph) -> list[str]:
    return list(g.nodes.values())


def named_entity_items(g: AmrGraph) -> list[tuple[str, str]]:
    items = []
    for e in g.edges:
        if e.relation == "name":
            ops = sorted(
                (a for a in g.attributes if a.source == e.target and re.fullmatch(r"op\d+", a.relation)),
                key=lambda a: int(a.relation[2:]),
            )
            items.append((g.nodes[e.source], " ".join(unquote(a.value) for a in ops)))
    return items


def negation_items(g: AmrGraph) -> list[str]:
    return [g.nodes[a.source] for a in g.attributes if a.relation == "polarity" and a.value == "-"]


def wiki_items(g: AmrGraph) -> list[tuple[str, str]]:
    return [(g.nodes[a.source], unquote(a.value)) for a in g.attributes if a.relation == "wiki"]


def frame_items(g: AmrGraph) -> list[str]:
    return [c for c in g.nodes.values() if _SENSE_RE.match(c)]


def nsframe_items(g: AmrGraph) -> list[str]:
    return [strip_sense(c) for c in frame_items(g)]


def ignorevars_items(g: AmrGraph) -> list[tuple[str, str, str]]:
    items = []
    for t in to_triples(g):
        if t.kind == "relation":
            items.append((g.nodes[t.source], t.relation, g.nodes[t.target]))
        elif t.kind == "attribute":
            items.append((g.nodes[t.source], t.relation, t.target))
    return items


def evaluate_all(pred: AmrGraph | None, gold: AmrGraph | None, restarts: int = DEFAULT_RESTARTS,
                 seed: int = 0) -> ScoreVector:
    """All 12 tasks. A missing (unparseable) graph on either side scores all zeros."""
    if pred is None or gold is None:
        return ScoreVector.zeros()
    pv, gv = _graph_vars(pred), _graph_vars(gold)

    def via_smatch(view) -> PRF:
        return prf_from_counts(*best_match(view(pred), view(gold), pv, gv, restarts, seed))

    def via_items(items) -> PRF:
        return _multiset_prf(items(pred), items(gold))

    scores = {
        "Smatch": via_smatch(to_triples),
        "Unlabeled": via_smatch(unlabeled_triples),
        "NoWSD": via_smatch(nowsd_triples),
        "Concepts": via_items(concept_items),
        "NamedEnt": via_items(named_entity_items),
        "Negations": via_items(negation_items),
        "Wikification": via_items(wiki_items),
        "Reentrancies": via_smatch(reentrancy_triples),
        "SRL": via_smatch(srl_triples),
        "Frames": via_items(frame_items),
        "NSFrames": via_items(nsframe_items),
        "IgnoreVars": via_items(ignorevars_items),
    }
    return ScoreVector(scores)
