"""Synthetic gold graphs, surrogate sentences and graded corruptions that mimic parser errors."""
from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import AmrEntry, AmrGraph, Attribute, Edge
from .metrics import N_SCORES, ScoreVector, evaluate_all
from .preprocess import DepTree

CORRUPTION_OPS = (
    "delete-edge",
    "relabel-edge",
    "substitute-concept",
    "flip-sense",
    "drop-negation",
    "delete-subtree",
    "swap-wiki",
    "break-reentrancy",
)
ENTITY_TYPES = ("person", "country", "city", "organization", "company")
MODIFIER_ROLES = ("mod", "location", "time", "poss", "manner", "purpose", "degree", "part")
ARG_ROLES = ("ARG0", "ARG1", "ARG2")
FILLERS = ("the", "a", "of", "to", "and", "that", "is", "was", "in", "for", "with", "by")
DEP_LABEL = {"ARG0": "nsubj", "ARG1": "obj", "ARG2": "obl", "mod": "amod", "location": "obl",
             "time": "advmod", "poss": "nmod:poss", "manner": "advmod", "purpose": "advcl",
             "degree": "advmod", "part": "nmod", "name": "flat"}
POOL_SIZE = 300
N_PREDICATES = 80
ZIPF_EXPONENT = 1.1


def _make_lexicon(n: int, seed: int = 20190601) -> list[str]:
    rng = random.Random(seed)
    onsets = "b c d f g h k l m n p r t v z br dr gl kr pl st tr".split()
    vowels = "a e i o u ai ou".split()
    codas = ["", "", "n", "r", "l", "m", "k", "t"]
    words: list[str] = []
    seen = set(FILLERS) | set(ENTITY_TYPES) | {"name", "not", "thing"}
    while len(words) < n:
        w = "".join(rng.choice(onsets) + rng.choice(vowels) for _ in range(rng.choice((2, 2, 3))))
        w += rng.choice(codas)
        if w in seen or w.endswith(("s", "ed", "ing", "e")):
            continue
        seen.add(w)
        words.append(w)
    return words


LEXICON = _make_lexicon(POOL_SIZE + 60)
PREDICATE_LEMMAS = LEXICON[:N_PREDICATES]
NOUN_LEMMAS = LEXICON[N_PREDICATES:POOL_SIZE]
NAME_WORDS = [w.capitalize() for w in LEXICON[POOL_SIZE:]]
# each predicate has a canonical sense so flipped senses are learnable
CANONICAL_SENSE = {lem: 1 + (i % 3) for i, lem in enumerate(PREDICATE_LEMMAS)}


def _zipf_choice(rng: random.Random, items: Sequence[str]) -> str:
    weights = [1.0 / (r + 1) ** ZIPF_EXPONENT for r in range(len(items))]
    return rng.choices(items, weights=weights, k=1)[0]


@dataclass
class CorruptionSpec:
    ops: tuple[str, ...] = CORRUPTION_OPS
    severity: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.severity < 0:
            raise ValueError("severity must be >= 0")
        if self.severity > 0 and not self.ops:
            raise ValueError("at least one op is needed when severity > 0")
        unknown = set(self.ops) - set(CORRUPTION_OPS)
        if unknown:
            raise ValueError(f"unknown corruption ops: {sorted(unknown)}")


# --------------------------------------------------------------------------- gold graphs

class _Builder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.nodes: dict[str, str] = {}
        self.edges: list[Edge] = []
        self.attrs: list[Attribute] = []

    def var(self, concept: str) -> str:
        base = concept[0].lower() if concept[0].isalpha() else "x"
        v, k = base, 2
        while v in self.nodes:
            v, k = f"{base}{k}", k + 1
        return v

    def add(self, concept: str) -> str:
        v = self.var(concept)
        self.nodes[v] = concept
        return v

    def predicate(self) -> str:
        lem = _zipf_choice(self.rng, PREDICATE_LEMMAS)
        return f"{lem}-{CANONICAL_SENSE[lem]:02d}"

    def noun(self) -> str:
        return _zipf_choice(self.rng, NOUN_LEMMAS)


def gen_gold(n_nodes: int, seed: int, concept_pool: Sequence[str] | None = None) -> tuple[AmrGraph, DepTree]:
    """Random gold graph with ~n_nodes nodes and a surrogate sentence carried as a dependency tree.

    ``concept_pool`` overrides the noun pool (predicates always come from the built-in lexicon).
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    rng = random.Random(seed)
    b = _Builder(rng)
    nouns = list(concept_pool) if concept_pool else NOUN_LEMMAS
    noun = lambda: _zipf_choice(rng, nouns)  # noqa: E731
    if n_nodes == 1:
        b.add(noun())
        return _finish(b, rng)

    root = b.add(b.predicate() if rng.random() < 0.6 else noun())
    used_args: dict[str, int] = {root: 0}
    frontier = [root]
    while len(b.nodes) < n_nodes:
        parent = rng.choice(frontier)
        is_pred = "-" in b.nodes[parent] and b.nodes[parent][-2:].isdigit()
        r = rng.random()
        if r < 0.2:
            concept = b.predicate()
        elif r < 0.3 and n_nodes - len(b.nodes) >= 2:
            concept = rng.choice(ENTITY_TYPES)
        else:
            concept = noun()
        child = b.add(concept)
        child_pred = concept[-2:].isdigit()
        if is_pred and used_args[parent] < len(ARG_ROLES) and rng.random() < 0.8:
            b.edges.append(Edge(parent, ARG_ROLES[used_args[parent]], child))
            used_args[parent] += 1
        elif child_pred and rng.random() < 0.5:
            b.edges.append(Edge(child, ARG_ROLES[rng.randrange(2)], parent, True))
            used_args[child] = 1
        else:
            b.edges.append(Edge(parent, rng.choice(MODIFIER_ROLES), child))
        used_args.setdefault(child, 0)
        if concept in ENTITY_TYPES:
            name = b.add("name")
            b.edges.append(Edge(child, "name", name))
            for i in range(rng.choice((1, 1, 2))):
                b.attrs.append(Attribute(name, f"op{i + 1}", f'"{rng.choice(NAME_WORDS)}"'))
            if rng.random() < 0.7:
                b.attrs.append(Attribute(child, "wiki", f'"{rng.choice(NAME_WORDS)}_{rng.randrange(100)}"'))
            else:
                b.attrs.append(Attribute(child, "wiki", "-"))
        frontier.append(child)

    content = [v for v, c in b.nodes.items() if c != "name"]
    if rng.random() < 0.3:
        b.attrs.append(Attribute(rng.choice(content), "polarity", "-"))
    if rng.random() < 0.15:
        b.attrs.append(Attribute(rng.choice(content), "quant", str(rng.choice((2, 3, 5, 10, 100, 1000)))))

    if len(b.nodes) >= 4:
        tree_edges = len(b.edges)
        extra = max(1, round(rng.uniform(0.1, 0.3) * tree_edges / 2))
        for _ in range(extra):
            _add_reentrancy(b, rng)
    return _finish(b, rng)


def _surface_ancestors(edges: list[Edge], var: str) -> set[str]:
    parents: dict[str, list[str]] = {}
    for e in edges:
        parents.setdefault(e.surface_child, []).append(e.surface_parent)
    seen, stack = set(), [var]
    while stack:
        v = stack.pop()
        for p in parents.get(v, ()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def _add_reentrancy(b: _Builder, rng: random.Random) -> None:
    preds = [v for v, c in b.nodes.items() if c[-2:].isdigit()]
    targets = [v for v, c in b.nodes.items() if c != "name"]
    if not preds or len(targets) < 2:
        return
    for _ in range(10):
        src, tgt = rng.choice(preds), rng.choice(targets)
        if src == tgt or tgt in _surface_ancestors(b.edges, src) and True:
            continue
        if any(e.source == src and e.target == tgt for e in b.edges):
            continue
        role = rng.choice(ARG_ROLES)
        b.edges.append(Edge(src, role, tgt))
        return


def _finish(b: _Builder, rng: random.Random) -> tuple[AmrGraph, DepTree]:
    root = next(iter(b.nodes))
    g = AmrGraph(root, dict(b.nodes), tuple(b.edges), tuple(b.attrs))
    return g, surrogate_sentence(g, rng)


def _inflect(rng: random.Random, lemma: str, predicate: bool) -> str:
    if predicate:
        return lemma + rng.choice(("", "s", "ed", "ing"))
    return lemma + ("s" if rng.random() < 0.2 else "")


def surrogate_sentence(g: AmrGraph, rng: random.Random) -> DepTree:
    """Concept words in depth-first order with fillers; heads follow the graph's spanning tree."""
    forms: list[str] = []
    lemmas: list[str] = []
    heads: list[int | str] = []  # int index, or a variable whose anchor is resolved later
    labels: list[str] = []
    anchor: dict[str, int] = {}
    parent_of: dict[str, tuple[str, str]] = {}
    seen: set[str] = set()

    def emit(form, lemma, head, label) -> int:
        forms.append(form)
        lemmas.append(lemma)
        heads.append(head)
        labels.append(label)
        return len(forms) - 1

    def visit(v: str):
        seen.add(v)
        concept = g.nodes[v]
        par = parent_of.get(v)
        head = par[0] if par else None
        label = DEP_LABEL.get(par[1], "dep") if par else "root"
        if concept == "name":
            ops = sorted((a for a in g.attributes if a.source == v and a.relation.startswith("op")),
                         key=lambda a: a.relation)
            first = None
            for a in ops:
                word = a.value.strip('"')
                if first is None:
                    first = emit(word, word, head, label)
                    anchor[v] = first
                else:
                    emit(word, word, first, "flat")
            if first is None:
                anchor[v] = emit("name", "name", head, label)
        else:
            if rng.random() < 0.3:
                filler = rng.choice(FILLERS)
                emit(filler, filler, v, "det")
            negated = any(a.source == v and a.relation == "polarity" and a.value == "-" for a in g.attributes)
            if negated:
                emit("not", "not", v, "advmod")
            m = concept[-2:].isdigit() and "-" in concept
            lemma = concept[:-3] if m else concept
            anchor[v] = emit(_inflect(rng, lemma, m), lemma, head, label)
            for a in g.attributes:
                if a.source == v and a.relation == "quant":
                    emit(a.value, a.value, v, "nummod")
        for rel, item in g.children(v):
            if isinstance(item, Edge) and item.surface_child not in seen:
                parent_of[item.surface_child] = (v, item.relation)
                visit(item.surface_child)

    visit(g.root)
    emit(".", ".", g.root, "punct")
    resolved = []
    for h in heads:
        if h is None:
            resolved.append(-1)
        elif isinstance(h, str):
            resolved.append(anchor[h])
        else:
            resolved.append(h)
    return DepTree(list(zip(forms, lemmas)), resolved, labels)


# --------------------------------------------------------------------------- corruption

def _prune(nodes: dict[str, str], edges: list[Edge], attrs: list[Attribute], root: str):
    g = AmrGraph(root, nodes, tuple(edges), tuple(attrs))
    keep = g.reachable()
    return ({v: c for v, c in nodes.items() if v in keep},
            [e for e in edges if e.source in keep and e.target in keep],
            [a for a in attrs if a.source in keep])


def _apply_op(op: str, g: AmrGraph, rng: random.Random) -> AmrGraph | None:
    nodes, edges, attrs = dict(g.nodes), list(g.edges), list(g.attributes)
    if op == "delete-edge":
        if not edges:
            return None
        del edges[rng.randrange(len(edges))]
        nodes, edges, attrs = _prune(nodes, edges, attrs, g.root)
    elif op == "relabel-edge":
        if not edges:
            return None
        i = rng.randrange(len(edges))
        e = edges[i]
        choices = [r for r in ARG_ROLES + MODIFIER_ROLES if r != e.relation]
        edges[i] = e._replace(relation=rng.choice(choices))
    elif op == "substitute-concept":
        cands = [v for v, c in nodes.items() if c != "name"]
        v = rng.choice(cands)
        old = nodes[v]
        new = old
        while new == old:
            new = f"{rng.choice(PREDICATE_LEMMAS)}-0{rng.randint(1, 3)}" if rng.random() < 0.2 else rng.choice(NOUN_LEMMAS)
        nodes[v] = new
    elif op == "flip-sense":
        cands = [v for v, c in nodes.items() if c[-2:].isdigit() and c[-3] == "-"]
        if not cands:
            return None
        v = rng.choice(cands)
        old = int(nodes[v][-2:])
        new = rng.choice([s for s in range(1, 6) if s != old])
        nodes[v] = f"{nodes[v][:-3]}-{new:02d}"
    elif op == "drop-negation":
        idx = [i for i, a in enumerate(attrs) if a.relation == "polarity"]
        if not idx:
            return None
        del attrs[rng.choice(idx)]
    elif op == "delete-subtree":
        cands = [v for v in nodes if v != g.root]
        if not cands:
            return None
        v = rng.choice(cands)
        edges = [e for e in edges if e.surface_child != v]
        nodes, edges, attrs = _prune(nodes, edges, attrs, g.root)
    elif op == "swap-wiki":
        idx = [i for i, a in enumerate(attrs) if a.relation == "wiki"]
        if not idx:
            return None
        i = rng.choice(idx)
        new = "-" if attrs[i].value != "-" and rng.random() < 0.5 else f'"{rng.choice(NAME_WORDS)}_{rng.randrange(100)}"'
        attrs[i] = attrs[i]._replace(value=new)
    elif op == "break-reentrancy":
        deg = g.surface_in_degree()
        idx = [i for i, e in enumerate(edges) if deg[e.surface_child] > 1]
        if not idx:
            return None
        i = rng.choice(idx)
        e = edges[i]
        child = e.surface_child
        b = _Builder(rng)
        b.nodes = nodes
        fresh = b.add(nodes[child])
        edges[i] = e._replace(source=fresh) if e.inverted else e._replace(target=fresh)
    else:
        raise ValueError(f"unknown corruption op {op!r}")
    return AmrGraph(g.root, nodes, tuple(edges), tuple(attrs))


def apply_corruptions(g: AmrGraph, spec: CorruptionSpec) -> tuple[AmrGraph, int]:
    """Apply ``spec.severity`` randomly drawn ops; returns the graph and the number skipped."""
    rng = random.Random(spec.seed)
    skipped = 0
    for _ in range(spec.severity):
        op = rng.choice(spec.ops)
        out = _apply_op(op, g, rng)
        if out is None:
            skipped += 1
        else:
            g = out
    return g, skipped


def corrupt(g: AmrGraph, spec: CorruptionSpec) -> AmrGraph:
    return apply_corruptions(g, spec)[0]


# --------------------------------------------------------------------------- corpora

@dataclass
class SyntheticInstance:
    sentence_id: str
    system: str
    dep: DepTree
    gold: AmrGraph
    pred: AmrGraph
    scores: ScoreVector

    @property
    def sentence(self) -> str:
        return " ".join(self.dep.forms)


@dataclass
class SyntheticCorpus:
    golds: list[tuple[str, AmrGraph, DepTree]]
    instances: list[SyntheticInstance]
    systems: list[str]
    system_f1: dict[str, float] = field(default_factory=dict)

    def gold_entries(self) -> list[AmrEntry]:
        return [AmrEntry(id=sid, sentence=" ".join(dep.forms), graph=g) for sid, g, dep in self.golds]

    def system_entries(self, system: str) -> list[AmrEntry]:
        return [AmrEntry(id=x.sentence_id, sentence=x.sentence, graph=x.pred)
                for x in self.instances if x.system == system]


def default_systems(severities: Sequence[int] = (1, 3, 6)) -> list[CorruptionSpec]:
    return [CorruptionSpec(CORRUPTION_OPS, s) for s in severities]


def system_name(i: int, spec: CorruptionSpec) -> str:
    return f"sys{i}-sev{spec.severity}"


def _instance_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003) ^ index


def _gen_sentence(job: tuple) -> tuple:
    n, seed, systems, names, min_nodes, max_nodes, restarts = job
    s_seed = _instance_seed(seed, n)
    g, dep = gen_gold(random.Random(s_seed).randint(min_nodes, max_nodes), s_seed)
    sid = f"s{n:05d}"
    out = []
    for k, (name, spec) in enumerate(zip(names, systems)):
        pred = corrupt(g, CorruptionSpec(spec.ops, spec.severity, _instance_seed(s_seed, k + 1)))
        out.append(SyntheticInstance(sid, name, dep, g, pred, evaluate_all(pred, g, restarts=restarts, seed=s_seed)))
    return (sid, g, dep), out


def gen_training_corpus(n_sentences: int, systems: Sequence[CorruptionSpec], seed: int,
                        min_nodes: int = 3, max_nodes: int = 14, restarts: int = 4,
                        jobs: int = 1) -> SyntheticCorpus:
    """One gold graph per sentence and one corrupted parse per (sentence, system), with targets.

    Every sentence derives its own seed, so the corpus does not depend on ``jobs``.
    """
    if n_sentences < 0:
        raise ValueError("n_sentences must be >= 0")
    if min_nodes < 1 or max_nodes < min_nodes:
        raise ValueError("need 1 <= min_nodes <= max_nodes")
    systems = list(systems)
    names = [system_name(i, s) for i, s in enumerate(systems)]
    work = [(n, seed, systems, names, min_nodes, max_nodes, restarts) for n in range(n_sentences)]
    if jobs > 1 and n_sentences > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_gen_sentence, work, chunksize=8))
    else:
        results = [_gen_sentence(w) for w in work]
    golds = [r[0] for r in results]
    instances = [x for r in results for x in r[1]]
    f1 = {name: float(np.mean([x.scores["Smatch"].f1 for x in instances if x.system == name]))
          if n_sentences else 0.0 for name in names}
    return SyntheticCorpus(golds, instances, names, f1)


SPLITS = ("train", "dev", "test")


def split_sentences(sentence_ids: Sequence[str], seed: int, dev_frac: float = 0.15,
                    test_frac: float = 0.15) -> dict[str, str]:
    """Seeded sentence-level split so no sentence appears in two partitions."""
    if dev_frac < 0 or test_frac < 0 or dev_frac + test_frac >= 1:
        raise ValueError("need dev_frac, test_frac >= 0 and dev_frac + test_frac < 1")
    ids = list(sentence_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_dev, n_test = int(round(dev_frac * len(ids))), int(round(test_frac * len(ids)))
    out = {}
    for rank, i in enumerate(order):
        out[ids[i]] = "dev" if rank < n_dev else "test" if rank < n_dev + n_test else "train"
    return out


def write_synthetic(corpus: SyntheticCorpus, out_dir, seed: int, dev_frac: float = 0.15,
                    test_frac: float = 0.15, severities: Sequence[int] | None = None) -> dict[str, Path]:
    """Write gold/system AMR files, dependency TSV, targets, manifest, splits and system summary."""
    from .graph import write_corpus
    from .preprocess import format_dep_tsv
    from .tables import ManifestRow, ScoreTable, write_manifest, write_tsv

    out = Path(out_dir)
    (out / "systems").mkdir(parents=True, exist_ok=True)
    paths = {name: out / f for name, f in (("gold", "gold.amr"), ("deps", "deps.tsv"), ("targets", "targets.tsv"),
                                           ("manifest", "manifest.tsv"), ("splits", "splits.tsv"),
                                           ("systems", "systems.tsv"))}
    paths["gold"].write_text(write_corpus(corpus.gold_entries()), encoding="utf-8")
    paths["deps"].write_text(format_dep_tsv([d for _, _, d in corpus.golds], [s for s, _, _ in corpus.golds]),
                             encoding="utf-8")
    manifest = []
    for name in corpus.systems:
        rel = f"systems/{name}.amr"
        entries = corpus.system_entries(name)
        (out / rel).write_text(write_corpus(entries), encoding="utf-8")
        manifest.extend(ManifestRow(e.id, name, rel, k) for k, e in enumerate(entries))
    paths["manifest"].write_text(write_manifest(manifest), encoding="utf-8")
    table = ScoreTable([(x.sentence_id, x.system) for x in corpus.instances],
                       np.array([x.scores.to_array() for x in corpus.instances]).reshape(-1, N_SCORES))
    paths["targets"].write_text(table.to_text(), encoding="utf-8")
    splits = split_sentences([s for s, _, _ in corpus.golds], seed, dev_frac, test_frac)
    paths["splits"].write_text(write_tsv(sorted(splits.items()), ("sentence-id", "split")), encoding="utf-8")
    sev = list(severities) if severities is not None else [None] * len(corpus.systems)
    paths["systems"].write_text(
        write_tsv(((name, "" if s is None else s, corpus.system_f1[name]) for name, s in zip(corpus.systems, sev)),
                  ("system", "severity", "true-f1")), encoding="utf-8")
    return paths
