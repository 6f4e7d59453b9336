"""AMR graph model, PENMAN reading/writing, triple extraction and linearization."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

# Roles that end in "-of" but are not inverses.
NON_INVERTIBLE_ROLES = frozenset({"consist-of", "prep-out-of", "prep-on-behalf-of"})
TOP_RELATION = "TOP"


class PenmanError(ValueError):
    """Malformed PENMAN text. Carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class Edge(NamedTuple):
    """A relation between two variables, stored in normalized direction.

    ``inverted`` records that the surface form was ``target :relation-of source``.
    """

    source: str
    relation: str
    target: str
    inverted: bool = False

    @property
    def surface_parent(self) -> str:
        return self.target if self.inverted else self.source

    @property
    def surface_child(self) -> str:
        return self.source if self.inverted else self.target

    @property
    def surface_relation(self) -> str:
        return self.relation + "-of" if self.inverted else self.relation


class Attribute(NamedTuple):
    source: str
    relation: str
    value: str


class Triple(NamedTuple):
    kind: str  # "instance" | "attribute" | "relation"
    source: str
    relation: str
    target: str


@dataclass(frozen=True)
class AmrGraph:
    root: str
    nodes: dict[str, str]
    edges: tuple[Edge, ...] = ()
    attributes: tuple[Attribute, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))
        object.__setattr__(self, "attributes", tuple(Attribute(*a) for a in self.attributes))
        if self.root not in self.nodes:
            raise ValueError(f"root {self.root!r} is not a node")
        for var, concept in self.nodes.items():
            if not concept:
                raise ValueError(f"empty concept for variable {var!r}")
        for e in self.edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise ValueError(f"edge endpoint not in nodes: {e}")
        for a in self.attributes:
            if a.source not in self.nodes:
                raise ValueError(f"attribute source not in nodes: {a}")

    def __hash__(self):
        return hash((self.root, tuple(sorted(self.nodes.items())), self.edges, self.attributes))

    def children(self, var: str) -> Iterator[tuple[str, Attribute | Edge]]:
        """Surface-order children of ``var``: attributes first, then edges."""
        for a in self.attributes:
            if a.source == var:
                yield a.relation, a
        for e in self.edges:
            if e.surface_parent == var:
                yield e.surface_relation, e

    def reachable(self) -> set[str]:
        seen = {self.root}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for _, item in self.children(v):
                if isinstance(item, Edge) and item.surface_child not in seen:
                    seen.add(item.surface_child)
                    stack.append(item.surface_child)
        return seen

    def is_connected(self) -> bool:
        return self.reachable() == set(self.nodes)

    def surface_in_degree(self) -> dict[str, int]:
        """Number of surface parents per node; above 1 means the variable is re-mentioned."""
        deg = dict.fromkeys(self.nodes, 0)
        for e in self.edges:
            deg[e.surface_child] += 1
        return deg


@dataclass
class AmrEntry:
    """One corpus block: metadata plus a graph, or the parse error that replaced it."""

    id: str | None = None
    sentence: str | None = None
    graph: AmrGraph | None = None
    error: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)
    text: str = ""


def is_inverse_role(role: str) -> bool:
    return role.endswith("-of") and role not in NON_INVERTIBLE_ROLES


def unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        return value[1:-1]
    return value


# --------------------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<slash>/)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<role>:[^\s()"/:]*)
  | (?P<atom>[^\s()"/:]+)
    """,
    re.VERBOSE,
)


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        if text.startswith("#", pos) and text[line_start:pos].strip() == "":
            end = text.find("\n", pos)
            pos = len(text) if end < 0 else end
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PenmanError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        else:
            chunk = m.group()
            if "\n" in chunk:
                line += chunk.count("\n")
                line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    return toks


class _RawNode(NamedTuple):
    var: str
    concept: str
    children: list  # (role, value, tok); value is _RawNode or raw atom string


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, kind: str | None = None) -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else _Tok("", "", 1, 1)
            raise PenmanError("unexpected end of input (unbalanced parentheses?)", last.line, last.col)
        if kind is not None and tok.kind != kind:
            raise PenmanError(f"expected {kind}, found {tok.text!r}", tok.line, tok.col)
        self.i += 1
        return tok

    def node(self) -> _RawNode:
        self.take("lparen")
        var_tok = self.take()
        if var_tok.kind != "atom":
            raise PenmanError(f"expected variable, found {var_tok.text!r}", var_tok.line, var_tok.col)
        nxt = self.peek()
        if nxt is None or nxt.kind != "slash":
            where = nxt or var_tok
            raise PenmanError(f"missing '/' concept for variable {var_tok.text!r}", where.line, where.col)
        self.take("slash")
        concept_tok = self.take()
        if concept_tok.kind not in ("atom", "string"):
            raise PenmanError(f"expected concept, found {concept_tok.text!r}", concept_tok.line, concept_tok.col)
        children = []
        while True:
            tok = self.peek()
            if tok is None:
                raise PenmanError("unbalanced parentheses: missing ')'", var_tok.line, var_tok.col)
            if tok.kind == "rparen":
                self.take()
                break
            role_tok = self.take("role")
            if len(role_tok.text) < 2:
                raise PenmanError("empty role", role_tok.line, role_tok.col)
            val = self.peek()
            if val is None:
                raise PenmanError("role without value", role_tok.line, role_tok.col)
            if val.kind == "lparen":
                children.append((role_tok.text[1:], self.node(), val))
            elif val.kind in ("atom", "string"):
                self.take()
                children.append((role_tok.text[1:], val.text, val))
            else:
                raise PenmanError(f"unexpected {val.text!r} after role", val.line, val.col)
        return _RawNode(var_tok.text, concept_tok.text, children)


def parse_penman(text: str) -> AmrGraph:
    """Parse one PENMAN expression (optionally preceded by ``#`` comment lines)."""
    toks = _tokenize(text)
    if not toks:
        raise PenmanError("empty input", 1, 1)
    parser = _Parser(toks)
    top = parser.node()
    extra = parser.peek()
    if extra is not None:
        msg = "unbalanced parentheses: extra ')'" if extra.kind == "rparen" else f"trailing content {extra.text!r}"
        raise PenmanError(msg, extra.line, extra.col)

    nodes: dict[str, str] = {}
    defined_at: dict[str, _Tok] = {}

    def collect(raw: _RawNode, tok: _Tok):
        if raw.var in nodes:
            raise PenmanError(f"duplicate definition of variable {raw.var!r}", tok.line, tok.col)
        nodes[raw.var] = raw.concept
        defined_at[raw.var] = tok
        for _, value, vtok in raw.children:
            if isinstance(value, _RawNode):
                collect(value, vtok)

    collect(top, toks[0])

    edges: list[Edge] = []
    attributes: list[Attribute] = []

    def build(raw: _RawNode):
        for role, value, _ in raw.children:
            child = value.var if isinstance(value, _RawNode) else value
            if isinstance(value, _RawNode) or value in nodes:
                if is_inverse_role(role):
                    edges.append(Edge(child, role[:-3], raw.var, True))
                else:
                    edges.append(Edge(raw.var, role, child, False))
                if isinstance(value, _RawNode):
                    build(value)
            else:
                attributes.append(Attribute(raw.var, role, value))

    build(top)
    return AmrGraph(top.var, nodes, tuple(edges), tuple(attributes))


# --------------------------------------------------------------------------- writing

def serialize_penman(g: AmrGraph, indent: int = 4) -> str:
    unreachable = set(g.nodes) - g.reachable()
    if unreachable:
        raise ValueError(f"graph has nodes unreachable from root: {sorted(unreachable)}")
    seen: set[str] = set()

    def visit(var: str, depth: int) -> str:
        seen.add(var)
        parts = [f"({var} / {g.nodes[var]}"]
        pad = "\n" + " " * (indent * (depth + 1))
        for label, item in g.children(var):
            if isinstance(item, Attribute):
                parts.append(f"{pad}:{label} {item.value}")
            else:
                child = item.surface_child
                if child in seen:
                    parts.append(f"{pad}:{label} {child}")
                else:
                    parts.append(f"{pad}:{label} {visit(child, depth + 1)}")
        return "".join(parts) + ")"

    return visit(g.root, 0)


# --------------------------------------------------------------------------- views

def to_triples(g: AmrGraph) -> frozenset[Triple]:
    triples = {Triple("instance", v, "instance", c) for v, c in g.nodes.items()}
    triples.update(Triple("relation", e.source, e.relation, e.target) for e in g.edges)
    triples.update(Triple("attribute", a.source, a.relation, unquote(a.value)) for a in g.attributes)
    triples.add(Triple("attribute", g.root, TOP_RELATION, g.nodes[g.root]))
    return frozenset(triples)


def linearize_dfs(g: AmrGraph) -> list[str]:
    """Bracketed depth-first token sequence; a revisited node emits its variable only."""
    out: list[str] = []
    seen: set[str] = set()

    def visit(var: str):
        if var in seen:
            out.append(var)
            return
        seen.add(var)
        out.extend(("(", g.nodes[var]))
        for label, item in g.children(var):
            out.append(":" + label)
            if isinstance(item, Attribute):
                out.append(unquote(item.value))
            else:
                visit(item.surface_child)
        out.append(")")

    visit(g.root)
    return out


def rename_vars(g: AmrGraph, mapping: dict[str, str]) -> AmrGraph:
    ren = lambda v: mapping.get(v, v)  # noqa: E731
    return AmrGraph(
        ren(g.root),
        {ren(v): c for v, c in g.nodes.items()},
        tuple(Edge(ren(e.source), e.relation, ren(e.target), e.inverted) for e in g.edges),
        tuple(Attribute(ren(a.source), a.relation, a.value) for a in g.attributes),
    )


# --------------------------------------------------------------------------- corpora

def _blocks(text: str) -> Iterator[str]:
    block: list[str] = []
    for line in text.splitlines():
        if line.strip():
            block.append(line)
        elif block:
            yield "\n".join(block)
            block = []
    if block:
        yield "\n".join(block)


def parse_entry(block: str) -> AmrEntry:
    meta: dict[str, str] = {}
    body = []
    for line in block.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            for m in re.finditer(r"::(\S+)(?:\s+(.*?))?(?=\s+::\S|$)", stripped):
                meta[m.group(1)] = (m.group(2) or "").strip()
        else:
            body.append(line)
    entry = AmrEntry(id=meta.get("id"), sentence=meta.get("snt"), metadata=meta, text="\n".join(body))
    try:
        entry.graph = parse_penman(entry.text)
    except PenmanError as exc:
        entry.error = str(exc)
    return entry


def read_corpus(text: str) -> list[AmrEntry]:
    """Blank-line separated entries. Unparseable graphs are kept with ``graph=None``."""
    return [parse_entry(b) for b in _blocks(text)]


def read_corpus_file(path) -> list[AmrEntry]:
    with open(path, encoding="utf-8") as fh:
        return read_corpus(fh.read())


def format_entry(entry: AmrEntry) -> str:
    lines = []
    if entry.id is not None:
        lines.append(f"# ::id {entry.id}")
    if entry.sentence is not None:
        lines.append(f"# ::snt {entry.sentence}")
    for key, value in entry.metadata.items():
        if key not in ("id", "snt"):
            lines.append(f"# ::{key} {value}".rstrip())
    lines.append(serialize_penman(entry.graph) if entry.graph is not None else entry.text)
    return "\n".join(lines)


def write_corpus(entries: Iterable[AmrEntry]) -> str:
    return "\n\n".join(format_entry(e) for e in entries) + "\n"
