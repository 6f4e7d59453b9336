"""Turn (sentence, AMR graph, dependency tree) into the regressor's integer sequences."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import AmrGraph, linearize_dfs

PAD, OOV, NEG, NUM = "<pad>", "<oov>", "<neg>", "<num>"
RESERVED_TOKENS = (PAD, OOV, NEG, NUM)
PAD_ID, OOV_ID = 0, 1
NO_SENSE = 0
DEFAULT_MAX_LEN = 256
DEFAULT_MIN_FREQ = 5

_NUMBER_RE = re.compile(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d*)?$|^[+-]?\.\d+$")
_SENSE_RE = re.compile(r"^(.+)-(\d\d)$")
_TRAILING_PUNCT = ".,;:!?\"')]}"


class DepFormatError(ValueError):
    pass


# --------------------------------------------------------------------------- sentences

def tokenize(sentence: str) -> list[str]:
    """Whitespace tokenization that also splits off trailing punctuation."""
    out = []
    for chunk in sentence.split():
        tail = []
        while len(chunk) > 1 and chunk[-1] in _TRAILING_PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        out.append(chunk)
        out.extend(reversed(tail))
    return out


def fallback_lemma(form: str) -> str:
    word = form.lower()
    for suffix in sorted(("s", "es", "ed", "ing"), key=len, reverse=True):
        if word.endswith(suffix) and len(word) - len(suffix) >= 2:
            return word[: -len(suffix)]
    return word


@dataclass
class DepTree:
    tokens: list[tuple[str, str]]
    heads: list[int]
    labels: list[str]

    def __post_init__(self):
        n = len(self.tokens)
        if len(self.heads) != n or len(self.labels) != n:
            raise DepFormatError("tokens, heads and labels must have equal length")
        for i, h in enumerate(self.heads):
            if not -1 <= h < n or h == i:
                raise DepFormatError(f"head index {h} of token {i} out of range")
        for i in range(n):
            seen = set()
            j = i
            while j != -1:
                if j in seen:
                    raise DepFormatError(f"cyclic heads involving token {i}")
                seen.add(j)
                j = self.heads[j]

    @property
    def forms(self) -> list[str]:
        return [f for f, _ in self.tokens]

    @property
    def lemmas(self) -> list[str]:
        return [lem for _, lem in self.tokens]


def flat_tree(forms: Sequence[str]) -> DepTree:
    """Fallback tree: token 0 is the root and every other token attaches to it."""
    forms = list(forms)
    heads = [-1] + [0] * (len(forms) - 1)
    labels = ["root"] + ["dep"] * (len(forms) - 1)
    return DepTree([(f, fallback_lemma(f)) for f in forms], heads, labels)


def _parse_dep_block(lines: list[str], first_line: int) -> DepTree:
    rows = []
    for offset, line in enumerate(lines):
        cols = line.rstrip("\n").split("\t")
        if len(cols) < 5:
            raise DepFormatError(f"line {first_line + offset}: expected 5 tab-separated columns")
        try:
            idx, head = int(cols[0]), int(cols[3])
        except ValueError as exc:
            raise DepFormatError(f"line {first_line + offset}: non-integer index/head") from exc
        if idx != offset + 1:
            raise DepFormatError(f"line {first_line + offset}: token index {idx}, expected {offset + 1}")
        lemma = cols[2] if cols[2] not in ("", "_") else fallback_lemma(cols[1])
        rows.append((cols[1], lemma, head - 1, cols[4]))
    n = len(rows)
    for i, (_, _, h, _) in enumerate(rows):
        if not -1 <= h < n:
            raise DepFormatError(f"line {first_line + i}: head {h + 1} out of range 0..{n}")
    return DepTree([(f, lem) for f, lem, _, _ in rows], [h for *_, h, _ in rows], [r[3] for r in rows])


_SENT_ID_RE = re.compile(r"^#\s*sent_id\s*=\s*(\S+)")


def read_dep_tsv_with_ids(text: str) -> list[tuple[str | None, DepTree]]:
    """Like ``read_dep_tsv`` but also returns the ``# sent_id = X`` comment preceding each block."""
    out: list[tuple[str | None, DepTree]] = []
    block: list[str] = []
    start, sent_id = 1, None
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("#"):
            m = _SENT_ID_RE.match(line)
            if m and not block:
                sent_id = m.group(1)
            continue
        if line.strip():
            if not block:
                start = lineno
            block.append(line)
        elif block:
            out.append((sent_id, _parse_dep_block(block, start)))
            block, sent_id = [], None
    if block:
        out.append((sent_id, _parse_dep_block(block, start)))
    return out


def read_dep_tsv(text: str) -> list[DepTree]:
    """Blank-line separated blocks of ``index form lemma head deprel`` (1-based, head 0 = root)."""
    return [tree for _, tree in read_dep_tsv_with_ids(text)]


def format_dep_tsv(trees: Iterable[DepTree], ids: Sequence[str] | None = None) -> str:
    blocks = []
    for n, t in enumerate(trees):
        lines = [f"# sent_id = {ids[n]}"] if ids is not None else []
        lines.extend(f"{i + 1}\t{f}\t{lem}\t{h + 1}\t{lab}"
                     for i, ((f, lem), h, lab) in enumerate(zip(t.tokens, t.heads, t.labels)))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def linearize_dep(tree: DepTree) -> tuple[list[str], list[int]]:
    children: dict[int, list[int]] = {i: [] for i in range(-1, len(tree.tokens))}
    for i, h in enumerate(tree.heads):
        children[h].append(i)
    toks: list[str] = []
    ptrs: list[int] = []

    def visit(i: int):
        toks.extend(("(", tree.labels[i], tree.tokens[i][0]))
        ptrs.extend((-1, -1, i))
        for c in children[i]:
            visit(c)
        toks.append(")")
        ptrs.append(-1)

    for r in children[-1]:
        visit(r)
    return toks, ptrs


# --------------------------------------------------------------------------- AMR side

def special_tokens(amr_tokens: Sequence[str]) -> list[str]:
    return [NEG if t == "-" else NUM if _NUMBER_RE.match(t) else t for t in amr_tokens]


def sense_id(sense: str) -> int:
    return int(sense)


def strip_senses(amr_tokens: Sequence[str]) -> tuple[list[str], list[int]]:
    toks, senses = [], []
    for t in amr_tokens:
        m = _SENSE_RE.match(t)
        if m and not t.startswith(":"):
            toks.append(m.group(1))
            senses.append(sense_id(m.group(2)))
        else:
            toks.append(t)
            senses.append(NO_SENSE)
    return toks, senses


def _is_structural(tok: str) -> bool:
    return tok in ("(", ")", NEG, NUM) or tok.startswith(":")


def align_pointers(seq_tokens: Sequence[str], sentence_tokens: Sequence[str],
                   sentence_lemmas: Sequence[str]) -> list[int]:
    """Point each token at the first unconsumed sentence position matching its form or lemma."""
    forms = [f.lower() for f in sentence_tokens]
    lemmas = [lem.lower() for lem in sentence_lemmas]
    consumed = [False] * len(forms)
    out = []
    for tok in seq_tokens:
        if _is_structural(tok):
            out.append(-1)
            continue
        m = _SENSE_RE.match(tok)
        key = (m.group(1) if m else tok).lower()
        hit = -1
        for i, (f, lem) in enumerate(zip(forms, lemmas)):
            if not consumed[i] and (f == key or lem == key):
                hit = i
                consumed[i] = True
                break
        out.append(hit)
    return out


@dataclass
class LinearizedInput:
    amr_tokens: list[str]
    amr_pointers: list[int]
    amr_senses: list[int]
    dep_tokens: list[str]
    dep_pointers: list[int]

    def __post_init__(self):
        if not len(self.amr_tokens) == len(self.amr_pointers) == len(self.amr_senses):
            raise ValueError("AMR token, pointer and sense sequences differ in length")
        if len(self.dep_tokens) != len(self.dep_pointers):
            raise ValueError("dependency token and pointer sequences differ in length")


def linearize_instance(graph: AmrGraph, dep: DepTree, use_dep: bool = True) -> LinearizedInput:
    """Full preprocessing for one (graph, sentence) pair; the sentence comes from ``dep``."""
    toks, senses = strip_senses(special_tokens(linearize_dfs(graph)))
    ptrs = align_pointers(toks, dep.forms, dep.lemmas)
    if use_dep:
        dtoks, dptrs = linearize_dep(dep)
    else:
        dtoks, dptrs = list(dep.forms), list(range(len(dep.forms)))
    return LinearizedInput(toks, ptrs, senses, dtoks, dptrs)


# --------------------------------------------------------------------------- vocab & encoding

@dataclass
class Vocab:
    tokens: list[str]
    senses: list[int]
    max_len: int = DEFAULT_MAX_LEN
    min_freq: int = DEFAULT_MIN_FREQ
    token_to_id: dict[str, int] = field(init=False, repr=False)
    sense_to_id: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError("token table must start with the reserved tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        # sense table: PAD, OOV, then observed sense numbers
        self.sense_to_id = {s: i + 2 for i, s in enumerate(self.senses)}

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def n_senses(self) -> int:
        return len(self.senses) + 2

    @property
    def n_pointers(self) -> int:
        return self.max_len + 3  # PAD, OOV, -1, positions

    def token_id(self, tok: str) -> int:
        return self.token_to_id.get(tok, OOV_ID)

    def pointer_id(self, ptr: int) -> int:
        if ptr == -1:
            return 2
        return ptr + 3 if 0 <= ptr < self.max_len else OOV_ID

    def sense_id(self, sense: int) -> int:
        return self.sense_to_id.get(sense, OOV_ID)

    def to_dict(self) -> dict:
        return {"tokens": self.tokens, "senses": self.senses, "max_len": self.max_len, "min_freq": self.min_freq}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(list(d["tokens"]), [int(s) for s in d["senses"]], int(d["max_len"]), int(d["min_freq"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocab(corpus: Sequence[LinearizedInput], min_freq: int = DEFAULT_MIN_FREQ,
                max_len: int = DEFAULT_MAX_LEN) -> Vocab:
    """One token table shared by the AMR and dependency streams, plus a sense table."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tok_counts: Counter = Counter()
    sense_counts: Counter = Counter()
    for x in corpus:
        tok_counts.update(x.amr_tokens)
        tok_counts.update(x.dep_tokens)
        sense_counts.update(x.amr_senses)
    kept = sorted((t for t, c in tok_counts.items() if c >= min_freq and t not in RESERVED_TOKENS),
                  key=lambda t: (-tok_counts[t], t))
    senses = sorted(s for s, c in sense_counts.items() if c >= min_freq)
    return Vocab(list(RESERVED_TOKENS) + kept, senses, max_len, min_freq)


@dataclass
class EncodedInput:
    amr_tokens: np.ndarray
    amr_pointers: np.ndarray
    amr_senses: np.ndarray
    dep_tokens: np.ndarray
    dep_pointers: np.ndarray
    amr_length: int
    dep_length: int


def encode(x: LinearizedInput, vocab: Vocab, max_len: int | None = None) -> EncodedInput:
    """Map to ids, right-truncate to ``max_len`` and pad with PAD up to ``max_len``."""
    max_len = vocab.max_len if max_len is None else max_len

    def fit(ids: list[int]) -> np.ndarray:
        ids = ids[:max_len]
        return np.array(ids + [PAD_ID] * (max_len - len(ids)), dtype=np.int64)

    la = min(len(x.amr_tokens), max_len)
    ld = min(len(x.dep_tokens), max_len)
    return EncodedInput(
        fit([vocab.token_id(t) for t in x.amr_tokens]),
        fit([vocab.pointer_id(p) for p in x.amr_pointers]),
        fit([vocab.sense_id(s) for s in x.amr_senses]),
        fit([vocab.token_id(t) for t in x.dep_tokens]),
        fit([vocab.pointer_id(p) for p in x.dep_pointers]),
        la,
        ld,
    )


def decode(e: EncodedInput, vocab: Vocab) -> LinearizedInput:
    id_to_sense = {i: s for s, i in vocab.sense_to_id.items()}

    def ptr(i: int) -> int:
        return -1 if i == 2 else i - 3

    la, ld = e.amr_length, e.dep_length
    return LinearizedInput(
        [vocab.tokens[i] for i in e.amr_tokens[:la]],
        [ptr(int(i)) for i in e.amr_pointers[:la]],
        [id_to_sense[int(i)] for i in e.amr_senses[:la]],
        [vocab.tokens[i] for i in e.dep_tokens[:ld]],
        [ptr(int(i)) for i in e.dep_pointers[:ld]],
    )


def encoded_to_record(e: EncodedInput, instance_id: str, target: Sequence[float] | None = None) -> dict:
    la, ld = e.amr_length, e.dep_length
    rec = {
        "id": instance_id,
        "amr_tokens": e.amr_tokens[:la].tolist(),
        "amr_pointers": e.amr_pointers[:la].tolist(),
        "amr_senses": e.amr_senses[:la].tolist(),
        "dep_tokens": e.dep_tokens[:ld].tolist(),
        "dep_pointers": e.dep_pointers[:ld].tolist(),
        "amr_length": la,
        "dep_length": ld,
    }
    if target is not None:
        rec["target"] = [float(v) for v in target]
    return rec


def record_to_encoded(rec: dict, max_len: int) -> EncodedInput:
    def pad(seq):
        return np.array(list(seq) + [PAD_ID] * (max_len - len(seq)), dtype=np.int64)

    return EncodedInput(pad(rec["amr_tokens"]), pad(rec["amr_pointers"]), pad(rec["amr_senses"]),
                        pad(rec["dep_tokens"]), pad(rec["dep_pointers"]),
                        int(rec["amr_length"]), int(rec["dep_length"]))
