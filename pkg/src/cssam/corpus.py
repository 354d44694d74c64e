"""Corpus handling: code/docstring pairs, tokenization, vocabularies, padding.

Code tokenization follows the conventions of the search model: camel-case and
snake_case identifiers are split into their words, digit runs are separated
from letters, operator/punctuation characters are kept as single-character
tokens, and everything is lowercased. Query tokenization is plain natural
language: lowercase words, punctuation discarded.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

# A docstring must have strictly more than this many tokens to be ingested.
MIN_DOC_TOKENS = 2


@dataclass
class CodeDocPair:
    """One training/eval record: raw code, its docstring, and a language tag."""

    id: str
    code: str
    docstring: str
    lang: str


@dataclass
class TokenSequence:
    """Tokens with optional vocabulary ids and a real/pad mask.

    ``ids`` is None until the sequence has been encoded against a Vocab;
    ``mask[i]`` is True for real tokens and False for padding.
    """

    tokens: list[str]
    ids: list[int] | None = None
    mask: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.mask:
            self.mask = [True] * len(self.tokens)
        self.validate()

    def validate(self):
        if len(self.mask) != len(self.tokens):
            raise CorpusError("token/mask length mismatch")
        if self.ids is not None and len(self.ids) != len(self.tokens):
            raise CorpusError("token/id length mismatch")

    def __len__(self) -> int:
        return len(self.tokens)

    def with_ids(self, vocab: "Vocab") -> "TokenSequence":
        ids = [PAD_ID if not real else vocab.index(tok) for tok, real in zip(self.tokens, self.mask)]
        return TokenSequence(list(self.tokens), ids, list(self.mask))


class Vocab:
    """Token <-> index map with reserved <pad> (0) and <unk> (1) entries."""

    def __init__(self, tokens: list[str], min_count: int = 1):
        self.min_count = min_count
        self.index_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise CorpusError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_ID)

    def token(self, index: int) -> str:
        return self.index_to_token[index]

    def to_json(self) -> str:
        # External format: JSON array of tokens in index order.
        return json.dumps(self.index_to_token, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        items = json.loads(text)
        if items[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise CorpusError("vocab file missing reserved <pad>/<unk> entries")
        return cls(items[2:])


def _split_identifier_run(run: str) -> list[str]:
    """Split a letter/digit run at camel-case and letter/digit boundaries."""
    if not run:
        return []
    parts = []
    start = 0
    for i in range(1, len(run)):
        prev, cur = run[i - 1], run[i]
        boundary = False
        if cur.isupper() and (prev.islower() or prev.isdigit()):
            boundary = True
        elif cur.isupper() and prev.isupper() and i + 1 < len(run) and run[i + 1].islower():
            # end of an acronym: "HTTPServer" -> HTTP | Server
            boundary = True
        elif cur.isdigit() != prev.isdigit():
            boundary = True
        if boundary:
            parts.append(run[start:i])
            start = i
    parts.append(run[start:])
    return [p.lower() for p in parts]


def tokenize_code(source: str) -> TokenSequence:
    """Tokenize source code, keeping symbols and splitting identifiers."""
    tokens: list[str] = []
    run: list[str] = []

    def flush():
        if run:
            word = "".join(run)
            for piece in word.split("_"):
                tokens.extend(_split_identifier_run(piece))
            run.clear()

    for ch in source:
        if ch.isalnum() or ch == "_":
            run.append(ch)
        else:
            flush()
            if not ch.isspace():
                tokens.append(ch.lower())
    flush()
    return TokenSequence(tokens)


def tokenize_query(text: str) -> TokenSequence:
    """Tokenize a natural-language query: lowercase words, punctuation dropped."""
    tokens: list[str] = []
    run: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            run.append(ch)
        else:
            if run:
                tokens.append("".join(run))
                run.clear()
    if run:
        tokens.append("".join(run))
    return TokenSequence(tokens)


@dataclass
class LoadStats:
    total_lines: int = 0
    kept: int = 0
    dropped_short_doc: int = 0
    dropped_empty_code: int = 0


def load_pairs_with_stats(path: str | Path) -> tuple[list[CodeDocPair], LoadStats]:
    """Load a JSON-lines corpus, dropping records whose docstring is too short."""
    stats = LoadStats()
    pairs: list[CodeDocPair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            stats.total_lines += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed JSON on line {lineno}: {exc}") from exc
            try:
                code, doc, lang = rec["code"], rec["docstring"], rec["lang"]
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"missing field on line {lineno}: {exc}") from exc
            if not code:
                stats.dropped_empty_code += 1
                continue
            if len(tokenize_query(doc)) <= MIN_DOC_TOKENS:
                stats.dropped_short_doc += 1
                continue
            pairs.append(CodeDocPair(str(rec.get("id", lineno - 1)), code, doc, lang))
            stats.kept += 1
    return pairs, stats


def load_pairs(path: str | Path) -> list[CodeDocPair]:
    return load_pairs_with_stats(path)[0]


def build_vocab(pairs: list[CodeDocPair], min_count: int = 1) -> tuple[Vocab, Vocab]:
    """Build (code vocab, query vocab). Indices by frequency desc, token asc."""
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    if not pairs:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    code_counts: Counter[str] = Counter()
    query_counts: Counter[str] = Counter()
    for p in pairs:
        code_counts.update(tokenize_code(p.code).tokens)
        query_counts.update(tokenize_query(p.docstring).tokens)

    def ordered(counts: Counter[str]) -> list[str]:
        kept = [t for t, c in counts.items() if c >= min_count]
        kept.sort(key=lambda t: (-counts[t], t))
        return kept

    return Vocab(ordered(code_counts), min_count), Vocab(ordered(query_counts), min_count)


def pad_or_truncate(seq: TokenSequence, target_len: int) -> TokenSequence:
    """Force a sequence to an exact length: prefix truncation, <pad> suffix."""
    if target_len < 1:
        raise CorpusError("target_len must be >= 1")
    n = len(seq)
    if n >= target_len:
        ids = seq.ids[:target_len] if seq.ids is not None else None
        return TokenSequence(seq.tokens[:target_len], ids, seq.mask[:target_len])
    pad_n = target_len - n
    tokens = seq.tokens + [PAD_TOKEN] * pad_n
    ids = (seq.ids + [PAD_ID] * pad_n) if seq.ids is not None else None
    mask = seq.mask + [False] * pad_n
    return TokenSequence(tokens, ids, mask)
