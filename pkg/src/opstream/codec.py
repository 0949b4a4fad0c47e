"""Opcode trace parsing and frequency-ranked symbol encoding.

Traces arrive as plain text: whitespace-delimited instruction mnemonics, with
``#``-prefixed lines treated as comments. The encoder ranks mnemonics by
corpus frequency and assigns the ``top_k`` most frequent ones the symbol
indices ``0..top_k-1``; every other mnemonic maps to the single catch-all
index ``top_k``. The default alphabet is 26 ranked symbols plus the
catch-all, 27 in total, shared by every model trained on the corpus.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptyCorpusError, ParseError

DEFAULT_TOP_K = 26
DEFAULT_ALPHABET_SIZE = DEFAULT_TOP_K + 1

# Fixed vocabulary used when synthetic symbol streams are written back out as
# mnemonic traces; index i maps to MNEMONIC_VOCAB[i].
MNEMONIC_VOCAB = (
    "MOV", "PUSH", "POP", "ADD", "SUB", "CALL", "RET", "JMP", "CMP",
    "TEST", "XOR", "AND", "OR", "LEA", "INC", "DEC", "NOP", "SHL",
    "SHR", "IMUL", "DIV", "JZ", "JNZ", "JE", "JNE", "INT", "XCHG",
)


@dataclass(frozen=True)
class OpcodeTrace:
    """Ordered mnemonics extracted from one running sample."""

    opcodes: tuple[str, ...]
    source_id: str = ""


@dataclass
class ObservationSequence:
    """Encoded symbol sequence, optionally carrying its ground-truth label."""

    symbols: np.ndarray
    label: str | None = None
    source_id: str = ""

    def __post_init__(self) -> None:
        self.symbols = np.asarray(self.symbols, dtype=np.int32)
        if self.symbols.ndim != 1:
            raise ValueError("symbols must be one-dimensional")

    def __len__(self) -> int:
        return int(self.symbols.shape[0])


@dataclass(frozen=True)
class EncodingTable:
    """Frequency ranking of mnemonics onto the fixed symbol alphabet.

    ``rank_of`` holds the top-``top_k`` mnemonics; ranks are assigned by
    descending corpus count with lexicographic tie-break. The catch-all
    index is ``top_k`` regardless of how many mnemonics were ranked, so the
    alphabet size is stable across corpora.
    """

    rank_of: dict[str, int]
    corpus_counts: dict[str, int]
    top_k: int = DEFAULT_TOP_K
    version: int = 1

    @property
    def catch_all(self) -> int:
        return self.top_k

    @property
    def alphabet_size(self) -> int:
        return self.top_k + 1

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "top_k": self.top_k,
            "rank_of": dict(self.rank_of),
            "corpus_counts": dict(self.corpus_counts),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EncodingTable":
        return cls(
            rank_of={str(k): int(v) for k, v in doc["rank_of"].items()},
            corpus_counts={str(k): int(v) for k, v in doc["corpus_counts"].items()},
            top_k=int(doc["top_k"]),
            version=int(doc["version"]),
        )


def parse_trace(text: str | bytes, source_id: str = "") -> OpcodeTrace:
    """Parse a raw trace document into an uppercased mnemonic sequence.

    Tokens are whitespace-delimited; lines starting with ``#`` are skipped.
    Byte input must be valid UTF-8.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"trace {source_id!r} is not valid UTF-8: {exc}") from exc
    opcodes: list[str] = []
    for line in text.splitlines():
        if line.lstrip().startswith("#"):
            continue
        opcodes.extend(tok.upper() for tok in line.split())
    return OpcodeTrace(opcodes=tuple(opcodes), source_id=source_id)


def build_alphabet(traces: Iterable[OpcodeTrace], top_k: int = DEFAULT_TOP_K) -> EncodingTable:
    """Rank mnemonics by corpus frequency and freeze the encoding table.

    The ``top_k`` most frequent mnemonics get ranks ``0..top_k-1`` (count
    descending, ties broken lexicographically ascending); everything else
    will encode to the catch-all index.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    counts: Counter[str] = Counter()
    for trace in traces:
        counts.update(trace.opcodes)
    if not counts:
        raise EmptyCorpusError("cannot build an alphabet from an empty corpus")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    rank_of = {mnemonic: rank for rank, (mnemonic, _) in enumerate(ordered[:top_k])}
    return EncodingTable(rank_of=rank_of, corpus_counts=dict(counts), top_k=top_k)


def encode_trace(trace: OpcodeTrace, table: EncodingTable) -> ObservationSequence:
    """Map each mnemonic to its rank index, or the catch-all if unranked."""
    catch_all = table.catch_all
    rank_of = table.rank_of
    symbols = np.fromiter(
        (rank_of.get(op, catch_all) for op in trace.opcodes),
        dtype=np.int32,
        count=len(trace.opcodes),
    )
    return ObservationSequence(symbols=symbols, source_id=trace.source_id)
