"""DNS sequences and the feature vectors of the four fingerprinting attacks."""
from __future__ import annotations

import csv
import enum
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from itertools import repeat
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import EmptySequence, EmptyTraining, VocabularyMismatch, ZeroGap
from .trace import C2R, Trace


class Attack(enum.Enum):
    FREQ = "freq"
    NGRAMS = "ngrams"
    BNR = "bnr"
    SEGRAM = "segram"


# -- tokens -------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Msg:
    size: int

    def __repr__(self) -> str:
        return f"Msg({self.size})"


@dataclass(frozen=True, slots=True)
class Gap:
    bin: int

    def __repr__(self) -> str:
        return f"Gap({self.bin})"


Token = Union[Msg, Gap]


def token_code(tok: Token) -> int:
    """Injective integer code: messages even, gaps odd."""
    if isinstance(tok, Msg):
        return 2 * tok.size
    return 2 * tok.bin + 1


def decode_token(code: int) -> Token:
    code = int(code)
    if code & 1:
        return Gap((code - 1) // 2)
    return Msg(code // 2)


@dataclass(frozen=True)
class DnsSequence:
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def codes(self) -> np.ndarray:
        return np.fromiter((token_code(t) for t in self.tokens), dtype=np.int64, count=len(self.tokens))

    @classmethod
    def of(cls, *tokens: Token) -> "DnsSequence":
        return cls(tuple(tokens))


class GapKind(enum.Enum):
    SEGRAM = "segram"
    BNR = "bnr"


@dataclass(frozen=True)
class GapPolicy:
    """Which inter-message gaps enter a DNS sequence.

    Segram keeps a gap iff floor(log2(1 + t)) >= threshold_bin; B&R keeps every
    gap with t > 0. Kept gaps are encoded as floor(log2 t) in both cases.
    """

    kind: GapKind
    threshold_bin: int = 5

    def __post_init__(self):
        if self.threshold_bin < 0:
            raise ValueError("threshold_bin must be >= 0")

    def includes(self, t_ms: int) -> bool:
        if self.kind is GapKind.BNR:
            return t_ms > 0
        return (t_ms + 1).bit_length() - 1 >= self.threshold_bin

    @property
    def responses_only(self) -> bool:
        return self.kind is GapKind.BNR


SEGRAM_POLICY = GapPolicy(GapKind.SEGRAM, 5)
BNR_POLICY = GapPolicy(GapKind.BNR)


def gap_bin(t_ms: int) -> int:
    """floor(log2 t_ms) computed exactly on integers."""
    if t_ms < 0:
        raise ValueError("t_ms must be >= 0")
    if t_ms == 0:
        raise ZeroGap("a zero gap has no log2 bin")
    return int(t_ms).bit_length() - 1


def build_dns_sequence(t: Trace, policy: GapPolicy) -> DnsSequence:
    tokens: list[Token] = []
    prev_t = None
    for ev in t.events:
        if policy.responses_only and ev.direction is C2R:
            continue
        if prev_t is not None:
            dt = ev.t_ms - prev_t
            if policy.includes(dt):
                tokens.append(Gap(gap_bin(dt)))
        tokens.append(Msg(ev.signed_size))
        prev_t = ev.t_ms
    if not tokens:
        raise EmptySequence(f"trace {t.trace_id!r} has no messages under {policy.kind.value} policy")
    return DnsSequence(tuple(tokens))


def sequence_codes(t: Trace, policy: GapPolicy) -> list[int]:
    """Integer-coded DNS sequence; same content as build_dns_sequence, no token objects."""
    out: list[int] = []
    prev_t = None
    resp_only = policy.responses_only
    # smallest included gap: t > 0 for B&R, floor(log2(1 + t)) >= threshold for Segram
    min_gap = 1 if policy.kind is GapKind.BNR else (1 << policy.threshold_bin) - 1
    for ev in t.events:
        if resp_only and ev.direction is C2R:
            continue
        if prev_t is not None:
            dt = ev.t_ms - prev_t
            if dt >= min_gap and dt > 0:
                out.append(2 * (dt.bit_length() - 1) + 1)
        out.append(-2 * ev.size_bytes if ev.direction is C2R else 2 * ev.size_bytes)
        prev_t = ev.t_ms
    if not out:
        raise EmptySequence(f"trace {t.trace_id!r} has no messages under {policy.kind.value} policy")
    return out


def burst_transform(sizes: Sequence[int]) -> list[int]:
    """Sum maximal runs of same-sign sizes."""
    out: list[int] = []
    for s in sizes:
        if out and (s > 0) == (out[-1] > 0):
            out[-1] += s
        else:
            out.append(s)
    return out


def ngrams(seq: Sequence, n: int) -> list[tuple]:
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


# -- per-trace raw counts -------------------------------------------------------

def raw_counts(t: Trace, attack: Attack) -> Counter:
    """Feature-key counts of one trace, before alignment to a vocabulary."""
    if attack is Attack.FREQ:
        return Counter(t.signed_sizes())
    if attack is Attack.NGRAMS:
        sizes = t.signed_sizes()
        bursts = burst_transform(sizes)
        c: Counter = Counter(zip(repeat("rec1"), zip(sizes)))
        c.update(zip(repeat("rec2"), zip(sizes, sizes[1:])))
        c.update(zip(repeat("burst1"), zip(bursts)))
        c.update(zip(repeat("burst2"), zip(bursts, bursts[1:])))
        return c
    if attack is Attack.SEGRAM:
        codes = sequence_codes(t, SEGRAM_POLICY)
        c = Counter(zip(repeat(1), zip(codes)))
        c.update(zip(repeat(2), zip(codes, codes[1:])))
        c.update(zip(repeat(3), zip(codes, codes[1:], codes[2:])))
        return c
    raise ValueError(f"{attack} has no feature vector")


# -- vocabulary & vectors ------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    """Training-derived ordered feature keys.

    Keys are plain signed sizes for FREQ, ``(family, gram)`` for NGRAMS with
    family in rec1/rec2/burst1/burst2, and ``(n, gram_of_token_codes)`` for SEGRAM.
    """

    attack: Attack
    keys: tuple
    index: dict = field(repr=False, compare=False)
    vocab_id: str = ""

    @classmethod
    def from_keys(cls, attack: Attack, keys: Iterable) -> "Vocabulary":
        keys = tuple(sorted(set(keys)))
        digest = hashlib.sha1(f"{attack.value}:{keys!r}".encode()).hexdigest()[:16]
        return cls(attack, keys, {k: i for i, k in enumerate(keys)}, digest)

    def __len__(self) -> int:
        return len(self.keys)

    def readable(self, key) -> str:
        if self.attack is Attack.FREQ:
            return str(key)
        if self.attack is Attack.NGRAMS:
            fam, gram = key
            return f"{fam}:{'|'.join(map(str, gram))}"
        n, gram = key
        return " ".join(repr(decode_token(c)) for c in gram)

    def token_gram(self, key) -> tuple[Token, ...]:
        if self.attack is not Attack.SEGRAM:
            raise ValueError("token grams exist only for SEGRAM vocabularies")
        return tuple(decode_token(c) for c in key[1])


def build_vocabulary(train: Iterable[Trace], attack: Attack) -> Vocabulary:
    if attack is Attack.BNR:
        raise ValueError("the B&R attack uses no vocabulary")
    keys: set = set()
    n = 0
    for t in train:
        keys.update(raw_counts(t, attack))
        n += 1
    if n == 0:
        raise EmptyTraining("cannot build a vocabulary from zero traces")
    return Vocabulary.from_keys(attack, keys)


@dataclass(frozen=True)
class FeatureVector:
    vocab_id: str
    counts: dict[int, int]

    def dense(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        for k, v in self.counts.items():
            out[k] = v
        return out


def extract(t: Trace, vocab: Vocabulary) -> FeatureVector:
    """Count the vocabulary's keys in a trace; unseen keys are dropped."""
    idx = vocab.index
    counts = {idx[k]: v for k, v in raw_counts(t, vocab.attack).items() if k in idx}
    return FeatureVector(vocab.vocab_id, dict(sorted(counts.items())))


def extract_matrix(traces: Iterable[Trace], vocab: Vocabulary) -> sp.csr_matrix:
    """CSR count matrix, one row per trace, columns in vocabulary order."""
    idx = vocab.index
    get = idx.get
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    for t in traces:
        for k, v in raw_counts(t, vocab.attack).items():
            j = get(k)
            if j is not None:
                indices.append(j)
                data.append(v)
        indptr.append(len(indices))
    m = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, len(vocab)),
    )
    m.sort_indices()
    return m


def vectors_to_matrix(vectors: Sequence[FeatureVector], n_features: int) -> sp.csr_matrix:
    ids = {v.vocab_id for v in vectors}
    if len(ids) > 1:
        raise VocabularyMismatch("feature vectors come from different vocabularies")
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for v in vectors:
        for k in sorted(v.counts):
            if k >= n_features:
                raise VocabularyMismatch(f"position {k} outside vocabulary of size {n_features}")
            indices.append(k)
            data.append(v.counts[k])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(vectors), n_features),
    )


def export_csv(matrix: sp.spmatrix, vocab: Vocabulary, path, labels: Sequence[str] | None = None) -> None:
    dense = matrix.toarray()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = [vocab.readable(k) for k in vocab.keys]
        w.writerow((["label"] if labels is not None else []) + header)
        for i, row in enumerate(dense):
            vals = [int(x) for x in row]
            w.writerow(([labels[i]] if labels is not None else []) + vals)
