"""Restricted Damerau-Levenshtein (optimal string alignment) distance with
per-operation costs, over integer-coded DNS sequences.

Costs are rationals. They are scaled to integers by their common denominator
so every distance is computed exactly in int64 and kNN ties are stable.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _accel
from ._accel import njit, prange
from .features import DnsSequence, token_code


def _frac(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class CostSchedule:
    c_ins: Fraction = Fraction(1)
    c_del: Fraction = Fraction(1)
    c_sub: Fraction = Fraction(1)
    c_trans: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("c_ins", "c_del", "c_sub", "c_trans"):
            v = _frac(getattr(self, name))
            if v < 0:
                raise ValueError(f"{name} must be >= 0")
            object.__setattr__(self, name, v)
        if self.c_trans > self.c_ins + self.c_del:
            warnings.warn("c_trans exceeds c_ins + c_del; transpositions will never be used",
                          stacklevel=3)

    @classmethod
    def parse(cls, text: str) -> "CostSchedule":
        """Parse ``"ins,del,sub,trans"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("cost schedule needs four comma-separated values")
        return cls(*(Fraction(p) for p in parts))

    def scaled(self) -> tuple[int, tuple[int, int, int, int]]:
        """(scale, (ins, del, sub, trans)) with every cost * scale an integer."""
        vals = (self.c_ins, self.c_del, self.c_sub, self.c_trans)
        scale = 1
        for v in vals:
            scale = scale * v.denominator // math.gcd(scale, v.denominator)
        return scale, tuple(int(v * scale) for v in vals)

    def as_tuple(self) -> tuple[str, str, str, str]:
        return tuple(str(v) for v in (self.c_ins, self.c_del, self.c_sub, self.c_trans))


UNIT_COSTS = CostSchedule()


def as_codes(seq) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        return seq.astype(np.int64, copy=False)
    if isinstance(seq, DnsSequence):
        return seq.codes()
    seq = list(seq)
    if seq and not isinstance(seq[0], (int, np.integer)):
        return np.asarray([token_code(t) for t in seq], dtype=np.int64)
    return np.asarray(seq, dtype=np.int64)


def pack(seqs: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Flatten sequences into (codes, offsets) with offsets of length n + 1."""
    arrays = [as_codes(s) for s in seqs]
    offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
    if arrays:
        offsets[1:] = np.cumsum([len(a) for a in arrays])
        flat = np.concatenate(arrays) if offsets[-1] else np.zeros(0, dtype=np.int64)
    else:
        flat = np.zeros(0, dtype=np.int64)
    return flat.astype(np.int64), offsets


# -- numba kernels ---------------------------------------------------------------

@njit(cache=True, nogil=True)
def _osa_nb(a, b, ins, dele, sub, trans, r0, r1, r2):
    n = a.shape[0]
    m = b.shape[0]
    # r0: row i-2, r1: row i-1, r2: row i
    for j in range(m + 1):
        r1[j] = j * ins
    for i in range(1, n + 1):
        ai = a[i - 1]
        r2[0] = i * dele
        for j in range(1, m + 1):
            bj = b[j - 1]
            best = r1[j] + dele
            v = r2[j - 1] + ins
            if v < best:
                best = v
            v = r1[j - 1] + (0 if ai == bj else sub)
            if v < best:
                best = v
            if i > 1 and j > 1 and ai == b[j - 2] and a[i - 2] == bj:
                v = r0[j - 2] + trans
                if v < best:
                    best = v
            r2[j] = best
        tmp = r0
        r0 = r1
        r1 = r2
        r2 = tmp
    return r1[m]


@njit(cache=True, nogil=True)
def _matrix_seq_nb(qf, qo, rf, ro, ins, dele, sub, trans, out):
    maxlen = 0
    for j in range(ro.shape[0] - 1):
        L = ro[j + 1] - ro[j]
        if L > maxlen:
            maxlen = L
    r0 = np.empty(maxlen + 1, np.int64)
    r1 = np.empty(maxlen + 1, np.int64)
    r2 = np.empty(maxlen + 1, np.int64)
    for i in range(qo.shape[0] - 1):
        a = qf[qo[i]:qo[i + 1]]
        for j in range(ro.shape[0] - 1):
            out[i, j] = _osa_nb(a, rf[ro[j]:ro[j + 1]], ins, dele, sub, trans, r0, r1, r2)


@njit(cache=True, parallel=True)
def _matrix_par_nb(qf, qo, rf, ro, ins, dele, sub, trans, out):
    maxlen = 0
    for j in range(ro.shape[0] - 1):
        L = ro[j + 1] - ro[j]
        if L > maxlen:
            maxlen = L
    for i in prange(qo.shape[0] - 1):
        r0 = np.empty(maxlen + 1, np.int64)
        r1 = np.empty(maxlen + 1, np.int64)
        r2 = np.empty(maxlen + 1, np.int64)
        a = qf[qo[i]:qo[i + 1]]
        for j in range(ro.shape[0] - 1):
            out[i, j] = _osa_nb(a, rf[ro[j]:ro[j + 1]], ins, dele, sub, trans, r0, r1, r2)


# -- numpy fallback ---------------------------------------------------------------

_PAD = np.iinfo(np.int64).min


def _osa_batch_np(a: np.ndarray, refs: np.ndarray, lens: np.ndarray, ins, dele, sub, trans) -> np.ndarray:
    """Distances from one sequence to every row of a padded ref matrix."""
    R, L = refs.shape
    n = a.shape[0]
    steps = np.arange(L + 1, dtype=np.int64) * ins
    r1 = np.broadcast_to(steps, (R, L + 1)).copy()
    r0 = np.zeros_like(r1)
    for i in range(1, n + 1):
        ai = a[i - 1]
        cand = np.empty_like(r1)
        cand[:, 0] = i * dele
        np.minimum(r1[:, 1:] + dele, r1[:, :-1] + np.where(refs == ai, 0, sub), out=cand[:, 1:])
        if i > 1 and L > 1:
            swap = (refs[:, :-1] == ai) & (refs[:, 1:] == a[i - 2])
            cand[:, 2:] = np.where(swap, np.minimum(cand[:, 2:], r0[:, :-2] + trans), cand[:, 2:])
        # insertion chain along the row is a running minimum
        r2 = np.minimum.accumulate(cand - steps, axis=1) + steps
        r0, r1 = r1, r2
    return r1[np.arange(R), lens]


def _matrix_np(queries: list[np.ndarray], refs: list[np.ndarray], costs: tuple) -> np.ndarray:
    out = np.zeros((len(queries), len(refs)), dtype=np.int64)
    if not refs or not queries:
        return out
    lens = np.asarray([len(r) for r in refs], dtype=np.int64)
    L = int(lens.max())
    padded = np.full((len(refs), max(L, 1)), _PAD, dtype=np.int64)
    for j, r in enumerate(refs):
        padded[j, :len(r)] = r
    if L == 0:
        padded = padded[:, :0]
    for i, q in enumerate(queries):
        out[i] = _osa_batch_np(q, padded, lens, *costs)
    return out


# -- public API --------------------------------------------------------------------

def dl_distance_scaled(a, b, costs: CostSchedule = UNIT_COSTS) -> tuple[int, int]:
    """Distance as (integer numerator, scale)."""
    scale, c = costs.scaled()
    a = as_codes(a)
    b = as_codes(b)
    if _accel.use_numba():
        buf = [np.empty(len(b) + 1, np.int64) for _ in range(3)]
        return int(_osa_nb(a, b, *c, *buf)), scale
    return int(_matrix_np([a], [b], c)[0, 0]), scale


def dl_distance(a, b, costs: CostSchedule = UNIT_COSTS) -> float:
    """Minimal cost of insert/delete/substitute/adjacent-transpose edits from a to b."""
    num, scale = dl_distance_scaled(a, b, costs)
    return num / scale


def dl_distance_matrix_scaled(queries: Sequence, refs: Sequence, costs: CostSchedule = UNIT_COSTS,
                              parallel: bool | None = None) -> tuple[np.ndarray, int]:
    """Integer distance matrix (queries x refs) and the cost scale."""
    scale, c = costs.scaled()
    if _accel.use_numba():
        qf, qo = pack(queries)
        rf, ro = pack(refs)
        out = np.zeros((len(qo) - 1, len(ro) - 1), dtype=np.int64)
        if parallel is None:
            parallel = _accel.get_threads() > 1
        kernel = _matrix_par_nb if parallel else _matrix_seq_nb
        kernel(qf, qo, rf, ro, *c, out)
        return out, scale
    return _matrix_np([as_codes(q) for q in queries], [as_codes(r) for r in refs], c), scale


def dl_distance_matrix(queries: Sequence, refs: Sequence, costs: CostSchedule = UNIT_COSTS,
                       parallel: bool | None = None) -> np.ndarray:
    m, scale = dl_distance_matrix_scaled(queries, refs, costs, parallel)
    return m / scale
