"""Random forest over sparse non-negative count features.

Trees are grown greedily on Gini impurity with bootstrap resampling and
per-node feature subsampling. Every random draw is reproducible:

* tree ``i`` gets the ``i``-th child of ``numpy.random.SeedSequence(seed)``;
  its bootstrap comes from ``default_rng`` on that child,
* node ``k`` of a tree draws candidate features from a counter-based
  splitmix64 stream keyed by (tree key, k), so the numba and numpy builders
  pick identical features and produce identical trees.

Only features that vary inside a node are eligible for sampling; they are
indexed in order of first occurrence when scanning the node's rows.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _accel
from ._accel import njit
from .errors import DegenerateTraining, VocabularyMismatch
from .features import FeatureVector, vectors_to_matrix

MODEL_FORMAT = "dnsfp-forest"
MODEL_VERSION = 1

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_ONE = np.uint64(1)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: int | None = None  # None -> floor(sqrt(n_features))
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is not None:
            return max(1, min(self.max_features, n_features))
        return max(1, math.isqrt(n_features))


# -- counter-based RNG (shared by both builders) ------------------------------

def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _node_key_np(tree_key: np.uint64, node_id: int) -> np.uint64:
    with np.errstate(over="ignore"):
        z = np.array([tree_key], dtype=np.uint64) + np.uint64(node_id + 1) * _GAMMA
        return _mix_np(z)[0]


def _draw_np(node_key: np.uint64, start: int, count: int) -> np.ndarray:
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix_np(np.uint64(node_key) + k * _GAMMA)


@njit(cache=True, nogil=True)
def _mix_nb(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


# -- numba tree builder ----------------------------------------------------------

@njit(cache=True, nogil=True)
def _build_tree_nb(indptr, indices, data, cptr, crow, cval, y, weights, n_classes, n_features, m_try,
                   max_depth, min_leaf, tree_key):
    gamma = np.uint64(0x9E3779B97F4A7C15)
    n = y.shape[0]
    rows = np.empty(n, np.int64)
    nr = 0
    for r in range(n):
        if weights[r] > 0:
            rows[nr] = r
            nr += 1
    cap = 2 * nr + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes), np.int64)

    # scratch
    first_val = np.zeros(n_features, np.float64)
    fcnt = np.zeros(n_features, np.int64)
    fvar = np.zeros(n_features, np.bool_)
    row_in = np.zeros(n, np.bool_)
    touched = np.empty(n_features, np.int64)
    go_right = np.zeros(n, np.bool_)
    tmp_rows = np.empty(n, np.int64)
    total = np.zeros(n_classes, np.int64)
    delta = np.zeros(n_classes, np.int64)
    seen_c = np.zeros(n_classes, np.bool_)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp_ = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = nr
    st_depth[0] = 0
    sp_ = 1
    n_nodes = 1

    while sp_ > 0:
        sp_ -= 1
        node = st_node[sp_]
        start = st_start[sp_]
        end = st_end[sp_]
        depth = st_depth[sp_]
        nrows = end - start

        for c in range(n_classes):
            total[c] = 0
        W = 0
        for p in range(start, end):
            r = rows[p]
            total[y[r]] += weights[r]
            W += weights[r]
        nonzero_classes = 0
        for c in range(n_classes):
            value[node, c] = total[c]
            if total[c] > 0:
                nonzero_classes += 1
        if nonzero_classes <= 1 or (max_depth >= 0 and depth >= max_depth) or W < 2 * min_leaf:
            continue

        # features that vary inside the node
        nt = 0
        for p in range(start, end):
            r = rows[p]
            for e in range(indptr[r], indptr[r + 1]):
                f = indices[e]
                v = data[e]
                if fcnt[f] == 0:
                    touched[nt] = f
                    nt += 1
                    first_val[f] = v
                elif v != first_val[f]:
                    fvar[f] = True
                fcnt[f] += 1
        nv = 0
        varying = np.empty(nt, np.int64)
        for q in range(nt):
            f = touched[q]
            if fvar[f] or fcnt[f] < nrows:
                varying[nv] = f
                nv += 1
            fcnt[f] = 0
            fvar[f] = False
        if nv == 0:
            continue
        varying = varying[:nv]  # first-occurrence order in the node's row scan

        # draw distinct candidates from the node's stream
        m = m_try if m_try < nv else nv
        chosen = np.zeros(nv, np.bool_)
        sel = np.empty(m, np.int64)
        z = tree_key + np.uint64(node + 1) * gamma
        node_key = _mix_nb(z)
        k = np.uint64(0)
        got = 0
        while got < m:
            k += np.uint64(1)
            idx = np.int64(_mix_nb(node_key + k * gamma) % np.uint64(nv))
            if not chosen[idx]:
                chosen[idx] = True
                sel[got] = varying[idx]
                got += 1
        # bucket node entries by slot, scanning the selected columns
        for p in range(start, end):
            row_in[rows[p]] = True
        scount = np.zeros(m + 1, np.int64)
        for s in range(m):
            f = sel[s]
            c = 0
            for e in range(cptr[f], cptr[f + 1]):
                if row_in[crow[e]]:
                    c += 1
            scount[s + 1] = scount[s] + c
        ne = scount[m]
        ent_row = np.empty(ne, np.int64)
        ent_val = np.empty(ne, np.float64)
        q = 0
        for s in range(m):
            f = sel[s]
            for e in range(cptr[f], cptr[f + 1]):
                r = crow[e]
                if row_in[r]:
                    ent_row[q] = r
                    ent_val[q] = cval[e]
                    q += 1
        for p in range(start, end):
            row_in[rows[p]] = False

        tot2 = 0
        for c in range(n_classes):
            tot2 += total[c] * total[c]

        best = -np.inf
        best_slot = -1
        best_thr = 0.0
        for s in range(m):
            a = scount[s]
            b = scount[s + 1]
            vals = ent_val[a:b]
            order = np.argsort(vals)
            # delta[c] = (class-c weight already moved left) - (class-c weight on
            # nonzero rows), so the left count of class c is total[c] + delta[c]
            nz_w = 0
            for q in range(a, b):
                r = ent_row[q]
                delta[y[r]] -= weights[r]
                nz_w += weights[r]
            A = 0
            B = 0
            for q in range(a, b):
                c = y[ent_row[q]]
                if not seen_c[c]:
                    seen_c[c] = True
                    A += total[c] * (-delta[c])
                    B += delta[c] * delta[c]
            for q in range(a, b):
                seen_c[y[ent_row[q]]] = False
            # left side starts as the zero-valued rows
            SL = tot2 - 2 * A + B
            cross = tot2 - A
            nL = W - nz_w
            cnt = b - a
            if nL > 0:
                nR = W - nL
                if nL >= min_leaf and nR >= min_leaf:
                    SR = tot2 - 2 * cross + SL
                    score = SL / nL + SR / nR
                    if score > best:
                        best = score
                        best_slot = s
                        best_thr = vals[order[0]] / 2.0
            for q in range(cnt):
                e = a + order[q]
                r = ent_row[e]
                w = weights[r]
                yc = y[r]
                SL += 2 * w * (total[yc] + delta[yc]) + w * w
                cross += w * total[yc]
                delta[yc] += w
                nL += w
                if q + 1 < cnt:
                    v0 = vals[order[q]]
                    v1 = vals[order[q + 1]]
                    if v1 != v0:
                        nR = W - nL
                        if nL >= min_leaf and nR >= min_leaf:
                            SR = tot2 - 2 * cross + SL
                            score = SL / nL + SR / nR
                            if score > best:
                                best = score
                                best_slot = s
                                best_thr = (v0 + v1) / 2.0
            for q in range(a, b):
                delta[y[ent_row[q]]] = 0
        if best_slot < 0:
            continue

        a = scount[best_slot]
        b = scount[best_slot + 1]
        for q in range(a, b):
            if ent_val[q] > best_thr:
                go_right[ent_row[q]] = True
        nl = 0
        for p in range(start, end):
            r = rows[p]
            if not go_right[r]:
                tmp_rows[nl] = r
                nl += 1
        nrr = nl
        for p in range(start, end):
            r = rows[p]
            if go_right[r]:
                tmp_rows[nrr] = r
                nrr += 1
                go_right[r] = False
        for p in range(nrows):
            rows[start + p] = tmp_rows[p]

        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        feat[node] = sel[best_slot]
        thr[node] = best_thr
        left[node] = li
        right[node] = ri
        st_node[sp_] = ri
        st_start[sp_] = start + nl
        st_end[sp_] = end
        st_depth[sp_] = depth + 1
        sp_ += 1
        st_node[sp_] = li
        st_start[sp_] = start
        st_end[sp_] = start + nl
        st_depth[sp_] = depth + 1
        sp_ += 1

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


# -- numpy tree builder ------------------------------------------------------------

def _gather(X: sp.csr_matrix, rows: np.ndarray):
    starts = X.indptr[rows]
    lens = X.indptr[rows + 1] - starts
    total = int(lens.sum())
    if total == 0:
        e = np.zeros(0, np.int64)
        return e, np.zeros(0), e
    offs = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    idx = offs + np.arange(total)
    return X.indices[idx].astype(np.int64), X.data[idx], np.repeat(rows, lens)


def _group_cumsum_exclusive(vals: np.ndarray, groups: np.ndarray) -> np.ndarray:
    """Exclusive running sum of vals within runs of equal consecutive group ids."""
    cs = np.cumsum(vals)
    excl = cs - vals
    if len(vals) == 0:
        return excl
    starts = np.flatnonzero(np.r_[True, groups[1:] != groups[:-1]])
    run_id = np.cumsum(np.r_[True, groups[1:] != groups[:-1]]) - 1
    return excl - excl[starts][run_id]


def _build_tree_np(X: sp.csr_matrix, y, weights, n_classes, m_try, max_depth, min_leaf, tree_key):
    rows0 = np.flatnonzero(weights > 0)
    feat, thr, left, right, value = [], [], [], [], []

    def new_node():
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feat) - 1

    new_node()
    stack = [(0, rows0, 0)]
    while stack:
        node, rows, depth = stack.pop()
        w_rows = weights[rows]
        y_rows = y[rows]
        total = np.bincount(y_rows, weights=w_rows, minlength=n_classes).astype(np.int64)
        value[node] = total
        W = int(total.sum())
        if np.count_nonzero(total) <= 1 or (max_depth >= 0 and depth >= max_depth) or W < 2 * min_leaf:
            continue

        ent_f, ent_v, ent_r = _gather(X, rows)
        if len(ent_f) == 0:
            continue
        uniq, first, inv = np.unique(ent_f, return_index=True, return_inverse=True)
        cnt = np.bincount(inv, minlength=len(uniq))
        vmin = np.full(len(uniq), np.inf)
        vmax = np.full(len(uniq), -np.inf)
        np.minimum.at(vmin, inv, ent_v)
        np.maximum.at(vmax, inv, ent_v)
        keep = (cnt < len(rows)) | (vmax != vmin)
        # same canonical order as the numba builder: first occurrence in the row scan
        varying = uniq[keep][np.argsort(first[keep], kind="stable")]
        nv = len(varying)
        if nv == 0:
            continue

        m = min(m_try, nv)
        node_key = _node_key_np(tree_key, node)
        K = 2 * m + 8
        while True:
            draws = (_draw_np(node_key, 0, K) % np.uint64(nv)).astype(np.int64)
            _, first = np.unique(draws, return_index=True)
            if len(first) >= m:
                break
            K *= 2
        sel = varying[draws[np.sort(first)[:m]]]

        # slot of each entry, -1 when its feature was not selected
        perm = np.argsort(sel)
        ssel = sel[perm]
        pos = np.searchsorted(ssel, ent_f)
        pos_c = np.minimum(pos, m - 1)
        hit = ssel[pos_c] == ent_f
        e_slot = perm[pos_c[hit]]
        e_val = ent_v[hit]
        e_row = ent_r[hit]
        order = np.lexsort((e_val, e_slot))
        e_slot, e_val, e_row = e_slot[order], e_val[order], e_row[order]
        e_w = weights[e_row].astype(np.int64)
        e_y = y[e_row]

        nz = np.zeros((m, n_classes), np.int64)
        np.add.at(nz, (e_slot, e_y), e_w)
        z = total[None, :] - nz
        SL0 = (z * z).sum(axis=1)
        cross0 = (total[None, :] * z).sum(axis=1)
        nL0 = W - nz.sum(axis=1)
        tot2 = int((total * total).sum())

        # class count seen so far within (slot, class), excluding the entry itself
        o2 = np.lexsort((np.arange(len(e_slot)), e_y, e_slot))
        prior = np.empty(len(e_slot), np.int64)
        prior[o2] = _group_cumsum_exclusive(e_w[o2], e_slot[o2] * n_classes + e_y[o2])
        dSL = 2 * e_w * (z[e_slot, e_y] + prior) + e_w * e_w
        dcross = e_w * total[e_y]
        SL = SL0[e_slot] + _group_cumsum_exclusive(dSL, e_slot) + dSL
        cross = cross0[e_slot] + _group_cumsum_exclusive(dcross, e_slot) + dcross
        nL = nL0[e_slot] + _group_cumsum_exclusive(e_w, e_slot) + e_w

        same_next = np.r_[e_slot[1:] == e_slot[:-1], False]
        nxt_val = np.r_[e_val[1:], 0.0]
        is_b = same_next & (nxt_val != e_val)
        first_of_slot = np.flatnonzero(np.r_[True, e_slot[1:] != e_slot[:-1]])

        # candidate table: zero boundaries then value boundaries, ordered (slot, kind, position)
        zs = e_slot[first_of_slot]
        z_nL = nL0[zs]
        z_SL = SL0[zs]
        z_cross = cross0[zs]
        z_thr = e_val[first_of_slot] / 2.0
        z_ok = z_nL > 0
        bi = np.flatnonzero(is_b)
        c_slot = np.r_[zs[z_ok], e_slot[bi]]
        c_kind = np.r_[np.zeros(z_ok.sum(), np.int64), np.ones(len(bi), np.int64)]
        c_pos = np.r_[first_of_slot[z_ok], bi]
        c_nL = np.r_[z_nL[z_ok], nL[bi]]
        c_SL = np.r_[z_SL[z_ok], SL[bi]]
        c_cross = np.r_[z_cross[z_ok], cross[bi]]
        c_thr = np.r_[z_thr[z_ok], (e_val[bi] + nxt_val[bi]) / 2.0]
        if len(c_slot) == 0:
            continue
        c_nR = W - c_nL
        ok = (c_nL >= min_leaf) & (c_nR >= min_leaf)
        if not ok.any():
            continue
        c_SR = tot2 - 2 * c_cross + c_SL
        with np.errstate(divide="ignore", invalid="ignore"):
            score = c_SL / c_nL + c_SR / c_nR
        score = np.where(ok, score, -np.inf)
        co = np.lexsort((c_pos, c_kind, c_slot))
        best = co[int(np.argmax(score[co]))]
        bslot = int(c_slot[best])
        bthr = float(c_thr[best])
        f = int(sel[bslot])

        right_rows = np.unique(e_row[(e_slot == bslot) & (e_val > bthr)])
        go_right = np.isin(rows, right_rows)
        li = new_node()
        ri = new_node()
        feat[node] = f
        thr[node] = bthr
        left[node] = li
        right[node] = ri
        stack.append((ri, rows[go_right], depth + 1))
        stack.append((li, rows[~go_right], depth + 1))

    return (np.asarray(feat, np.int64), np.asarray(thr, np.float64), np.asarray(left, np.int64),
            np.asarray(right, np.int64), np.vstack(value).astype(np.int64))


# -- prediction ----------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _predict_nb(indptr, indices, data, n_features, roots, feat, thr, left, right, leafp, out):
    dense = np.zeros(n_features, np.float64)
    n_trees = roots.shape[0]
    n_classes = leafp.shape[1]
    for q in range(indptr.shape[0] - 1):
        for e in range(indptr[q], indptr[q + 1]):
            dense[indices[e]] = data[e]
        for t in range(n_trees):
            node = roots[t]
            while left[node] >= 0:
                if dense[feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            for c in range(n_classes):
                out[q, c] += leafp[node, c]
        for c in range(n_classes):
            out[q, c] = out[q, c] / n_trees
        for e in range(indptr[q], indptr[q + 1]):
            dense[indices[e]] = 0.0


def _predict_np(X: sp.csr_matrix, roots, feat, thr, left, right, leafp, out, chunk=256):
    for s in range(0, X.shape[0], chunk):
        dense = X[s:s + chunk].toarray()
        idx = np.arange(dense.shape[0])
        acc = out[s:s + chunk]
        for t in range(len(roots)):
            node = np.full(dense.shape[0], roots[t], np.int64)
            active = left[node] >= 0
            while active.any():
                nd = node[active]
                go_left = dense[idx[active], feat[nd]] <= thr[nd]
                node[active] = np.where(go_left, left[nd], right[nd])
                active = left[node] >= 0
            acc += leafp[node]
        acc /= len(roots)


# -- model -------------------------------------------------------------------------

@dataclass
class ForestModel:
    classes: tuple[str, ...]
    n_features: int
    vocab_id: str
    params: ForestParams
    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # class-count histogram per node (bootstrap-weighted)
    leaf_proba: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.leaf_proba = np.where(sums > 0, self.counts / np.maximum(sums, 1), 0.0)

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def _as_matrix(self, X) -> sp.csr_matrix:
        if isinstance(X, FeatureVector):
            X = [X]
        if isinstance(X, (list, tuple)):
            for v in X:
                if self.vocab_id and v.vocab_id != self.vocab_id:
                    raise VocabularyMismatch("feature vector vocabulary differs from the model's")
            X = vectors_to_matrix(X, self.n_features)
        X = sp.csr_matrix(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise VocabularyMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        X.sort_indices()
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Mean of per-tree normalized leaf histograms, shape (n, n_classes)."""
        X = self._as_matrix(X)
        out = np.zeros((X.shape[0], len(self.classes)), np.float64)
        if _accel.use_numba():
            _predict_nb(X.indptr.astype(np.int64), X.indices.astype(np.int64), X.data, self.n_features,
                        self.roots, self.feature, self.threshold, self.left, self.right,
                        self.leaf_proba, out)
        else:
            _predict_np(X, self.roots, self.feature, self.threshold, self.left, self.right,
                        self.leaf_proba, out)
        return out

    def predict(self, X) -> list[str]:
        proba = self.predict_proba(X)
        return [self.classes[i] for i in np.argmax(proba, axis=1)]

    # -- serialization
    def save(self, path: str | Path) -> None:
        meta = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "n_features": self.n_features,
            "vocab_id": self.vocab_id,
            "params": asdict(self.params),
        }
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), roots=self.roots, feature=self.feature,
                     threshold=self.threshold, left=self.left, right=self.right, counts=self.counts)

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != MODEL_FORMAT or meta.get("version") != MODEL_VERSION:
                raise ValueError(f"unsupported model container {meta.get('format')} v{meta.get('version')}")
            return cls(tuple(meta["classes"]), meta["n_features"], meta["vocab_id"],
                       ForestParams(**meta["params"]), z["roots"], z["feature"], z["threshold"],
                       z["left"], z["right"], z["counts"])


def tree_keys(seed: int, n_trees: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF).spawn(n_trees)


def _grow_one(X: sp.csr_matrix, y: np.ndarray, n_classes: int, m_try: int, max_depth: int,
              min_leaf: int, ss: np.random.SeedSequence, Xc: sp.csc_matrix | None = None):
    n = X.shape[0]
    rng = np.random.default_rng(ss)
    weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.int64)
    key = np.uint64(ss.generate_state(1, np.uint64)[0])
    if _accel.use_numba():
        C = Xc if Xc is not None else X.tocsc()
        return _build_tree_nb(X.indptr.astype(np.int64), X.indices.astype(np.int64), X.data,
                              C.indptr.astype(np.int64), C.indices.astype(np.int64), C.data, y, weights,
                              n_classes, X.shape[1], m_try, max_depth, min_leaf, key)
    return _build_tree_np(X, y, weights, n_classes, m_try, max_depth, min_leaf, key)


def train_forest(X, y: Sequence[str], params: ForestParams = ForestParams(),
                 vocab_id: str = "", threads: int | None = None) -> ForestModel:
    """Fit a forest. ``X`` is a CSR matrix or a list of FeatureVector.

    Output is a pure function of (X, y, params); ``threads`` only changes speed.
    """
    if isinstance(X, (list, tuple)):
        if not X:
            raise DegenerateTraining("empty training set")
        ids = {v.vocab_id for v in X}
        if len(ids) > 1:
            raise VocabularyMismatch("training vectors come from different vocabularies")
        vocab_id = vocab_id or next(iter(ids))
        n_feat = 1 + max((max(v.counts) for v in X if v.counts), default=-1)
        X = vectors_to_matrix(X, n_feat)
    X = sp.csr_matrix(X, dtype=np.float64)
    X.sort_indices()
    if X.shape[0] == 0 or X.shape[0] != len(y):
        raise DegenerateTraining("X and y must be non-empty and of equal length")
    if X.nnz and X.data.min() < 0:
        raise ValueError("features must be non-negative counts")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise DegenerateTraining("need at least two distinct labels")
    cidx = {c: i for i, c in enumerate(classes)}
    yi = np.asarray([cidx[v] for v in y], dtype=np.int64)
    m_try = params.features_per_split(max(X.shape[1], 1))
    max_depth = -1 if params.max_depth is None else params.max_depth
    keys = tree_keys(params.seed, params.n_trees)
    threads = threads or _accel.get_threads()

    Xc = X.tocsc() if _accel.use_numba() else None
    if Xc is not None:
        Xc.sort_indices()

    def grow(ss):
        return _grow_one(X, yi, len(classes), m_try, max_depth, params.min_samples_leaf, ss, Xc)

    if threads > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, keys))
    else:
        trees = [grow(ss) for ss in keys]

    roots, feats, thrs, lefts, rights, counts = [], [], [], [], [], []
    off = 0
    for f, t, l, r, v in trees:
        roots.append(off)
        feats.append(f)
        thrs.append(t)
        lefts.append(np.where(l >= 0, l + off, -1))
        rights.append(np.where(r >= 0, r + off, -1))
        counts.append(v)
        off += len(f)
    return ForestModel(classes, X.shape[1], vocab_id, params, np.asarray(roots, np.int64),
                       np.concatenate(feats), np.concatenate(thrs), np.concatenate(lefts),
                       np.concatenate(rights), np.concatenate(counts))
