"""Exterior algebra on compressed antisymmetric arrays.

A k-form in dimension n is an array whose last axis has length C(n, k),
indexed by strictly increasing index tuples in lexicographic order. All
leading axes are batch axes (grid points, samples). Components carry lower
indices. Vectors are plain arrays of contravariant components.

Every operation here is dimension generic; the G2 module uses n = 7 and
the SU(3) module uses n = 6.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


def perm_sign(seq):
    """Sign of the permutation sorting ``seq`` (0 if an entry repeats)."""
    seq = list(seq)
    if len(set(seq)) < len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def basis(n, k):
    return tuple(itertools.combinations(range(n), k))


@lru_cache(maxsize=None)
def slot(n, k):
    return {I: i for i, I in enumerate(basis(n, k))}


def ncomp(n, k):
    return comb(n, k)


def degree_of(a, n):
    """Guess the degree from the trailing length; ambiguous pairs go low."""
    size = a.shape[-1]
    for k in range(n + 1):
        if comb(n, k) == size:
            return k
    raise ValueError(f"trailing axis {size} is not a form length for n={n}")


def unit(n, k, idx, dtype=float):
    """The basis form e^{idx} (idx need not be sorted)."""
    out = np.zeros(comb(n, k), dtype=dtype)
    s = perm_sign(idx)
    if s:
        out[slot(n, k)[tuple(sorted(idx))]] = s
    return out


# ---------------------------------------------------------------- tables

@lru_cache(maxsize=None)
def _expand_table(n, k):
    flat, comp, sign = [], [], []
    shape = (n,) * k
    for i, I in enumerate(basis(n, k)):
        for p in itertools.permutations(range(k)):
            J = tuple(I[q] for q in p)
            flat.append(np.ravel_multi_index(J, shape) if k else 0)
            comp.append(i)
            sign.append(perm_sign(p))
    return np.array(flat), np.array(comp), np.array(sign, dtype=float)


@lru_cache(maxsize=None)
def _compress_index(n, k):
    shape = (n,) * k
    return np.array([np.ravel_multi_index(I, shape) if k else 0
                     for I in basis(n, k)], dtype=int)


def _scatter_matrix(out_idx, nout):
    m = np.zeros((len(out_idx), nout))
    m[np.arange(len(out_idx)), out_idx] = 1.0
    return m


@lru_cache(maxsize=None)
def _wedge_table(n, k, l):
    ia, ib, s, out = [], [], [], []
    slots = slot(n, k + l)
    for a, I in enumerate(basis(n, k)):
        for b, J in enumerate(basis(n, l)):
            if set(I) & set(J):
                continue
            ia.append(a)
            ib.append(b)
            s.append(perm_sign(I + J))
            out.append(slots[tuple(sorted(I + J))])
    if not out:
        return None
    return (np.array(ia), np.array(ib), np.array(s, dtype=float),
            _scatter_matrix(out, comb(n, k + l)))


@lru_cache(maxsize=None)
def _interior_table(n, k):
    # (X ⌟ a)_J = X^i a_{iJ}
    iv, ia, s, out = [], [], [], []
    slots = slot(n, k)
    for j, J in enumerate(basis(n, k - 1)):
        for i in range(n):
            if i in J:
                continue
            full = (i,) + J
            iv.append(i)
            ia.append(slots[tuple(sorted(full))])
            s.append(perm_sign(full))
            out.append(j)
    return (np.array(iv), np.array(ia), np.array(s, dtype=float),
            _scatter_matrix(out, comb(n, k - 1)))


@lru_cache(maxsize=None)
def _derivation_table(n, k):
    # (A.a)_I = sum_s A_{I_s}^l a_{I with I_s -> l}
    rows, cols, ia, s, out = [], [], [], [], []
    slots = slot(n, k)
    for o, I in enumerate(basis(n, k)):
        for pos in range(k):
            for l in range(n):
                J = I[:pos] + (l,) + I[pos + 1:]
                sg = perm_sign(J)
                if not sg:
                    continue
                rows.append(I[pos])
                cols.append(l)
                ia.append(slots[tuple(sorted(J))])
                s.append(sg)
                out.append(o)
    if not out:
        return None
    return (np.array(rows), np.array(cols), np.array(ia),
            np.array(s, dtype=float), _scatter_matrix(out, comb(n, k)))


@lru_cache(maxsize=None)
def _complement_table(n, k):
    # euclidean star: *e^I = eps(I, I^c) e^{I^c}
    slots = slot(n, n - k)
    out, s = [], []
    for I in basis(n, k):
        Ic = tuple(x for x in range(n) if x not in I)
        out.append(slots[Ic])
        s.append(perm_sign(I + Ic))
    return np.array(out), np.array(s, dtype=float)


# ------------------------------------------------------------ operations

def expand(a, k, n=7):
    """Full antisymmetric tensor with k trailing axes of length n."""
    a = np.asarray(a)
    batch = a.shape[:-1]
    if k == 0:
        return a[..., 0]
    flat, comp, sign = _expand_table(n, k)
    full = np.zeros(batch + (n ** k,), dtype=a.dtype)
    full[..., flat] = a[..., comp] * sign
    return full.reshape(batch + (n,) * k)


def compress(t, k, n=7):
    """Pick the increasing-index components of an antisymmetric tensor."""
    t = np.asarray(t)
    if k == 0:
        return t[..., None]
    batch = t.shape[:t.ndim - k]
    return t.reshape(batch + (n ** k,))[..., _compress_index(n, k)]


def antisymmetrize(t, k, n=7):
    """Compressed form of the alternating part of an arbitrary k-tensor."""
    t = np.asarray(t)
    if k == 0:
        return t[..., None]
    batch = t.shape[:t.ndim - k]
    flat, comp, sign = _expand_table(n, k)
    vals = t.reshape(batch + (n ** k,))[..., flat] * sign
    return vals.reshape(batch + (comb(n, k), -1)).mean(axis=-1)


def wedge(a, k, b, l, n=7):
    a = np.asarray(a)
    b = np.asarray(b)
    if k + l > n:
        raise ValueError("degree exceeds dimension")
    tab = _wedge_table(n, k, l)
    ia, ib, s, m = tab
    return (a[..., ia] * b[..., ib] * s) @ m


def interior(X, a, k, n=7):
    """X ⌟ a for a contravariant vector X and a k-form a."""
    if k == 0:
        raise ValueError("cannot contract a 0-form")
    iv, ia, s, m = _interior_table(n, k)
    return (np.asarray(X)[..., iv] * np.asarray(a)[..., ia] * s) @ m


def derivation(A, a, k, n=7):
    """Derivation action sum_s A_{i_s}^l a_{..l..} of a mixed (1,1) tensor.

    ``A[..., i, l]`` holds A_i^l. This is the infinitesimal GL action on
    forms (up to sign) and underlies the diamond operator.
    """
    if k == 0:
        return np.zeros_like(np.asarray(a))
    rows, cols, ia, s, m = _derivation_table(n, k)
    A = np.asarray(A)
    return (A[..., rows, cols] * np.asarray(a)[..., ia] * s) @ m


def exterior_from_gradient(grad, k, n=7):
    """dα from grad[..., c, I] = ∂_c α_I, i.e. sum_c dx^c ∧ ∂_c α."""
    ia, ib, s, m = _wedge_table(n, 1, k)
    return (np.asarray(grad)[..., ia, ib] * s) @ m


def complement(a, k, n=7):
    """Euclidean Hodge complement (flat star in the standard orientation)."""
    a = np.asarray(a)
    out, s = _complement_table(n, k)
    res = np.zeros(a.shape[:-1] + (comb(n, n - k),), dtype=a.dtype)
    res[..., out] = a * s
    return res


def uncomplement(b, k, n=7):
    """Inverse of ``complement`` for k-forms (b is an (n-k)-form)."""
    b = np.asarray(b)
    out, s = _complement_table(n, k)
    return b[..., out] * s


def pullback(u, a, k, n=7):
    """(u^* a)_{i..} = u^{a}_{i} ... a_{a..}; u[..., a, i] maps index i to a."""
    if k == 0:
        return np.asarray(a).copy()
    full = expand(a, k, n)
    letters = "abcdefg"[:k]
    outs = "ijklmno"[:k]
    spec = ",".join(f"...{x}{y}" for x, y in zip(letters, outs))
    full = np.einsum(f"{spec},...{letters}->...{outs}", *([u] * k), full,
                     optimize=True)
    return compress(full, k, n)


# ---------------------------------------------------------------- metric

@dataclass(frozen=True)
class Metric:
    """Riemannian metric data at a batch of points."""

    g: np.ndarray
    ginv: np.ndarray
    vol: np.ndarray

    @property
    def n(self):
        return self.g.shape[-1]

    @classmethod
    def from_matrix(cls, g):
        g = np.asarray(g, dtype=float)
        ginv = np.linalg.inv(g)
        ginv = 0.5 * (ginv + np.swapaxes(ginv, -1, -2))
        return cls(g, ginv, np.sqrt(np.linalg.det(g)))


def _transform(a, k, mat, n):
    # apply mat to every index slot (raise with ginv, lower with g)
    if k == 0:
        return np.asarray(a).copy()
    if k > 3:
        return np.einsum("...IJ,...J->...I", _compound(mat, k, n), a)
    full = expand(a, k, n)
    letters = "abc"[:k]
    outs = "ijk"[:k]
    spec = ",".join(f"...{y}{x}" for x, y in zip(letters, outs))
    full = np.einsum(f"{spec},...{letters}->...{outs}", *([mat] * k), full,
                     optimize=True)
    return compress(full, k, n)


def _compound(mat, k, n):
    # k-th compound matrix (all k x k minors)
    idx = np.array(basis(n, k))
    sub = mat[..., idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


def raise_form(a, k, metric):
    """Contravariant components a^{I} in compressed storage."""
    return _transform(a, k, metric.ginv, metric.n)


def lower_form(a, k, metric):
    return _transform(a, k, metric.g, metric.n)


def hodge_star(a, k, metric):
    """Hodge star of a k-form for the metric and its positive orientation."""
    n = metric.n
    a = np.asarray(a)
    vol = metric.vol[..., None]
    if 2 * k <= n:
        return vol * complement(raise_form(a, k, metric), k, n)
    # go through the lower degree: a = *b with deg b = n - k
    b_up = uncomplement(a, n - k, n) / vol
    b = lower_form(b_up, n - k, metric)
    return (-1) ** (k * (n - k)) * b


def inner(a, b, k, metric):
    """Pointwise <a, b> with the 1/k! weighting (sum over increasing I)."""
    n = metric.n
    if 2 * k <= n:
        return np.sum(np.asarray(a) * raise_form(b, k, metric), axis=-1)
    return inner(hodge_star(a, k, metric), hodge_star(b, k, metric),
                 n - k, metric)


def norm2(a, k, metric):
    return inner(a, a, k, metric)
