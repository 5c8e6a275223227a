"""Dataset ingestion (libsvm text format), normalization, and synthesis."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class DatasetFormatError(ValueError):
    """Raised when a libsvm file violates the documented grammar."""


class Dataset:
    """Immutable binary-classification dataset.

    Rows are stored sparse (CSR) or dense depending on density; labels are
    in {-1, +1}. Row norms are cached because smoothness constants depend
    on them.
    """

    def __init__(self, X, y, normalized=False, source="memory"):
        if sp.issparse(X):
            X = sp.csr_matrix(X, dtype=np.float64)
            X.sort_indices()
        else:
            X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] != y.shape[0]:
            raise ValueError("label count does not match row count")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.X = X
        self.y = y
        self.n, self.p = X.shape
        if sp.issparse(X):
            self.row_norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        else:
            self.row_norms = np.linalg.norm(X, axis=1)
        self.normalized = bool(normalized)
        self.source = source

    @property
    def is_sparse(self):
        return sp.issparse(self.X)

    def row(self, i):
        """Return (indices, values) of stored entries of row i."""
        if self.is_sparse:
            sl = slice(self.X.indptr[i], self.X.indptr[i + 1])
            return self.X.indices[sl], self.X.data[sl]
        row = self.X[i]
        return np.arange(self.p), row

    def to_dense(self):
        if self.is_sparse:
            return np.asarray(self.X.todense())
        return self.X


def read_libsvm(path, dim=None):
    """Parse a libsvm text file into a Dataset.

    Grammar: ``label idx:val idx:val ...`` with 1-based strictly increasing
    indices; labels in {0, 1} or {-1, +1} (0 maps to -1); '#' comment lines
    skipped. ``dim`` overrides the inferred dimension (max index).
    """
    labels = []
    rows = []  # list of (indices, values)
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                lab = float(parts[0])
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: bad label {parts[0]!r}")
            if lab == 0.0:
                lab = -1.0
            if lab not in (-1.0, 1.0):
                raise DatasetFormatError(f"line {lineno}: non-binary label {parts[0]!r}")
            idx = []
            val = []
            prev = 0
            for tok in parts[1:]:
                try:
                    i_str, v_str = tok.split(":")
                    i = int(i_str)
                    v = float(v_str)
                except ValueError:
                    raise DatasetFormatError(f"line {lineno}: bad entry {tok!r}")
                if i < 1:
                    raise DatasetFormatError(f"line {lineno}: index {i} < 1")
                if i <= prev:
                    raise DatasetFormatError(
                        f"line {lineno}: indices not strictly increasing at {tok!r}"
                    )
                prev = i
                idx.append(i)
                val.append(v)
            max_idx = max(max_idx, prev)
            labels.append(lab)
            rows.append((idx, val))
    p = dim if dim is not None else max_idx
    if dim is not None and max_idx > dim:
        raise DatasetFormatError(f"max index {max_idx} exceeds forced dimension {dim}")
    n = len(rows)
    if n == 0:
        raise DatasetFormatError("empty dataset")
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i, (idx, _) in enumerate(rows):
        indptr[i + 1] = indptr[i] + len(idx)
    indices = np.fromiter(
        (i - 1 for idx, _ in rows for i in idx), dtype=np.int64, count=indptr[-1]
    )
    values = np.fromiter(
        (v for _, val in rows for v in val), dtype=np.float64, count=indptr[-1]
    )
    X = sp.csr_matrix((values, indices, indptr), shape=(n, p))
    density = indptr[-1] / max(1, n * p)
    if density > 0.5:
        X = np.asarray(X.todense())
    return Dataset(X, np.array(labels), source=str(path))


def write_libsvm(dataset, path):
    """Write a Dataset in libsvm text format (1-based indices, full precision)."""
    with open(path, "w") as fh:
        for i in range(dataset.n):
            idx, val = dataset.row(i)
            lab = int(dataset.y[i])
            ents = " ".join(f"{j + 1}:{v:.17g}" for j, v in zip(idx, val) if v != 0.0)
            fh.write(f"{lab:+d} {ents}\n".rstrip() + "\n")


def normalize_rows(dataset):
    """Scale each nonzero row to unit Euclidean norm (idempotent)."""
    norms = dataset.row_norms.copy()
    norms[norms == 0.0] = 1.0
    if dataset.is_sparse:
        D = sp.diags(1.0 / norms)
        X = D @ dataset.X
    else:
        X = dataset.X / norms[:, None]
    return Dataset(X, dataset.y, normalized=True, source=dataset.source)


def synthesize(n, p, seed=0, flip_prob=0.0):
    """Generate a unit-norm gaussian dataset with a planted linear separator.

    Labels are sign(a_i . w) for a seeded w, flipped independently with
    probability ``flip_prob``. Deterministic given the seed.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    if not 0.0 <= flip_prob < 0.5:
        raise ValueError("flip_prob must be in [0, 0.5)")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(p)
    A = rng.standard_normal((n, p))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    y = np.sign(A @ w)
    y[y == 0.0] = 1.0
    if flip_prob > 0.0:
        flips = rng.random(n) < flip_prob
        y[flips] *= -1.0
    return Dataset(A, y, normalized=True, source=f"synthetic(n={n},p={p},seed={seed})")
