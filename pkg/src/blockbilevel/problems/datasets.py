"""Sparse binary-classification datasets: LIBSVM text I/O, train/validation/
test splitting, and the corruption protocol (positive-sample removal plus
label flipping on the remaining training rows)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp


@dataclass
class CorruptionRecord:
    drop_pos_frac: float
    flip_prob: float
    n_dropped: int
    n_flipped: int


@dataclass
class Dataset:
    """Sparse labeled examples with split indices.

    ``labels`` are +-1 for all rows; splits are disjoint index arrays into
    the row dimension.  Corruption, when applied, touches training rows
    only and is recorded.
    """

    features: sp.csr_matrix
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    corruption: CorruptionRecord | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        bad = ~np.isin(self.labels, (-1.0, 1.0))
        if np.any(bad):
            raise ValueError(f"labels must be +-1, found {self.labels[bad][:5]}")
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.val_idx = np.asarray(self.val_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        all_idx = np.concatenate([self.train_idx, self.val_idx, self.test_idx])
        if len(np.unique(all_idx)) != len(all_idx):
            raise ValueError("splits overlap")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


class LibsvmFormatError(ValueError):
    pass


def _parse_label(tok: str, lineno: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise LibsvmFormatError(
            f"line {lineno}: non-numeric label {tok!r}") from None
    if val in (1.0, +1.0):
        return 1.0
    if val in (0.0, -1.0):
        return -1.0
    raise LibsvmFormatError(
        f"line {lineno}: label must be one of +1, 1, 0, -1; got {tok!r}")


def load_libsvm(path) -> Dataset:
    """Read 'label idx:val idx:val ...' lines (1-based, strictly increasing
    feature indices).  Labels 0 and -1 map to -1.  All rows land in the
    training split."""
    labels: list[float] = []
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    d = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            toks = line.split()
            labels.append(_parse_label(toks[0], lineno))
            prev = 0
            for tok in toks[1:]:
                idx_s, _, val_s = tok.partition(":")
                if not val_s:
                    raise LibsvmFormatError(
                        f"line {lineno}: expected idx:val, got {tok!r}")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise LibsvmFormatError(
                        f"line {lineno}: non-numeric token {tok!r}") from None
                if idx < 1:
                    raise LibsvmFormatError(
                        f"line {lineno}: feature index {idx} is not 1-based")
                if idx <= prev:
                    raise LibsvmFormatError(
                        f"line {lineno}: feature indices not strictly "
                        f"increasing ({idx} after {prev})")
                prev = idx
                d = max(d, idx)
                indices.append(idx - 1)
                data.append(val)
            indptr.append(len(data))
    X = sp.csr_matrix((np.array(data), np.array(indices, dtype=np.int64),
                       np.array(indptr, dtype=np.int64)),
                      shape=(len(labels), d))
    return Dataset(features=X, labels=np.array(labels),
                   train_idx=np.arange(len(labels), dtype=np.int64))


def save_libsvm(dataset: Dataset, path) -> None:
    X = dataset.features.tocsr()
    with open(path, "w") as fh:
        for r in range(X.shape[0]):
            lab = int(dataset.labels[r])
            row = X.getrow(r)
            feats = " ".join(f"{j + 1}:{float(v)!r}"
                             for j, v in zip(row.indices, row.data))
            fh.write(f"{'+1' if lab > 0 else '-1'} {feats}".rstrip() + "\n")


def split_dataset(dataset: Dataset, val_frac: float, test_frac: float,
                  rng: np.random.Generator) -> Dataset:
    """Randomly repartition all rows into train/validation/test."""
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1:
        raise ValueError("need val_frac, test_frac >= 0 with sum < 1")
    n = dataset.n
    perm = rng.permutation(n).astype(np.int64)
    n_val = int(round(val_frac * n))
    n_test = int(round(test_frac * n))
    return replace(dataset,
                   val_idx=np.sort(perm[:n_val]),
                   test_idx=np.sort(perm[n_val:n_val + n_test]),
                   train_idx=np.sort(perm[n_val + n_test:]))


def corrupt(dataset: Dataset, drop_pos_frac: float, flip_prob: float,
            rng: np.random.Generator) -> Dataset:
    """Remove a fraction of positive training rows uniformly, then flip each
    remaining training label independently.  Other splits are untouched."""
    if not 0 <= drop_pos_frac <= 1:
        raise ValueError(f"drop_pos_frac must be in [0,1], got {drop_pos_frac}")
    if not 0 <= flip_prob <= 1:
        raise ValueError(f"flip_prob must be in [0,1], got {flip_prob}")
    train = dataset.train_idx
    labels = dataset.labels.copy()
    pos = train[labels[train] > 0]
    n_drop = int(round(drop_pos_frac * len(pos)))
    dropped = rng.choice(pos, size=n_drop, replace=False) if n_drop else \
        np.empty(0, np.int64)
    keep = np.sort(np.setdiff1d(train, dropped))
    flips = rng.random(len(keep)) < flip_prob
    labels[keep[flips]] *= -1.0
    return replace(dataset, labels=labels, train_idx=keep,
                   corruption=CorruptionRecord(
                       drop_pos_frac=drop_pos_frac, flip_prob=flip_prob,
                       n_dropped=int(n_drop), n_flipped=int(flips.sum())))


def make_synthetic_binary(n_train: int, n_val: int, n_test: int, d: int,
                          seed: int, density: float = 0.25,
                          margin_noise: float = 0.6) -> Dataset:
    """Sparse Gaussian features with a planted linear separator.

    Hermetic stand-in for the public sparse benchmarks, so the test suite
    never needs network access; real LIBSVM files remain optional inputs.
    """
    rng = np.random.default_rng(seed)
    n = n_train + n_val + n_test
    mask = sp.random(n, d, density=density, random_state=rng,
                     data_rvs=lambda k: np.ones(k), format="csr",
                     dtype=np.float64)
    vals = rng.standard_normal(mask.nnz)
    X = sp.csr_matrix((vals, mask.indices, mask.indptr), shape=(n, d))
    w_star = rng.standard_normal(d) / np.sqrt(d * density)
    scores = X @ w_star + margin_noise * rng.standard_normal(n)
    labels = np.where(scores >= np.median(scores), 1.0, -1.0)
    perm = rng.permutation(n).astype(np.int64)
    return Dataset(features=X, labels=labels,
                   train_idx=np.sort(perm[:n_train]),
                   val_idx=np.sort(perm[n_train:n_train + n_val]),
                   test_idx=np.sort(perm[n_train + n_val:]))
