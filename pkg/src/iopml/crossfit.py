"""Fold assignment, pair blocks and cross-fitted first-stage predictions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, FitError, IOpError
from .learners import LearnerSpec, fit, predict

MODES = ("fold", "pair_block")


@dataclass(frozen=True)
class FoldAssignment:
    K: int
    fold_of: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        object.__setattr__(self, "fold_of", fold_of)
        if self.K < 2:
            raise ConfigError(f"need K >= 2 folds, got {self.K}")
        if fold_of.min() < 0 or fold_of.max() >= self.K:
            raise ConfigError("fold index out of range")
        sizes = self.sizes
        if sizes.min() == 0:
            raise ConfigError("empty fold")

    @property
    def n(self) -> int:
        return self.fold_of.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K)

    def rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def take(self, idx) -> "FoldAssignment":
        """Fold assignment restricted/reordered to ``idx`` (all folds must stay non-empty)."""
        return FoldAssignment(self.K, self.fold_of[np.asarray(idx)], self.seed)


def make_folds(n: int, K: int = 5, seed: int = 0) -> FoldAssignment:
    """Uniform random partition of ``range(n)`` into K folds of near-equal size."""
    if K < 2 or K > n:
        raise ConfigError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[rng.permutation(n)] = np.arange(n) % K
    return FoldAssignment(int(K), fold_of, seed)


@dataclass(frozen=True)
class PairBlocks:
    """One block per unordered fold pair (k, k2), k <= k2.

    Block (k, k2) holds the observation pairs with one member in fold k and
    the other in fold k2; its first stage is trained on every other fold.
    """

    folds: FoldAssignment
    blocks: list[tuple[int, int]]
    training: list[np.ndarray]

    @property
    def L(self) -> int:
        return len(self.blocks)

    def evaluated_rows(self, b: int) -> np.ndarray:
        k, k2 = self.blocks[b]
        return np.flatnonzero((self.folds.fold_of == k) | (self.folds.fold_of == k2))

    def pair_count(self, b: int) -> int:
        k, k2 = self.blocks[b]
        sizes = self.folds.sizes
        if k == k2:
            return int(sizes[k] * (sizes[k] - 1) // 2)
        return int(sizes[k] * sizes[k2])


def make_pair_blocks(f: FoldAssignment) -> PairBlocks:
    blocks, training = [], []
    for k in range(f.K):
        for k2 in range(k, f.K):
            blocks.append((k, k2))
            training.append(np.flatnonzero((f.fold_of != k) & (f.fold_of != k2)))
    return PairBlocks(f, blocks, training)


@dataclass
class CrossFitFV:
    """Cross-fitted fitted values.

    In ``fold`` mode ``values[i]`` comes from the model trained without
    row i's fold. In ``pair_block`` mode ``block_values[b]`` has the block's
    model evaluated on the rows of its two folds (``nan`` elsewhere).
    """

    mode: str
    folds: FoldAssignment
    spec: LearnerSpec | None = None
    values: np.ndarray | None = None
    pair_blocks: PairBlocks | None = None
    block_values: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def from_values(cls, values, folds: FoldAssignment, spec: LearnerSpec | None = None) -> "CrossFitFV":
        """Wrap externally supplied fold-mode fitted values."""
        values = np.asarray(values, dtype=float)
        if values.shape != (folds.n,):
            raise ConfigError("fitted values do not match the fold assignment")
        if not np.all(np.isfinite(values)):
            raise FitError("non-finite fitted values")
        return cls("fold", folds, spec, values)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown cross-fitting mode {self.mode!r}")

    @property
    def n(self) -> int:
        return self.folds.n


def _fit_predict(spec, d: Dataset, train, evaluate, label):
    if train.size == 0:
        raise FitError(f"{label}: empty training set")
    try:
        model = fit(spec, d.take(train))
        return predict(model, d.take(evaluate))
    except IOpError as exc:
        raise FitError(f"{label}: {exc}") from exc


def crossfit_fitted_values(
    d: Dataset, spec: LearnerSpec, f: FoldAssignment, mode: str = "fold"
) -> CrossFitFV:
    """Fit one model per fold (or per pair block) and predict the held-out rows.

    With no circumstances left the fitted values are the full-sample
    weighted mean of the outcome, so debiased IOp is exactly zero.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown cross-fitting mode {mode!r}")
    if f.n != d.n:
        raise ConfigError(f"fold assignment covers {f.n} rows, dataset has {d.n}")
    constant = d.x.shape[1] == 0
    if mode == "fold":
        values = np.empty(d.n)
        for k in range(f.K):
            te = f.rows(k)
            if constant:
                values[te] = d.weighted_mean()
            else:
                values[te] = _fit_predict(spec, d, np.flatnonzero(f.fold_of != k), te, f"fold {k}")
        return CrossFitFV("fold", f, spec, values)

    pb = make_pair_blocks(f)
    block_values = []
    for b, (k, k2) in enumerate(pb.blocks):
        rows = pb.evaluated_rows(b)
        vals = np.full(d.n, np.nan)
        if constant:
            vals[rows] = d.weighted_mean()
        else:
            vals[rows] = _fit_predict(spec, d, pb.training[b], rows, f"block ({k},{k2})")
        block_values.append(vals)
    return CrossFitFV("pair_block", f, spec, pair_blocks=pb, block_values=block_values)


def full_sample_fitted_values(d: Dataset, spec: LearnerSpec) -> np.ndarray:
    """In-sample predictions of a model refit on every row."""
    if d.x.shape[1] == 0:
        return np.full(d.n, d.weighted_mean())
    idx = np.arange(d.n)
    return _fit_predict(spec, d, idx, idx, "full-sample fit")
