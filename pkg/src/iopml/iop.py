"""Inequality indices, plug-in IOp and debiased Gini / MLD IOp estimators.

Weighted pairwise sums use products of observation weights and include the
i = j terms in the Gini denominator, so with unit weights

    gini(y) = sum_ij |y_i - y_j| / sum_ij (y_i + y_j).

All pairwise sums are computed in O(n log n) by sorting on the ranking
variable and taking prefix sums; ties in the ranking variable contribute
zero (sgn(0) = 0).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .crossfit import CrossFitFV, FoldAssignment, crossfit_fitted_values, full_sample_fitted_values, make_folds
from .data import Dataset
from .errors import ConfigError, DomainError
from .learners import LearnerSpec

log = logging.getLogger(__name__)

INDICES = ("gini", "mld")
MLD_FLOOR = 1e-6


# --------------------------------------------------------------------------
# pairwise sums


def signed_row_sums(g, y, g_ref, y_ref, w_ref) -> np.ndarray:
    """For each i: sum_j w_ref_j * sgn(g_i - g_ref_j) * (y_i - y_ref_j)."""
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(g_ref, kind="stable")
    gs = np.asarray(g_ref, dtype=float)[order]
    ws = np.asarray(w_ref, dtype=float)[order]
    wys = ws * np.asarray(y_ref, dtype=float)[order]
    cw = np.concatenate(([0.0], np.cumsum(ws)))
    cwy = np.concatenate(([0.0], np.cumsum(wys)))
    lo = np.searchsorted(gs, g, side="left")
    hi = np.searchsorted(gs, g, side="right")
    w_below, wy_below = cw[lo], cwy[lo]
    w_above, wy_above = cw[-1] - cw[hi], cwy[-1] - cwy[hi]
    return y * (w_below - w_above) - (wy_below - wy_above)


def signed_pair_sum(g_a, y_a, w_a, g_b=None, y_b=None, w_b=None) -> float:
    """sum_{i in a} sum_{j in b} w_i w_j sgn(g_i - g_j)(y_i - y_j); ``b`` defaults to ``a``."""
    if g_b is None:
        g_b, y_b, w_b = g_a, y_a, w_a
    return float(np.dot(w_a, signed_row_sums(g_a, y_a, g_b, y_b, w_b)))


def _check_positive(y, w, what="values"):
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float).ravel()
    if y.shape != w.shape:
        raise DomainError(f"{what} and weights differ in length")
    if y.size < 2:
        raise DomainError(f"need at least 2 {what}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise DomainError(f"{what} must be finite and strictly positive")
    if np.any(w <= 0):
        raise DomainError("weights must be strictly positive")
    return y, w


def gini(y, w=None) -> float:
    """Weighted Gini coefficient."""
    y, w = _check_positive(y, w)
    num = signed_pair_sum(y, y, w)
    den = 2.0 * w.sum() * np.dot(w, y)
    return num / den


def mld(y, w=None) -> float:
    """Mean logarithmic deviation: ln of the mean minus the mean of the logs."""
    y, w = _check_positive(y, w)
    wn = w / w.sum()
    return float(np.log(wn @ y) - wn @ np.log(y))


# --------------------------------------------------------------------------
# results


@dataclass
class RelativeIOp:
    theta: float
    se: float
    ci: tuple[float, float]
    inequality: float


@dataclass
class IOpEstimate:
    theta: float
    variance: float | None
    se: float | None
    ci: tuple[float, float] | None
    level: float
    index: str
    kind: str
    n: int
    relative: RelativeIOp | None = None
    metadata: dict = field(default_factory=dict)
    influence: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "kind": self.kind,
            "theta": self.theta,
            "variance": self.variance,
            "se": self.se,
            "ci_low": None if self.ci is None else self.ci[0],
            "ci_high": None if self.ci is None else self.ci[1],
            "level": self.level,
            "n": self.n,
        }
        if self.relative is not None:
            r = self.relative
            out.update(
                relative=r.theta,
                relative_se=r.se,
                relative_ci_low=r.ci[0],
                relative_ci_high=r.ci[1],
                inequality=r.inequality,
            )
        out["metadata"] = dict(self.metadata)
        return out

    @classmethod
    def from_dict(cls, rec: dict) -> "IOpEstimate":
        ci = None if rec.get("ci_low") is None else (rec["ci_low"], rec["ci_high"])
        rel = None
        if rec.get("relative") is not None:
            rel = RelativeIOp(
                rec["relative"], rec["relative_se"], (rec["relative_ci_low"], rec["relative_ci_high"]), rec["inequality"]
            )
        return cls(
            theta=rec["theta"],
            variance=rec.get("variance"),
            se=rec.get("se"),
            ci=ci,
            level=rec.get("level", 0.95),
            index=rec["index"],
            kind=rec.get("kind", "debiased"),
            n=rec.get("n", 0),
            relative=rel,
            metadata=dict(rec.get("metadata") or {}),
        )


def z_interval(theta, se, level):
    if not 0 < level < 1:
        raise ConfigError(f"confidence level must be in (0, 1), got {level}")
    z = norm.ppf(0.5 + level / 2.0)
    return (theta - z * se, theta + z * se)


def se_from_influence(phi, w) -> float:
    """Standard error of a weighted mean-type estimator with influence ``phi``."""
    w = np.asarray(w, dtype=float)
    return float(np.sqrt(np.sum((w * phi) ** 2)) / w.sum())


def center(phi, w):
    return phi - np.dot(w, phi) / w.sum()


# --------------------------------------------------------------------------
# plug-in


def plugin_iop(fv, w=None, index: str = "gini", level: float = 0.95) -> IOpEstimate:
    """Inequality index of fitted values; carries no standard error."""
    fv = np.asarray(fv, dtype=float)
    w = np.ones_like(fv) if w is None else np.asarray(w, dtype=float)
    if index == "gini":
        theta = gini(fv, w)
    elif index == "mld":
        if np.any(fv <= 0):
            raise DomainError("MLD needs strictly positive fitted values")
        theta = mld(fv, w)
    else:
        raise ConfigError(f"unknown index {index!r}")
    return IOpEstimate(theta, None, None, None, level, index, "plugin", fv.size)


# --------------------------------------------------------------------------
# debiased Gini


def gini_h1(y, w, g, theta) -> np.ndarray:
    """Weighted average over j != i of theta (y_i + y_j) - sgn(g_i - g_j)(y_i - y_j)."""
    W = w.sum()
    S = np.dot(w, y)
    rest = W - w
    R = signed_row_sums(g, y, g, y, w)
    return (theta * (y * rest + (S - w * y)) - R) / rest


def debiased_gini_parts(d: Dataset, cf: CrossFitFV) -> tuple[float, float]:
    """Numerator (sign-weighted pair sum over blocks) and denominator of the estimator."""
    if cf.n != d.n:
        raise ConfigError(f"cross-fit covers {cf.n} rows, dataset has {d.n}")
    y, w = d.y, d.w
    den = 2.0 * w.sum() * np.dot(w, y)
    if cf.mode == "fold":
        return signed_pair_sum(cf.values, y, w), den
    pb = cf.pair_blocks
    fold_of = cf.folds.fold_of
    num = 0.0
    for b, (k, k2) in enumerate(pb.blocks):
        g = cf.block_values[b]
        a = fold_of == k
        if k == k2:
            num += signed_pair_sum(g[a], y[a], w[a])
        else:
            c = fold_of == k2
            num += 2.0 * signed_pair_sum(g[a], y[a], w[a], g[c], y[c], w[c])
    return num, den


def debiased_gini_iop(
    d: Dataset,
    cf: CrossFitFV,
    level: float = 0.95,
    full_fv=None,
    variance: str = "full",
) -> IOpEstimate:
    """Debiased Gini IOp with its asymptotic standard error.

    The variance uses full-sample fitted values: ``full_fv`` if given,
    otherwise a refit of ``cf.spec`` on all rows. ``variance="crossfit"``
    reuses the fold-mode cross-fitted values instead.
    """
    if d.n < 2:
        raise DomainError("need at least 2 observations")
    num, den = debiased_gini_parts(d, cf)
    theta = float(num / den)
    if theta < 0:
        log.warning("debiased Gini IOp is negative (%.4g); reported as computed", theta)

    if variance == "crossfit":
        if cf.mode != "fold":
            raise ConfigError("crossfit variance needs fold-mode fitted values")
        g = cf.values
    elif variance == "full":
        g = full_sample_fitted_values(d, cf.spec) if full_fv is None else np.asarray(full_fv, dtype=float)
    else:
        raise ConfigError(f"unknown variance option {variance!r}")

    y, w = d.y, d.w
    ybar = np.dot(w, y) / w.sum()
    phi = -gini_h1(y, w, g, theta) / ybar
    se = se_from_influence(phi, w)
    V = d.n * se**2
    meta = {"mode": cf.mode, "K": cf.folds.K, "seed": cf.folds.seed, "variance": variance}
    if cf.spec is not None:
        meta["learner"] = cf.spec.label
    return IOpEstimate(
        theta=theta,
        variance=V,
        se=se,
        ci=z_interval(theta, se, level),
        level=level,
        index="gini",
        kind="debiased",
        n=d.n,
        metadata=meta,
        influence=center(phi, w),
        weights=w,
    )


# --------------------------------------------------------------------------
# debiased MLD


def _floored(fv, floor):
    bad = np.flatnonzero(fv <= (MLD_FLOOR if floor is None else floor))
    if bad.size == 0:
        return fv
    if floor is None:
        rows = ", ".join(str(i + 1) for i in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        raise DomainError(f"fitted values <= {MLD_FLOOR:g} at row(s) {rows}{more}; MLD undefined")
    log.warning("flooring %d fitted value(s) at %g for the MLD", bad.size, floor)
    return np.maximum(fv, floor)


def debiased_mld_iop(d: Dataset, cf: CrossFitFV, level: float = 0.95, floor: float | None = None) -> IOpEstimate:
    """Debiased MLD IOp from fold-mode cross-fitted values.

    ``floor=None`` rejects fitted values at or below 1e-6; a number
    truncates them there instead.
    """
    if cf.mode != "fold":
        raise ConfigError("the MLD estimator needs fold-mode cross-fitting")
    if cf.n != d.n:
        raise ConfigError(f"cross-fit covers {cf.n} rows, dataset has {d.n}")
    y, w = d.y, d.w
    g = _floored(np.asarray(cf.values, dtype=float), floor)
    wn = w / w.sum()
    theta1 = float(wn @ y)
    corrected = np.log(g) + (y - g) / g
    theta2 = float(wn @ corrected)
    theta = np.log(theta1) - theta2
    psi = corrected - theta2
    phi = (y - theta1) / theta1 - psi
    se = se_from_influence(phi, w)
    meta = {"mode": cf.mode, "K": cf.folds.K, "seed": cf.folds.seed, "variance": "crossfit"}
    if cf.spec is not None:
        meta["learner"] = cf.spec.label
    return IOpEstimate(
        theta=float(theta),
        variance=d.n * se**2,
        se=se,
        ci=z_interval(theta, se, level),
        level=level,
        index="mld",
        kind="debiased",
        n=d.n,
        metadata=meta,
        influence=center(phi, w),
        weights=w,
    )


# --------------------------------------------------------------------------
# relative IOp


def inequality_influence(y, w, index) -> tuple[float, np.ndarray]:
    """Unconditional inequality of ``y`` and its (centred) influence function."""
    if index == "gini":
        I = gini(y, w)
        ybar = np.dot(w, y) / w.sum()
        phi = -gini_h1(y, w, y, I) / ybar
    elif index == "mld":
        I = mld(y, w)
        wn = w / w.sum()
        ybar = wn @ y
        ly = np.log(y)
        phi = (y - ybar) / ybar - (ly - wn @ ly)
    else:
        raise ConfigError(f"unknown index {index!r}")
    return I, center(phi, w)


def relative_iop(est: IOpEstimate, d: Dataset) -> IOpEstimate:
    """Attach IOp as a share of unconditional inequality, with a delta-method interval."""
    if est.influence is None:
        raise ConfigError("relative IOp needs an estimate carrying its influence function")
    I, phi_I = inequality_influence(d.y, d.w, est.index)
    if I <= 0:
        raise DomainError("outcome has zero inequality; relative IOp undefined")
    ratio = est.theta / I
    phi = est.influence / I - est.theta * phi_I / I**2
    se = se_from_influence(phi, d.w)
    rel = RelativeIOp(ratio, se, z_interval(ratio, se, est.level), I)
    return replace(est, relative=rel)


# --------------------------------------------------------------------------
# end-to-end estimation


@dataclass(frozen=True)
class EstimatorConfig:
    indices: tuple[str, ...] = ("gini",)
    learner: LearnerSpec = field(default_factory=lambda: LearnerSpec("forest"))
    K: int = 5
    seed: int = 0
    mode: str = "pair_block"
    level: float = 0.95
    variance: str = "full"
    relative: bool = True
    mld_floor: float | None = None

    def __post_init__(self):
        idx = (self.indices,) if isinstance(self.indices, str) else tuple(self.indices)
        if idx == ("both",):
            idx = INDICES
        bad = [i for i in idx if i not in INDICES]
        if bad or not idx:
            raise ConfigError(f"unknown index selection {self.indices!r}")
        object.__setattr__(self, "indices", idx)
        if self.mode not in ("fold", "pair_block"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.variance not in ("full", "crossfit"):
            raise ConfigError(f"unknown variance option {self.variance!r}")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")

    def with_learner(self, spec: LearnerSpec) -> "EstimatorConfig":
        return replace(self, learner=spec)


@dataclass
class IOpFit:
    estimates: dict[str, IOpEstimate]
    plugin: dict[str, IOpEstimate | None]
    folds: FoldAssignment
    crossfit: dict[str, CrossFitFV]
    full_fv: np.ndarray


def estimate_iop(d: Dataset, cfg: EstimatorConfig, folds: FoldAssignment | None = None) -> IOpFit:
    """Cross-fit the first stage, then compute debiased (and plug-in) IOp for each index."""
    folds = make_folds(d.n, cfg.K, cfg.seed) if folds is None else folds
    spec = cfg.learner
    cfs: dict[str, CrossFitFV] = {}
    need_fold = "mld" in cfg.indices or cfg.mode == "fold" or cfg.variance == "crossfit"
    if need_fold:
        cfs["fold"] = crossfit_fitted_values(d, spec, folds, "fold")
    if cfg.mode == "pair_block" and "gini" in cfg.indices:
        cfs["pair_block"] = crossfit_fitted_values(d, spec, folds, "pair_block")
    full_fv = full_sample_fitted_values(d, spec)

    estimates, plugin = {}, {}
    for index in cfg.indices:
        if index == "gini":
            cf = cfs.get(cfg.mode, cfs.get("fold"))
            if cfg.variance == "crossfit":
                est = debiased_gini_iop(d, cf, cfg.level, variance="full", full_fv=cfs["fold"].values)
                est.metadata["variance"] = "crossfit"
            else:
                est = debiased_gini_iop(d, cf, cfg.level, full_fv=full_fv)
        else:
            est = debiased_mld_iop(d, cfs["fold"], cfg.level, cfg.mld_floor)
        est.metadata["learner"] = spec.label
        if cfg.relative:
            try:
                est = relative_iop(est, d)
            except DomainError as exc:
                warnings.warn(f"relative IOp skipped: {exc}")
        estimates[index] = est
        try:
            plugin[index] = plugin_iop(full_fv, d.w, index, cfg.level)
        except DomainError as exc:
            warnings.warn(f"plug-in {index} skipped: {exc}")
            plugin[index] = None
    return IOpFit(estimates, plugin, folds, cfs, full_fv)


__all__ = [
    "EstimatorConfig",
    "INDICES",
    "IOpEstimate",
    "IOpFit",
    "RelativeIOp",
    "debiased_gini_iop",
    "debiased_gini_parts",
    "debiased_mld_iop",
    "estimate_iop",
    "gini",
    "gini_h1",
    "inequality_influence",
    "mld",
    "plugin_iop",
    "relative_iop",
    "se_from_influence",
    "signed_pair_sum",
    "signed_row_sums",
    "z_interval",
]
