"""Partial effects of circumstances, comparison and group tests, mobility slopes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm

from .data import Dataset
from .errors import ConfigError, DomainError, NumericalError, SchemaError
from .iop import EstimatorConfig, IOpEstimate, IOpFit, estimate_iop, se_from_influence, z_interval

MOBILITY_LEVELS = ("low", "medium", "high")


@dataclass
class TestResult:
    statistic: float
    se: float
    p_value: float
    description: str
    details: dict = field(default_factory=dict)

    # keep pytest from collecting this class
    __test__ = False

    @property
    def z(self) -> float:
        return self.statistic / self.se if self.se > 0 else float("nan")

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "se": self.se,
            "z": self.z,
            "p_value": self.p_value,
            "description": self.description,
            **self.details,
        }


def two_sided_p(statistic: float, se: float) -> float:
    """Two-sided normal p-value; a zero se gives p = 1 for a zero statistic and 0 otherwise."""
    if se > 0:
        return float(2.0 * norm.sf(abs(statistic) / se))
    return 1.0 if statistic == 0 else 0.0


@dataclass
class PartialEffect:
    """Change in IOp from removing one circumstance (or a group of them)."""

    circumstances: tuple[str, ...]
    index: str
    theta: float
    theta_drop: float
    kappa: float
    se: float
    ci: tuple[float, float]
    kappa_rel: float | None
    se_rel: float | None
    ci_rel: tuple[float, float] | None
    level: float
    influence: np.ndarray | None = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return "+".join(self.circumstances)

    @property
    def p_value(self) -> float:
        return two_sided_p(self.kappa, self.se)

    def to_dict(self) -> dict:
        rel_ci = (None, None) if self.ci_rel is None else self.ci_rel
        return {
            "circumstance": self.name,
            "index": self.index,
            "theta": self.theta,
            "theta_drop": self.theta_drop,
            "kappa": self.kappa,
            "se": self.se,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "p_value": self.p_value,
            "kappa_rel": self.kappa_rel,
            "se_rel": self.se_rel,
            "ci_rel_low": rel_ci[0],
            "ci_rel_high": rel_ci[1],
            "level": self.level,
        }


def _names(d: Dataset, U) -> tuple[str, ...]:
    names = (U,) if isinstance(U, str) else tuple(U)
    if not names:
        raise ConfigError("empty set of circumstances")
    unknown = [m for m in names if m not in d.circumstances]
    if unknown:
        raise SchemaError(f"unknown circumstance(s): {unknown}")
    if len(set(names)) != len(names):
        raise ConfigError(f"repeated circumstance in {names}")
    return names


def _fit(d: Dataset, cfg: EstimatorConfig, folds=None) -> IOpFit:
    return estimate_iop(d, replace(cfg, relative=False), folds)


def _effect(full: IOpEstimate, drop: IOpEstimate, w, names, level) -> PartialEffect:
    theta, theta_m = full.theta, drop.theta
    kappa = theta - theta_m
    phi = full.influence - drop.influence
    se = se_from_influence(phi, w)
    if theta == 0:
        rel = se_rel = ci_rel = None
    else:
        rel = kappa / theta
        phi_rel = theta_m * full.influence / theta**2 - drop.influence / theta
        se_rel = se_from_influence(phi_rel, w)
        ci_rel = z_interval(rel, se_rel, level)
    return PartialEffect(
        names, full.index, theta, theta_m, kappa, se, z_interval(kappa, se, level), rel, se_rel, ci_rel, level, phi
    )


def _effects_from(d: Dataset, full_fit: IOpFit, names, cfg: EstimatorConfig) -> dict[str, PartialEffect]:
    drop_fit = _fit(d.drop(names), cfg, full_fit.folds)
    return {
        i: _effect(full_fit.estimates[i], drop_fit.estimates[i], d.w, names, cfg.level) for i in cfg.indices
    }


def partial_effect(d: Dataset, m, cfg: EstimatorConfig, index: str | None = None) -> PartialEffect:
    """IOp with all circumstances minus IOp without ``m``, on shared folds.

    The standard error comes from the difference of the two estimators'
    influence functions on the common sample. ``m`` may be a name or a
    collection of names. The relative effect (kappa / theta) is undefined,
    and left as None, when theta is exactly zero.
    """
    index = cfg.indices[0] if index is None else index
    if index not in cfg.indices:
        raise ConfigError(f"index {index!r} not among configured indices {cfg.indices}")
    names = _names(d, m)
    return _effects_from(d, _fit(d, cfg), names, cfg)[index]


def relative_partial_effect(d: Dataset, m, cfg: EstimatorConfig, index: str | None = None) -> PartialEffect:
    """As :func:`partial_effect` but raises when the relative effect is undefined."""
    pe = partial_effect(d, m, cfg, index)
    if pe.kappa_rel is None:
        raise DomainError("IOp with all circumstances is zero; relative partial effect undefined")
    return pe


def effect_table(
    d: Dataset, cfg: EstimatorConfig, circumstances: Sequence[str] | None = None
) -> list[PartialEffect]:
    """Partial effect of each circumstance in turn, for every configured index.

    The full model is fitted once and shared across the sweep.
    """
    names = list(d.circumstances if circumstances is None else circumstances)
    for m in names:
        _names(d, m)
    full_fit = _fit(d, cfg)
    out = []
    for m in names:
        effects = _effects_from(d, full_fit, (m,), cfg)
        out.extend(effects[i] for i in cfg.indices)
    return out


def largest_effect(effects: Iterable[PartialEffect]) -> dict[str, PartialEffect]:
    """The circumstance with the largest kappa, per index."""
    best: dict[str, PartialEffect] = {}
    for pe in effects:
        cur = best.get(pe.index)
        if cur is None or pe.kappa > cur.kappa:
            best[pe.index] = pe
    return best


def group_test(d: Dataset, U, cfg: EstimatorConfig, index: str | None = None) -> TestResult:
    """Test that removing the circumstances in ``U`` leaves IOp unchanged.

    With every circumstance in ``U`` the reduced model predicts a constant,
    so this tests IOp against zero.

    When ``U`` is entirely irrelevant the true fitted values are tied across
    its levels, and the learner breaks those ties at random. The resulting
    extra variance is not in the influence-function se, so the test
    over-rejects (about 10% at the 5% level on the noise DGP in the tests).
    """
    # TODO: variance term for tie-breaking under a degenerate null (block-sign U-statistic)
    names = _names(d, U)
    pe = partial_effect(d, names, cfg, index)
    return TestResult(
        pe.kappa,
        pe.se,
        pe.p_value,
        f"{pe.index} IOp with vs. without {{{', '.join(names)}}}",
        {"index": pe.index, "theta": pe.theta, "theta_drop": pe.theta_drop, "group": list(names)},
    )


def compare_iop(a: IOpEstimate, b: IOpEstimate, relative: bool = False) -> TestResult:
    """Difference of two estimates from independent samples.

    With ``relative=True`` the relative (share-of-inequality) estimates are
    compared instead.
    """
    if a.index != b.index:
        raise ConfigError(f"cannot compare a {a.index} estimate with a {b.index} estimate")
    if relative:
        if a.relative is None or b.relative is None:
            raise ConfigError("both estimates need relative IOp attached")
        ta, sa, tb, sb = a.relative.theta, a.relative.se, b.relative.theta, b.relative.se
    else:
        if a.se is None or b.se is None:
            raise ConfigError("both estimates need standard errors (plug-in estimates have none)")
        ta, sa, tb, sb = a.theta, a.se, b.theta, b.se
    stat = ta - tb
    se = float(np.hypot(sa, sb))
    what = "relative " if relative else ""
    return TestResult(stat, se, two_sided_p(stat, se), f"difference in {what}{a.index} IOp (A - B)", {"index": a.index})


def _level_codes(values: pd.Series, levels: Sequence[str]) -> np.ndarray:
    s = values.astype(str).str.strip()
    lookup = {lab: k for k, lab in enumerate(levels)}
    if s.isin(lookup).all():
        return s.map(lookup).to_numpy(dtype=float)
    num = pd.to_numeric(s, errors="coerce")
    if num.notna().all():
        return num.to_numpy(dtype=float)
    bad = sorted(set(s[~s.isin(lookup) & num.isna()]))
    raise SchemaError(f"unrecognised levels {bad[:5]}; expected {list(levels)} or numeric codes")


def mobility_slope(
    d: Dataset, parent_col: str, levels: Sequence[str] = MOBILITY_LEVELS, level: float = 0.95
) -> TestResult:
    """Weighted least-squares slope of the outcome on an ordered parental level.

    Labels in ``levels`` are coded 0, 1, 2, ...; numeric labels are used as
    they are. The standard error is heteroskedasticity-robust (HC1).
    """
    x = _level_codes(d.column(parent_col), levels)
    y, w = d.y, d.w
    if np.unique(x).size < 2:
        raise NumericalError(f"{parent_col!r} takes a single level; slope not identified")
    W = w.sum()
    xbar, ybar = w @ x / W, w @ y / W
    xc = x - xbar
    sxx = w @ (xc * xc)
    slope = float(w @ (xc * (y - ybar)) / sxx)
    resid = y - ybar - slope * xc
    n = d.n
    V = (n / (n - 2)) * np.sum((w * xc * resid) ** 2) / sxx**2
    se = float(np.sqrt(V))
    lo, hi = z_interval(slope, se, level)
    return TestResult(
        slope,
        se,
        two_sided_p(slope, se),
        f"slope of outcome on {parent_col}",
        {"intercept": float(ybar - slope * xbar), "ci_low": lo, "ci_high": hi, "n": n, "column": parent_col},
    )


def ols_line(x, y, labels=None) -> dict:
    """Unweighted OLS fit of y on x across units (e.g. countries), with R^2 and the point table."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ConfigError("need matching x and y with at least two points")
    if np.ptp(x) == 0:
        raise NumericalError("x is constant; slope not identified")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = intercept + slope * x
    tss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - fitted) ** 2) / tss if tss > 0 else 1.0
    labels = [str(i) for i in range(x.size)] if labels is None else [str(v) for v in labels]
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "r2": float(r2),
        "points": [{"label": lab, "x": float(a), "y": float(b)} for lab, a, b in zip(labels, x, y)],
    }


__all__ = [
    "MOBILITY_LEVELS",
    "PartialEffect",
    "TestResult",
    "compare_iop",
    "effect_table",
    "group_test",
    "largest_effect",
    "mobility_slope",
    "ols_line",
    "partial_effect",
    "relative_partial_effect",
    "two_sided_p",
]
