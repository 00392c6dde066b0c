"""Finite-cell synthetic populations, exact IOp oracles and a Monte Carlo harness."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm

from .data import Dataset
from .errors import ConfigError, IOpError
from .iop import EstimatorConfig, estimate_iop, gini

log = logging.getLogger(__name__)

NOISE_KINDS = ("none", "two_point", "uniform")


@dataclass(frozen=True)
class DGPSpec:
    """Population of circumstance cells with known conditional means.

    ``cells[c]`` gives the label of each circumstance for cell c. Outcomes
    are ``means[c] + e`` with mean-zero noise: two-point (+/- scale), uniform
    on [-scale, scale], or none.
    """

    circumstances: tuple[str, ...]
    cells: tuple[tuple[str, ...], ...]
    probs: tuple[float, ...]
    means: tuple[float, ...]
    noise: str = "two_point"
    scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "circumstances", tuple(str(c) for c in self.circumstances))
        object.__setattr__(self, "cells", tuple(tuple(str(v) for v in c) for c in self.cells))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        k = len(self.cells)
        if k == 0 or len(self.probs) != k or len(self.means) != k:
            raise ConfigError("cells, probs and means must be non-empty and of equal length")
        if any(len(c) != len(self.circumstances) for c in self.cells):
            raise ConfigError("every cell needs one label per circumstance")
        if len(set(self.cells)) != k:
            raise ConfigError("duplicate cells")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigError("cell probabilities must be nonnegative and sum to 1")
        if any(m <= 0 for m in self.means):
            raise ConfigError("cell means must be positive")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.noise!r}")
        if self.scale < 0 or (self.noise != "none" and self.scale >= min(self.means)):
            raise ConfigError("noise scale must be nonnegative and below the smallest cell mean")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cells"] = [list(c) for c in self.cells]
        for k in ("circumstances", "probs", "means"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_dict(cls, cfg: dict) -> "DGPSpec":
        allowed = {"circumstances", "cells", "probs", "means", "noise", "scale", "seed"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown DGP key(s): {sorted(unknown)}")
        cells = cfg["cells"]
        probs = cfg.get("probs") or [1.0 / len(cells)] * len(cells)
        return cls(
            tuple(cfg["circumstances"]),
            tuple(tuple(c) if isinstance(c, (list, tuple)) else (c,) for c in cells),
            tuple(probs),
            tuple(cfg["means"]),
            cfg.get("noise", "two_point"),
            float(cfg.get("scale", 0.0)),
            int(cfg.get("seed", 0)),
        )


def five_cell_dgp(noise: float = 2.0, seed: int = 0) -> DGPSpec:
    """One five-level circumstance, equiprobable cells with means 7, 10, 13, 15, 18."""
    labels = ("a", "b", "c", "d", "e")
    kind = "two_point" if noise > 0 else "none"
    return DGPSpec(("c",), tuple((lab,) for lab in labels), (0.2,) * 5, (7, 10, 13, 15, 18), kind, noise, seed)


def two_circumstance_dgp(noise: float = 2.0, seed: int = 0) -> DGPSpec:
    """Parental education (low/medium/high) and sex, both informative, with an interaction."""
    cells, means = [], []
    base = {"low": 9.0, "medium": 12.0, "high": 15.0}
    shift = {"F": 1.0, "M": 0.0}
    for edu, sex in itertools.product(("low", "medium", "high"), ("F", "M")):
        cells.append((edu, sex))
        extra = 0.5 if (edu == "high" and sex == "F") else 0.0
        means.append(base[edu] + shift[sex] + extra)
    probs = (0.2, 0.2, 0.15, 0.15, 0.15, 0.15)
    return DGPSpec(("parent", "sex"), tuple(cells), probs, tuple(means), "two_point", noise, seed)


def with_noise_circumstances(spec: DGPSpec, k: int, levels: int = 2, prefix: str = "z") -> DGPSpec:
    """Add k circumstances independent of everything, uniform over ``levels`` labels."""
    names = tuple(f"{prefix}{i + 1}" for i in range(k))
    combos = list(itertools.product(*[[str(v) for v in range(levels)]] * k))
    q = 1.0 / len(combos)
    cells, probs, means = [], [], []
    for cell, p, m in zip(spec.cells, spec.probs, spec.means):
        for combo in combos:
            cells.append(cell + combo)
            probs.append(p * q)
            means.append(m)
    return replace(
        spec,
        circumstances=spec.circumstances + names,
        cells=tuple(cells),
        probs=tuple(probs),
        means=tuple(means),
    )


def gen_dgp(spec: DGPSpec, n: int, seed: int | None = None) -> Dataset:
    """Draw n i.i.d. observations from the population."""
    if n < 2:
        raise ConfigError("need n >= 2")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    cell = rng.choice(len(spec.cells), size=n, p=np.asarray(spec.probs))
    mu = np.asarray(spec.means)[cell]
    if spec.noise == "two_point":
        e = spec.scale * (2 * rng.integers(0, 2, size=n) - 1)
    elif spec.noise == "uniform":
        e = rng.uniform(-spec.scale, spec.scale, size=n)
    else:
        e = np.zeros(n)
    labels = np.asarray(spec.cells, dtype=object)[cell]
    x = pd.DataFrame(labels.reshape(n, -1), columns=list(spec.circumstances))
    return Dataset(y=mu + e, x=x)


def conditional_means(spec: DGPSpec, circumstances: Sequence[str] | None = None):
    """Population E[Y | subset of circumstances]: (probabilities, means) per coarse cell."""
    names = spec.circumstances if circumstances is None else tuple(circumstances)
    unknown = [c for c in names if c not in spec.circumstances]
    if unknown:
        raise ConfigError(f"unknown circumstance(s) {unknown}")
    pos = [spec.circumstances.index(c) for c in names]
    mass: dict[tuple, float] = {}
    total: dict[tuple, float] = {}
    for cell, p, m in zip(spec.cells, spec.probs, spec.means):
        key = tuple(cell[i] for i in pos)
        mass[key] = mass.get(key, 0.0) + p
        total[key] = total.get(key, 0.0) + p * m
    keys = [k for k in mass if mass[k] > 0]
    return np.array([mass[k] for k in keys]), np.array([total[k] / mass[k] for k in keys])


def _gini_double_sum(p, m) -> float:
    num = 0.0
    den = 0.0
    for pa, ma in zip(p, m):
        for pb, mb in zip(p, m):
            num += pa * pb * abs(ma - mb)
            den += pa * pb * (ma + mb)
    return float(num / den)


def _mld_exact(p, m) -> float:
    return float(np.log(np.dot(p, m)) - np.dot(p, np.log(m)))


def true_iop(spec: DGPSpec, index: str = "gini", circumstances: Sequence[str] | None = None) -> float:
    """Exact population IOp (inequality of E[Y | circumstances]) by enumeration over cells."""
    p, m = conditional_means(spec, circumstances)
    if index == "gini":
        return _gini_double_sum(p, m)
    if index == "mld":
        return _mld_exact(p, m)
    raise ConfigError(f"unknown index {index!r}")


def outcome_support(spec: DGPSpec, points: int = 400):
    """Support points and probabilities of Y (uniform noise is discretised at midpoints)."""
    p = np.asarray(spec.probs)
    m = np.asarray(spec.means)
    if spec.noise == "none" or spec.scale == 0:
        return p, m
    if spec.noise == "two_point":
        offs, q = np.array([-spec.scale, spec.scale]), np.array([0.5, 0.5])
    else:
        offs = spec.scale * (2 * (np.arange(points) + 0.5) / points - 1)
        q = np.full(points, 1.0 / points)
    return np.outer(p, q).ravel(), (m[:, None] + offs[None, :]).ravel()


def true_inequality(spec: DGPSpec, index: str = "gini") -> float:
    """Population inequality of Y itself."""
    p, y = outcome_support(spec)
    if index == "gini":
        return gini(y, p)
    if index == "mld":
        return _mld_exact(p, y)
    raise ConfigError(f"unknown index {index!r}")


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MCReport:
    records: list[dict]
    summary: dict
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "summary": self.summary, "records": self.records}, indent=2)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records)


def _replication_seeds(seed: int, R: int):
    children = np.random.SeedSequence(seed).spawn(R)
    return [tuple(int(v) for v in c.generate_state(2)) for c in children]


def _rep_config(cfg: EstimatorConfig, fold_seed: int) -> EstimatorConfig:
    return replace(cfg, seed=fold_seed, learner=cfg.learner.with_seed(fold_seed))


def monte_carlo(
    spec: DGPSpec,
    cfg: EstimatorConfig,
    R: int,
    n: int,
    seed: int = 0,
    learners: Sequence | None = None,
) -> MCReport:
    """Repeat estimation on fresh samples and summarise against the exact truth.

    Per index the summary reports the truth, mean estimate, bias, Monte
    Carlo sd, mean standard error and CI coverage for the debiased
    estimator (and for relative IOp), plus the bias of the in-sample plug-in.
    With ``learners`` every replication is re-estimated with each learner on
    the same folds and the summary gives the mean across-learner sd of the
    plug-in and debiased estimates.
    """
    if R < 1:
        raise ConfigError("need R >= 1")
    truth = {i: true_iop(spec, i) for i in cfg.indices}
    ineq = {i: true_inequality(spec, i) for i in cfg.indices}
    records = []
    for r, (data_seed, fold_seed) in enumerate(_replication_seeds(seed, R)):
        d = gen_dgp(spec, n, data_seed)
        rcfg = _rep_config(cfg, fold_seed)
        try:
            fit_ = estimate_iop(d, rcfg)
        except IOpError as exc:
            records.append({"rep": r, "error": str(exc)})
            continue
        spread = {}
        if learners:
            per = {i: ([], []) for i in cfg.indices}
            for spec_l in learners:
                try:
                    f_l = estimate_iop(d, rcfg.with_learner(spec_l.with_seed(fold_seed)), fit_.folds)
                except IOpError as exc:
                    log.warning("learner %s failed in replication %d: %s", spec_l.label, r, exc)
                    continue
                for i in cfg.indices:
                    per[i][0].append(f_l.estimates[i].theta)
                    pl = f_l.plugin[i]
                    per[i][1].append(np.nan if pl is None else pl.theta)
            for i in cfg.indices:
                spread[i] = (float(np.std(per[i][0], ddof=1)), float(np.nanstd(per[i][1], ddof=1)))
        for i in cfg.indices:
            est = fit_.estimates[i]
            pl = fit_.plugin[i]
            rec = {
                "rep": r,
                "index": i,
                "theta": est.theta,
                "se": est.se,
                "ci_low": est.ci[0],
                "ci_high": est.ci[1],
                "covered": bool(est.ci[0] <= truth[i] <= est.ci[1]),
                "plugin": None if pl is None else pl.theta,
            }
            if est.relative is not None:
                rt = truth[i] / ineq[i]
                rec.update(
                    relative=est.relative.theta,
                    relative_se=est.relative.se,
                    relative_covered=bool(est.relative.ci[0] <= rt <= est.relative.ci[1]),
                )
            if i in spread:
                rec["learner_sd_debiased"], rec["learner_sd_plugin"] = spread[i]
            records.append(rec)

    summary = {}
    for i in cfg.indices:
        rows = [x for x in records if x.get("index") == i]
        if not rows:
            summary[i] = {"truth": truth[i], "replications": 0}
            continue
        th = np.array([x["theta"] for x in rows])
        se = np.array([x["se"] for x in rows])
        s = {
            "truth": truth[i],
            "replications": len(rows),
            "mean": float(th.mean()),
            "bias": float(th.mean() - truth[i]),
            "sd": float(th.std(ddof=1)) if len(rows) > 1 else 0.0,
            "mean_se": float(se.mean()),
            "coverage": float(np.mean([x["covered"] for x in rows])),
        }
        pls = np.array([np.nan if x["plugin"] is None else x["plugin"] for x in rows])
        s["plugin_mean"] = float(np.nanmean(pls))
        s["plugin_bias"] = float(np.nanmean(pls) - truth[i])
        if "relative" in rows[0]:
            rel = np.array([x["relative"] for x in rows])
            s["relative_truth"] = truth[i] / ineq[i]
            s["relative_bias"] = float(rel.mean() - s["relative_truth"])
            s["relative_sd"] = float(rel.std(ddof=1)) if len(rows) > 1 else 0.0
            s["relative_mean_se"] = float(np.mean([x["relative_se"] for x in rows]))
            s["relative_coverage"] = float(np.mean([x["relative_covered"] for x in rows]))
        if "learner_sd_debiased" in rows[0]:
            sd_d = float(np.mean([x["learner_sd_debiased"] for x in rows]))
            sd_p = float(np.mean([x["learner_sd_plugin"] for x in rows]))
            s["learner_sd_debiased"] = sd_d
            s["learner_sd_plugin"] = sd_p
            s["learner_sd_ratio"] = sd_p / sd_d if sd_d > 0 else float("inf")
        summary[i] = s
    summary["errors"] = sum(1 for x in records if "error" in x)
    config = {
        "dgp": spec.to_dict(),
        "estimator": {
            "indices": list(cfg.indices),
            "learner": cfg.learner.to_dict(),
            "K": cfg.K,
            "mode": cfg.mode,
            "level": cfg.level,
            "variance": cfg.variance,
        },
        "R": R,
        "n": n,
        "seed": seed,
    }
    return MCReport(records, summary, config)


def compare_size(spec: DGPSpec, cfg: EstimatorConfig, R: int, n: int, seed: int = 0, alpha: float = 0.05) -> dict:
    """Rejection rate of ``compare_iop`` on pairs of independent samples from one DGP.

    The null holds by construction, so the rate estimates the test's size.
    """
    from .effects import compare_iop

    index = cfg.indices[0]
    cfg = replace(cfg, indices=(index,), relative=False)
    z = []
    for (a_seed, fa), (b_seed, fb) in zip(_replication_seeds(seed, R), _replication_seeds(seed + 1, R)):
        a = estimate_iop(gen_dgp(spec, n, a_seed), _rep_config(cfg, fa)).estimates[index]
        b = estimate_iop(gen_dgp(spec, n, b_seed), _rep_config(cfg, fb)).estimates[index]
        z.append(compare_iop(a, b).z)
    z = np.asarray(z)
    return {"rate": float(np.mean(np.abs(z) > norm.isf(alpha / 2))), "R": R, "n": n, "z_mean": float(z.mean()), "z_sd": float(z.std(ddof=1))}


def group_rejection(
    spec: DGPSpec, group: Sequence[str], cfg: EstimatorConfig, R: int, n: int, seed: int = 0, alpha: float = 0.05
) -> dict:
    """Rejection rate of ``group_test`` for ``group`` over fresh samples."""
    from .effects import group_test

    index = cfg.indices[0]
    cfg = replace(cfg, indices=(index,), relative=False)
    z = []
    for data_seed, fold_seed in _replication_seeds(seed, R):
        z.append(group_test(gen_dgp(spec, n, data_seed), list(group), _rep_config(cfg, fold_seed)).z)
    z = np.asarray(z)
    return {"rate": float(np.mean(np.abs(z) > norm.isf(alpha / 2))), "R": R, "n": n, "z_mean": float(z.mean()), "z_sd": float(z.std(ddof=1))}


def true_partial_effects(spec: DGPSpec, indices: Sequence[str] = ("gini", "mld")) -> dict:
    """Population kappa for dropping each circumstance, keyed by (circumstance, index)."""
    out = {}
    for i in indices:
        full = true_iop(spec, i)
        for m in spec.circumstances:
            out[(m, i)] = full - true_iop(spec, i, [c for c in spec.circumstances if c != m])
    return out


def partial_effect_coverage(spec: DGPSpec, cfg: EstimatorConfig, R: int, n: int, seed: int = 0, width: float = 3.0) -> dict:
    """Share of replications where each estimated kappa lies within ``width`` se of the population kappa."""
    from .effects import effect_table

    cfg = replace(cfg, relative=False)
    truth = true_partial_effects(spec, cfg.indices)
    z = {k: [] for k in truth}
    for data_seed, fold_seed in _replication_seeds(seed, R):
        for pe in effect_table(gen_dgp(spec, n, data_seed), _rep_config(cfg, fold_seed)):
            k = (pe.name, pe.index)
            z[k].append((pe.kappa - truth[k]) / pe.se)
    return {
        f"{m}/{i}": {
            "truth": truth[(m, i)],
            "within": float(np.mean(np.abs(v) <= width)),
            "z_mean": float(np.mean(v)),
            "z_sd": float(np.std(v, ddof=1)),
        }
        for (m, i), v in z.items()
    }


__all__ = [
    "DGPSpec",
    "MCReport",
    "compare_size",
    "conditional_means",
    "five_cell_dgp",
    "gen_dgp",
    "group_rejection",
    "monte_carlo",
    "outcome_support",
    "partial_effect_coverage",
    "true_inequality",
    "true_iop",
    "true_partial_effects",
    "two_circumstance_dgp",
    "with_noise_circumstances",
]
