"""Command-line interface: ``iop <command> --config run.yaml [overrides]``.

Every command writes ``<output>/<command>.json`` (results plus the fully
resolved run configuration, its hash, the seed and the library version)
and one or more CSV tables. Feeding an output JSON back as ``--config``
reruns it with the same settings.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .crossfit import make_folds
from .data import ISCED_YEARS, Dataset, Predicate, Schema, isced_to_years, load_dataset, partition_by, subset
from .effects import compare_iop, effect_table, group_test, mobility_slope, ols_line
from .errors import ConfigError, DataError, IOpError, LoadError
from .iop import INDICES, EstimatorConfig, IOpEstimate, estimate_iop, gini, mld
from .learners import LearnerSpec, select_best
from .sim import DGPSpec, five_cell_dgp, monte_carlo, two_circumstance_dgp, with_noise_circumstances

log = logging.getLogger("iopml")

COMMANDS = ("estimate", "peffect", "test", "group", "mobility", "simulate")
NAMED_DGPS = {"five_cell": five_cell_dgp, "two_circumstance": two_circumstance_dgp}
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str = "estimate"
    input: list[str] = field(default_factory=list)
    schema: Any = None
    index: str = "gini"
    learners: list[Any] = field(default_factory=lambda: [{"kind": "forest"}])
    K: int = 5
    seed: int = 0
    mode: str = "pair_block"
    level: float = 0.95
    variance: str = "full"
    relative: bool = True
    floor: float | None = None
    output: str = "out"
    subset: list[str] = field(default_factory=list)
    by: str | None = None
    jobs: int = 1
    learner_spread: bool = False
    # peffect / group
    circumstances: list[str] | None = None
    group: list[str] = field(default_factory=list)
    # test
    estimates: list[str] = field(default_factory=list)
    populations: list[str] = field(default_factory=list)
    cell: str | None = None
    compare_relative: bool = False
    # mobility
    parent: str | None = None
    levels: list[str] = field(default_factory=lambda: ["low", "medium", "high"])
    gatsby: dict | None = None
    # simulate
    dgp: Any = "five_cell"
    noise_circumstances: int = 0
    n: int = 2000
    R: int = 100

    @classmethod
    def from_mapping(cls, cfg: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(cfg) - names
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of every setting that can change results (not output location or worker count)."""
        cfg = {k: v for k, v in self.to_dict().items() if k not in ("output", "jobs")}
        blob = json.dumps(cfg, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # derived objects ------------------------------------------------------

    def indices(self) -> tuple[str, ...]:
        if self.index == "both":
            return INDICES
        if self.index not in INDICES:
            raise ConfigError(f"index must be one of gini, mld, both; got {self.index!r}")
        return (self.index,)

    def learner_specs(self) -> list[tuple[str, LearnerSpec]]:
        if not self.learners:
            raise ConfigError("no learners configured")
        out, seen = [], {}
        for entry in self.learners:
            if isinstance(entry, str):
                entry = {"kind": entry}
            if not isinstance(entry, dict):
                raise ConfigError(f"cannot read learner entry {entry!r}")
            entry = dict(entry)
            name = str(entry.pop("name", entry.get("kind")))
            spec = LearnerSpec.from_dict({"seed": self.seed, **entry})
            seen[name] = seen.get(name, 0) + 1
            if seen[name] > 1:
                name = f"{name}{seen[name]}"
            out.append((name, spec))
        return out

    def estimator(self, spec: LearnerSpec) -> EstimatorConfig:
        return EstimatorConfig(
            indices=self.indices(),
            learner=spec,
            K=int(self.K),
            seed=int(self.seed),
            mode=self.mode,
            level=float(self.level),
            variance=self.variance,
            relative=bool(self.relative),
            mld_floor=self.floor,
        )

    def dgp_spec(self) -> DGPSpec:
        if isinstance(self.dgp, str):
            if self.dgp not in NAMED_DGPS:
                raise ConfigError(f"unknown DGP {self.dgp!r}; named DGPs are {sorted(NAMED_DGPS)}")
            spec = NAMED_DGPS[self.dgp]()
        elif isinstance(self.dgp, dict):
            spec = DGPSpec.from_dict(self.dgp)
        else:
            raise ConfigError("dgp must be a name or a mapping")
        if self.noise_circumstances:
            spec = with_noise_circumstances(spec, int(self.noise_circumstances))
        return spec

    def validate(self):
        """Check everything that can be checked without touching data."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not isinstance(self.K, int) or self.K < 2:
            raise ConfigError("K must be an integer >= 2")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError("jobs must be a positive integer")
        specs = self.learner_specs()
        self.estimator(specs[0][1])
        for p in self.subset + self.populations:
            _predicates(p)
        needs_data = self.command in ("estimate", "peffect", "group", "mobility") or bool(self.populations)
        if needs_data:
            if not self.input:
                raise ConfigError("no input data file given")
            self.read_schema()
        if self.command == "test":
            if bool(self.estimates) == bool(self.populations):
                raise ConfigError("test needs either two estimate files or two population predicates")
            if len(self.estimates or self.populations) != 2:
                raise ConfigError("test compares exactly two estimates or populations")
        if self.command == "group" and not self.group:
            raise ConfigError("group needs a non-empty list of circumstances")
        if self.command == "mobility" and not self.parent:
            raise ConfigError("mobility needs the parent column")
        if self.command == "mobility" and self.gatsby is not None:
            unknown = set(self.gatsby) - {"file", "label", "x"}
            if unknown or "file" not in self.gatsby or "x" not in self.gatsby:
                raise ConfigError("gatsby needs keys file, x and optionally label")
        if self.command == "simulate":
            self.dgp_spec()
            if self.n < 2 or self.R < 1:
                raise ConfigError("simulate needs n >= 2 and R >= 1")

    def read_schema(self) -> Schema:
        if self.schema is None:
            raise ConfigError("no schema given")
        if isinstance(self.schema, dict):
            return Schema.from_mapping(self.schema)
        try:
            return Schema.from_file(self.schema)
        except OSError as exc:
            raise ConfigError(f"cannot read schema {self.schema}: {exc}") from exc


def _predicates(text: str) -> list[Predicate]:
    return [Predicate.parse(part) for part in str(text).split("&")]


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} is not a mapping")
    # an earlier run's output JSON carries its configuration
    if "provenance" in cfg:
        cfg = dict(cfg["provenance"]["config"])
    return cfg


# --------------------------------------------------------------------------
# formatting


def fmt(x, digits: int = 3) -> str:
    """Round and print without trailing zeros: 0.0600 -> '0.06'."""
    if x is None or not math.isfinite(x):
        return ""
    return np.format_float_positional(round(float(x), digits), trim="-")


def fmt_ci(theta, lo, hi, digits: int = 3) -> str:
    return f"{fmt(theta, digits)} ({fmt(lo, digits)},{fmt(hi, digits)})"


def fmt_pct(theta, lo, hi) -> str:
    return f"{100 * theta:.0f} % ({100 * lo:.0f}%,{100 * hi:.0f}%)"


# --------------------------------------------------------------------------
# per-cell work


def load_cells(cfg: RunConfig) -> list[tuple[str, Dataset]]:
    schema = cfg.read_schema()
    cells = []
    for path in cfg.input:
        d = load_dataset(path, schema)
        if cfg.subset:
            d = subset(d, [p for s in cfg.subset for p in _predicates(s)])
        stem = Path(path).stem
        if cfg.by:
            for lab, part in partition_by(d, cfg.by).items():
                cells.append((lab if len(cfg.input) == 1 else f"{stem}:{lab}", part))
        else:
            cells.append((stem, d))
    return cells


def _select(cfg: RunConfig, d: Dataset):
    folds = make_folds(d.n, cfg.K, cfg.seed)
    named = cfg.learner_specs()
    # with a single learner this only computes its cross-validated RMSE
    best, rmses = select_best([s for _, s in named], d, folds)
    pos = [s for _, s in named].index(best)
    return folds, named[pos][0], best, dict(zip([n for n, _ in named], rmses))


def _inequality(d: Dataset, index: str) -> float:
    return gini(d.y, d.w) if index == "gini" else mld(d.y, d.w)


def _estimate_cell(cfg: RunConfig, label: str, d: Dataset) -> list[dict]:
    folds, name, best, rmses = _select(cfg, d)
    fit = estimate_iop(d, cfg.estimator(best), folds)
    spread = {}
    named = cfg.learner_specs()
    if cfg.learner_spread and len(named) > 1:
        per = {i: ([], []) for i in cfg.indices()}
        for _, spec in named:
            f = fit if spec == best else estimate_iop(d, cfg.estimator(spec), folds)
            for i in cfg.indices():
                per[i][0].append(f.estimates[i].theta)
                pl = f.plugin[i]
                per[i][1].append(np.nan if pl is None else pl.theta)
        for i, (deb, plug) in per.items():
            sd_d, sd_p = float(np.std(deb, ddof=1)), float(np.nanstd(plug, ddof=1))
            spread[i] = sd_p / sd_d if sd_d > 0 else float("inf")
    rows = []
    for i in cfg.indices():
        est = fit.estimates[i]
        pl = fit.plugin[i]
        rows.append(
            {
                "cell": label,
                "index": i,
                "mean": d.weighted_mean(),
                "inequality": est.relative.inequality if est.relative else _inequality(d, i),
                "estimate": est.to_dict(),
                "plugin": None if pl is None else pl.theta,
                "learner": name,
                "learner_spec": best.to_dict(),
                "rmse": rmses[name],
                "rmses": rmses,
                "spread_ratio": spread.get(i),
                "n": d.n,
            }
        )
    return rows


def _peffect_cell(cfg: RunConfig, label: str, d: Dataset) -> list[dict]:
    _, name, best, _ = _select(cfg, d)
    effects = effect_table(d, cfg.estimator(best), cfg.circumstances)
    return [{"cell": label, "learner": name, **pe.to_dict()} for pe in effects]


def _group_cell(cfg: RunConfig, label: str, d: Dataset) -> list[dict]:
    _, name, best, _ = _select(cfg, d)
    ecfg = cfg.estimator(best)
    return [
        {"cell": label, "learner": name, **group_test(d, cfg.group, ecfg, i).to_dict()} for i in cfg.indices()
    ]


def _populations_cell(cfg: RunConfig, label: str, d: Dataset) -> list[dict]:
    fits = []
    for text in cfg.populations:
        part = subset(d, _predicates(text))
        folds, name, best, _ = _select(cfg, part)
        fits.append((name, estimate_iop(part, cfg.estimator(best), folds)))
    rows = []
    for i in cfg.indices():
        a, b = fits[0][1].estimates[i], fits[1][1].estimates[i]
        res = compare_iop(a, b, relative=cfg.compare_relative)
        rows.append(
            {
                "cell": label,
                "population_a": cfg.populations[0],
                "population_b": cfg.populations[1],
                "theta_a": a.theta,
                "theta_b": b.theta,
                "learner_a": fits[0][0],
                "learner_b": fits[1][0],
                **res.to_dict(),
            }
        )
    return rows


def _mobility_cell(cfg: RunConfig, label: str, d: Dataset) -> list[dict]:
    res = mobility_slope(d, cfg.parent, cfg.levels, cfg.level)
    return [{"cell": label, **res.to_dict()}]


def _run_cells(cfg: RunConfig, work: Callable, cells) -> list[dict]:
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(work, [cfg] * len(cells), [c[0] for c in cells], [c[1] for c in cells]))
    else:
        parts = [work(cfg, lab, d) for lab, d in cells]
    return [row for part in parts for row in part]


# --------------------------------------------------------------------------
# commands


def _ratio(x) -> str:
    # identical debiased estimates across learners give an infinite ratio
    if x is None:
        return ""
    return "inf" if math.isinf(x) else fmt(x, 1)


def _table1(rows: list[dict]) -> pd.DataFrame:
    out = []
    for r in rows:
        e = r["estimate"]
        rel = fmt_pct(e["relative"], e["relative_ci_low"], e["relative_ci_high"]) if "relative" in e else ""
        out.append(
            {
                "Cell": r["cell"],
                "Index": r["index"],
                "Mean": fmt(r["mean"], 1),
                "Inequality": fmt(r["inequality"], 3),
                "Debiased": fmt_ci(e["theta"], e["ci_low"], e["ci_high"]),
                "Debiased/Inequality": rel,
                "Estimates std. ratio": _ratio(r["spread_ratio"]),
                "Best Performer": r["learner"],
                "RMSE": fmt(r["rmse"], 2),
                "n": r["n"],
            }
        )
    return pd.DataFrame(out)


def _flat_estimate(r: dict) -> dict:
    e = dict(r["estimate"])
    meta = e.pop("metadata", {})
    return {
        "cell": r["cell"],
        **e,
        "plugin": r["plugin"],
        "mean": r["mean"],
        "learner": r["learner"],
        "rmse": r["rmse"],
        "mode": meta.get("mode"),
        "K": meta.get("K"),
    }


def cmd_estimate(cfg: RunConfig) -> dict:
    rows = _run_cells(cfg, _estimate_cell, load_cells(cfg))
    return {
        "results": rows,
        "tables": {"estimate": pd.DataFrame([_flat_estimate(r) for r in rows]), "table1": _table1(rows)},
    }


def cmd_peffect(cfg: RunConfig) -> dict:
    rows = _run_cells(cfg, _peffect_cell, load_cells(cfg))
    for r in rows:
        r["effect"] = fmt_ci(r["kappa"], r["ci_low"], r["ci_high"])
        r["relative_effect"] = "" if r["kappa_rel"] is None else fmt_ci(r["kappa_rel"], r["ci_rel_low"], r["ci_rel_high"])
    largest = []
    for cell in dict.fromkeys(r["cell"] for r in rows):
        mine = [r for r in rows if r["cell"] == cell]
        for index in dict.fromkeys(r["index"] for r in mine):
            best = max((r for r in mine if r["index"] == index), key=lambda r: r["kappa"])
            largest.append(
                {
                    "cell": cell,
                    "index": index,
                    "circumstance": best["circumstance"],
                    "kappa": best["kappa"],
                    "kappa_rel": best["kappa_rel"],
                }
            )
    return {
        "results": rows,
        "largest": largest,
        "tables": {"peffect": pd.DataFrame(rows), "peffect_largest": pd.DataFrame(largest)},
    }


def _estimate_records(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot read estimate file {path}: {exc}") from exc
    rows = doc.get("results") if isinstance(doc, dict) else None
    if not rows or "estimate" not in rows[0]:
        raise LoadError(f"{path} is not the output of the estimate command")
    return rows


def _pick(rows: list[dict], cell: str | None, index: str, path) -> IOpEstimate:
    cells = sorted({r["cell"] for r in rows})
    if cell is None:
        if len(cells) != 1:
            raise ConfigError(f"{path} holds several cells {cells}; choose one with --cell")
        cell = cells[0]
    hit = [r for r in rows if r["cell"] == cell and r["index"] == index]
    if not hit:
        raise DataError(f"{path} has no {index} estimate for cell {cell!r}")
    return IOpEstimate.from_dict(hit[0]["estimate"])


def cmd_test(cfg: RunConfig) -> dict:
    if cfg.populations:
        rows = _run_cells(cfg, _populations_cell, load_cells(cfg))
    else:
        a_rows, b_rows = (_estimate_records(p) for p in cfg.estimates)
        common = [i for i in cfg.indices() if any(r["index"] == i for r in a_rows) and any(r["index"] == i for r in b_rows)]
        if not common:
            raise DataError("the two estimate files share no index")
        rows = []
        for i in common:
            a = _pick(a_rows, cfg.cell, i, cfg.estimates[0])
            b = _pick(b_rows, cfg.cell, i, cfg.estimates[1])
            res = compare_iop(a, b, relative=cfg.compare_relative)
            rows.append({"estimate_a": cfg.estimates[0], "estimate_b": cfg.estimates[1], "theta_a": a.theta, "theta_b": b.theta, **res.to_dict()})
    return {"results": rows, "tables": {"test": pd.DataFrame(rows)}}


def cmd_group(cfg: RunConfig) -> dict:
    rows = _run_cells(cfg, _group_cell, load_cells(cfg))
    for r in rows:
        r["group"] = "+".join(r["group"])
    return {"results": rows, "tables": {"group": pd.DataFrame(rows)}}


def cmd_mobility(cfg: RunConfig) -> dict:
    rows = _run_cells(cfg, _mobility_cell, load_cells(cfg))
    out = {"results": rows, "tables": {"mobility": pd.DataFrame(rows)}}
    if cfg.gatsby:
        try:
            ext = pd.read_csv(cfg.gatsby["file"], dtype={cfg.gatsby.get("label", "cell"): str})
        except OSError as exc:
            raise LoadError(f"cannot read {cfg.gatsby['file']}: {exc}") from exc
        lab_col = cfg.gatsby.get("label", "cell")
        if lab_col not in ext or cfg.gatsby["x"] not in ext:
            raise ConfigError(f"gatsby file needs columns {lab_col!r} and {cfg.gatsby['x']!r}")
        xs = dict(zip(ext[lab_col].astype(str), ext[cfg.gatsby["x"]]))
        pts = [(r["cell"], xs[r["cell"]], r["statistic"]) for r in rows if r["cell"] in xs]
        if len(pts) < 2:
            raise DataError("fewer than two cells matched in the gatsby file")
        line = ols_line([p[1] for p in pts], [p[2] for p in pts], [p[0] for p in pts])
        out["gatsby"] = line
        out["tables"]["gatsby"] = pd.DataFrame(line["points"])
    return out


def cmd_simulate(cfg: RunConfig) -> dict:
    spec = cfg.dgp_spec()
    named = cfg.learner_specs()
    others = [s for _, s in named] if len(named) > 1 else None
    rep = monte_carlo(spec, cfg.estimator(named[0][1]), int(cfg.R), int(cfg.n), int(cfg.seed), learners=others)
    return {"results": rep.records, "summary": rep.summary, "mc_config": rep.config, "tables": {"simulate": rep.to_frame()}}


COMMAND_FUNCS = {
    "estimate": cmd_estimate,
    "peffect": cmd_peffect,
    "test": cmd_test,
    "group": cmd_group,
    "mobility": cmd_mobility,
    "simulate": cmd_simulate,
}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_outputs(cfg: RunConfig, result: dict) -> list[Path]:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    prov = {"config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": cfg.seed, "version": __version__}
    tables = result.pop("tables", {})
    written = []
    doc = {"provenance": prov, **result}
    p = out / f"{cfg.command}.json"
    p.write_text(json.dumps(_clean(doc), indent=2) + "\n", encoding="utf-8")
    written.append(p)
    for name, df in tables.items():
        df = df.copy()
        for col in df.columns:
            if df[col].map(lambda v: isinstance(v, (dict, list))).any():
                df[col] = df[col].map(lambda v: json.dumps(_clean(v)) if isinstance(v, (dict, list)) else v)
        df["config_hash"] = prov["config_hash"]
        df["seed"] = cfg.seed
        df["version"] = __version__
        p = out / f"{name}.csv"
        df.to_csv(p, index=False)
        written.append(p)
    return written


# --------------------------------------------------------------------------
# argument parsing


def _learner_flag(text: str) -> dict:
    """``forest`` or ``forest:n_trees=200,min_leaf=3`` -> learner entry."""
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"bad learner parameter {item!r}; use key=value")
        params[key.strip()] = yaml.safe_load(val)
    return {"kind": kind.strip(), "params": params} if params else {"kind": kind.strip()}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML run configuration (or an earlier output JSON)")
    p.add_argument("--input", nargs="+", help="input CSV file(s)")
    p.add_argument("--schema", help="YAML schema naming outcome, weight and circumstance columns")
    p.add_argument("--index", choices=("gini", "mld", "both"))
    p.add_argument("--learner", action="append", dest="learners", type=_learner_flag, help="kind[:key=val,...]; repeat for several")
    p.add_argument("--K", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("fold", "pair_block"))
    p.add_argument("--level", type=float)
    p.add_argument("--variance", choices=("full", "crossfit"))
    p.add_argument("--floor", type=float, help="truncate MLD fitted values at this floor instead of failing")
    p.add_argument("--output", help="output directory")
    p.add_argument("--subset", action="append", help="row filter such as 'birth_year<=1975' (repeatable)")
    p.add_argument("--by", help="run separately for each label of this column")
    p.add_argument("--jobs", type=int)
    p.add_argument("--learner-spread", dest="learner_spread", action="store_const", const=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iop", description="Debiased inequality of opportunity estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in [
        ("estimate", "debiased and plug-in IOp with the best first-stage learner"),
        ("peffect", "partial effect of each circumstance"),
        ("test", "compare IOp between two populations"),
        ("group", "joint significance of a group of circumstances"),
        ("mobility", "slope of the outcome on an ordered parental level"),
        ("simulate", "Monte Carlo on a synthetic population"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name == "peffect":
            p.add_argument("--circumstances", nargs="+")
        elif name == "group":
            p.add_argument("--group", nargs="+")
        elif name == "test":
            p.add_argument("--estimates", nargs=2, metavar=("A.json", "B.json"))
            p.add_argument("--populations", nargs=2, metavar=("PRED_A", "PRED_B"))
            p.add_argument("--cell")
            p.add_argument("--compare-relative", dest="compare_relative", action="store_const", const=True)
        elif name == "mobility":
            p.add_argument("--parent")
            p.add_argument("--levels", nargs="+")
        elif name == "simulate":
            p.add_argument("--dgp")
            p.add_argument("--n", type=int)
            p.add_argument("--R", type=int)
            p.add_argument("--noise-circumstances", dest="noise_circumstances", type=int)

    p = sub.add_parser("isced", help="print the ISCED level to years-of-schooling mapping")
    p.add_argument("codes", nargs="*", help="codes to map (default: all nine levels)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config_file(args.config) if args.config else {}
    skip = {"config", "set", "verbose"}
    for key, val in vars(args).items():
        if key in skip or val is None:
            continue
        cfg[key] = val
    for item in args.set:
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg[key.strip()] = yaml.safe_load(val)
    run = RunConfig.from_mapping(cfg)
    if isinstance(run.input, str):
        run = replace(run, input=[run.input])
    run.validate()
    return run


def _isced(codes: list[str]) -> int:
    codes = codes or [str(k) for k in ISCED_YEARS]
    lines = ["isced,years"] + [f"{c},{isced_to_years(c)}" for c in codes]
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    stage = "configuration"
    try:
        if args.command == "isced":
            return _isced(args.codes)
        cfg = resolve_config(args)
        stage = f"{cfg.command}"
        result = COMMAND_FUNCS[cfg.command](cfg)
        stage = "writing outputs"
        for p in write_outputs(cfg, result):
            log.info("wrote %s", p)
        return 0
    except IOpError as exc:
        if isinstance(exc, ConfigError):
            code = EXIT_CONFIG
        elif isinstance(exc, DataError):
            code = EXIT_DATA
        else:
            code = EXIT_NUMERICAL
        print(f"iop: error during {stage}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
