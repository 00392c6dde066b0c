"""First-stage learners for E[Y | circumstances] behind one fit/predict interface."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd

from ..data import Dataset, DesignMatrix, encode_design, encode_terms
from ..errors import ConfigError, EncodingError, FitError, SchemaError, SelectionError
from . import linear, trees

KINDS = ("ridge", "lasso", "forest", "gbt", "mean", "cellmean")

DEFAULTS: dict[str, dict[str, Any]] = {
    # lam=None selects the penalty by inner cross-validation
    "ridge": {"lam": None, "order": 2, "min_support": 5, "n_lambda": 50, "lambda_ratio": 1e-4, "cv_folds": 5},
    "lasso": {
        "lam": None,
        "order": 2,
        "min_support": 5,
        "n_lambda": 50,
        "lambda_ratio": 1e-4,
        "cv_folds": 5,
        "tol": 1e-7,
        "max_sweeps": 10_000,
    },
    # max_depth None = unbounded; max_features "sqrt", "all" or an integer
    "forest": {"n_trees": 500, "max_depth": None, "min_leaf": 5, "max_features": "sqrt", "bootstrap": True},
    "gbt": {"n_rounds": 300, "learning_rate": 0.1, "max_depth": 3, "min_leaf": 1},
    "mean": {},
    "cellmean": {},
}


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown {self.kind} hyperparameter(s): {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        self._check(merged)

    def _check(self, p):
        if p.get("lam") is not None and p["lam"] < 0:
            raise ConfigError("penalty must be >= 0")
        if "order" in p and (int(p["order"]) != p["order"] or p["order"] < 1):
            raise ConfigError("interaction order must be an integer >= 1")
        if self.kind == "forest":
            if int(p["n_trees"]) < 1:
                raise ConfigError("forest needs at least one tree")
            if p["max_depth"] is not None and p["max_depth"] < 1:
                raise ConfigError("max_depth must be >= 1")
            if p["min_leaf"] < 1:
                raise ConfigError("min_leaf must be >= 1")
        if self.kind == "gbt":
            if int(p["n_rounds"]) < 0:
                raise ConfigError("n_rounds must be >= 0")
            if not 0 < p["learning_rate"] <= 1:
                raise ConfigError("learning_rate must be in (0, 1]")
            if p["max_depth"] < 1:
                raise ConfigError("max_depth must be >= 1")

    @property
    def label(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, cfg) -> "LearnerSpec":
        if isinstance(cfg, str):
            return cls(cfg)
        unknown = set(cfg) - {"kind", "params", "seed"}
        if unknown:
            raise ConfigError(f"unknown learner key(s): {sorted(unknown)}")
        return cls(cfg["kind"], dict(cfg.get("params") or {}), int(cfg.get("seed", 0)))

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(self.kind, {k: v for k, v in self.params.items()}, int(seed))


@dataclass
class RegressionModel:
    spec: LearnerSpec
    columns: list[str]
    state: dict

    @property
    def n_features(self) -> int:
        return len(self.columns)


def _categorical_frame(data) -> pd.DataFrame:
    if isinstance(data, Dataset):
        return data.x
    if isinstance(data, DesignMatrix):
        return pd.DataFrame(data.values.astype(int).astype(str), columns=data.column_names)
    if isinstance(data, pd.DataFrame):
        return data.astype(str)
    raise SchemaError(f"cannot read circumstance rows from {type(data).__name__}")


def _codes(x: pd.DataFrame, categories: list[list[str]]) -> np.ndarray:
    out = np.empty((len(x), len(categories)), dtype=np.int64)
    for j, (col, cats) in enumerate(zip(x.columns, categories)):
        lookup = {c: k for k, c in enumerate(cats)}
        out[:, j] = [lookup.get(v, -1) for v in x[col].to_numpy()]
    return out


def _mtry(spec, M):
    mf = spec.params["max_features"]
    if mf == "sqrt":
        return max(1, int(math.sqrt(M)))
    if mf in ("all", None):
        return max(M, 1)
    if isinstance(mf, float) and 0 < mf <= 1:
        return max(1, int(mf * M))
    return max(1, min(int(mf), M))


def fit(spec: LearnerSpec, data, y=None, w=None) -> RegressionModel:
    """Fit ``spec`` to circumstance rows.

    ``data`` is a :class:`Dataset` (outcome and weights taken from it unless
    given), a :class:`DesignMatrix` or a frame of categorical columns.
    Linear learners dummy-encode a dataset internally; tree learners use the
    raw categorical columns.
    """
    if isinstance(data, Dataset):
        y = data.y if y is None else y
        w = data.w if w is None else w
    if y is None:
        raise FitError("outcome is required")
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if len(y) == 0:
        raise FitError("empty training set")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise FitError("non-finite outcome or weight in training data")
    p = spec.params

    if spec.kind in ("ridge", "lasso"):
        if isinstance(data, DesignMatrix):
            X, terms, names = data.values, None, list(data.column_names)
        else:
            frame = _categorical_frame(data)
            if frame.shape[1] == 0:
                raise FitError("empty design: no circumstances")
            try:
                dm = encode_design(frame, p["order"], p["min_support"])
            except EncodingError as exc:
                raise FitError(str(exc)) from exc
            X, terms, names = dm.values, dm.terms, list(frame.columns)
        if len(X) != len(y):
            raise FitError("design rows do not match outcome length")
        lam = p["lam"]
        if lam is None:
            lam = linear.cv_penalty(
                spec.kind,
                X,
                y,
                w,
                n_lambda=p["n_lambda"],
                ratio=p["lambda_ratio"],
                cv_folds=p["cv_folds"],
                seed=spec.seed,
                **({"tol": p["tol"], "max_sweeps": p["max_sweeps"]} if spec.kind == "lasso" else {}),
            )
        if spec.kind == "ridge":
            b0, coef = linear.ridge_solve(X, y, w, lam)
        else:
            b0, coef = linear.lasso_solve(X, y, w, lam, p["tol"], p["max_sweeps"])
        state = {"intercept": float(b0), "coef": coef, "terms": terms, "lam": float(lam), "design_columns": names}
        return RegressionModel(spec, names, state)

    frame = _categorical_frame(data)
    if len(frame) != len(y):
        raise FitError("circumstance rows do not match outcome length")
    columns = list(frame.columns)

    if spec.kind == "mean":
        return RegressionModel(spec, columns, {"value": float(w @ y / w.sum())})

    categories = [sorted(pd.unique(frame[c])) for c in columns]
    codes = _codes(frame, categories)

    if spec.kind == "cellmean":
        if codes.shape[1] == 0:
            return RegressionModel(spec, columns, {"value": float(w @ y / w.sum()), "table": {}, "categories": []})
        pats, inv = np.unique(codes, axis=0, return_inverse=True)
        inv = inv.ravel()
        sw = np.bincount(inv, weights=w)
        swy = np.bincount(inv, weights=w * y)
        table = {tuple(row): m for row, m in zip(pats.tolist(), swy / sw)}
        return RegressionModel(
            spec, columns, {"value": float(w @ y / w.sum()), "table": table, "categories": categories}
        )

    too_many = [c for c, cats in zip(columns, categories) if len(cats) > trees.MAX_CATEGORIES]
    if too_many:
        raise FitError(f"circumstance(s) {too_many} exceed {trees.MAX_CATEGORIES} categories; recode them")
    ncat = np.array([len(c) for c in categories], dtype=np.int64)
    # canonical row order makes the fit a function of the multiset of rows
    order = np.lexsort((w, y, *codes.T[::-1])) if codes.shape[1] else np.lexsort((w, y))
    codes, ys, ws = codes[order], y[order], w[order]
    M = codes.shape[1]
    if spec.kind == "forest":
        depth = p["max_depth"] if p["max_depth"] is not None else 2**62
        state = trees.fit_forest(
            codes,
            ncat,
            ys,
            ws,
            n_trees=p["n_trees"],
            bootstrap=p["bootstrap"],
            max_depth=depth,
            min_leaf=p["min_leaf"],
            mtry=_mtry(spec, M),
            seed=spec.seed,
        )
    else:
        state = trees.fit_gbt(
            codes,
            ncat,
            ys,
            ws,
            n_rounds=p["n_rounds"],
            learning_rate=p["learning_rate"],
            max_depth=p["max_depth"],
            min_leaf=p["min_leaf"],
            seed=spec.seed,
        )
        # stagewise updates can overshoot; keep predictions inside the outcome range
        state["clip"] = (float(y.min()), float(y.max()))
    state["categories"] = categories
    state["ncat"] = ncat
    return RegressionModel(spec, columns, state)


def predict(model: RegressionModel, rows) -> np.ndarray:
    """Fitted values for circumstance rows (dataset, frame or design matrix)."""
    spec, st = model.spec, model.state
    if spec.kind in ("ridge", "lasso") and st["terms"] is None:
        if not isinstance(rows, DesignMatrix) or list(rows.column_names) != model.columns:
            raise SchemaError("rows do not carry the design columns the model was trained on")
        X = rows.values
    else:
        frame = _categorical_frame(rows)
        missing = [c for c in model.columns if c not in frame.columns]
        if missing:
            raise SchemaError(f"rows lack circumstance column(s) {missing}")
        frame = frame[model.columns]
        if spec.kind in ("ridge", "lasso"):
            X = encode_terms(frame, st["terms"])
    if spec.kind in ("ridge", "lasso"):
        out = st["intercept"] + X @ st["coef"]
    elif spec.kind == "mean":
        out = np.full(len(frame), st["value"])
    elif spec.kind == "cellmean":
        if not st["table"]:
            out = np.full(len(frame), st["value"])
        else:
            codes = _codes(frame, st["categories"])
            out = np.array([st["table"].get(tuple(r), st["value"]) for r in codes.tolist()])
    else:
        codes = _codes(frame, st["categories"])
        if codes.shape[1] == 0:
            out = np.full(len(frame), predict_constant(st))
        else:
            out = trees.predict_trees(st, codes, st["ncat"])
        if "clip" in st:
            out = np.clip(out, *st["clip"])
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise FitError("non-finite predictions")
    return out


def predict_constant(state) -> float:
    if state["roots"].shape[0] == 0:
        return float(state["base"])
    vals = state["value"][state["roots"]]
    return float(state["base"] + state["scale"] * vals.sum())


def weighted_rmse(y, yhat, w) -> float:
    return float(np.sqrt(np.sum(w * (y - yhat) ** 2) / np.sum(w)))


def cv_predictions(spec: LearnerSpec, d: Dataset, folds) -> np.ndarray:
    """Out-of-fold predictions for every row under a fold assignment."""
    out = np.empty(d.n)
    for k in range(folds.K):
        te = np.flatnonzero(folds.fold_of == k)
        tr = np.flatnonzero(folds.fold_of != k)
        model = fit(spec, d.take(tr))
        out[te] = predict(model, d.take(te))
    return out


def select_best(specs: Sequence[LearnerSpec], d: Dataset, folds) -> tuple[LearnerSpec, list[float]]:
    """Cross-validated weighted RMSE for each spec and the argmin (first wins ties).

    Specs that fail on any fold get RMSE ``nan`` and are excluded.
    """
    specs = list(specs)
    if not specs:
        raise SelectionError("no learner specs given")
    rmses = []
    for spec in specs:
        try:
            pred = cv_predictions(spec, d, folds)
            rmses.append(weighted_rmse(d.y, pred, d.w))
        except (FitError, SchemaError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"learner {spec.label} failed during selection: {exc}")
            rmses.append(float("nan"))
    ok = [i for i, r in enumerate(rmses) if np.isfinite(r)]
    if not ok:
        raise SelectionError("every learner failed")
    best = min(ok, key=lambda i: (round(rmses[i], 12), i))
    return specs[best], rmses


__all__ = [
    "DEFAULTS",
    "KINDS",
    "LearnerSpec",
    "RegressionModel",
    "cv_predictions",
    "fit",
    "predict",
    "select_best",
    "weighted_rmse",
]
