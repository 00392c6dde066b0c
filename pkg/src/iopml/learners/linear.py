"""Weighted ridge and lasso on standardized columns.

Both minimise

    (1 / 2W) * sum_i w_i (y_i - b0 - x_i' b)^2 + penalty(b)

with W = sum_i w_i, columns centred and scaled by their weighted mean and
weighted standard deviation (divisor W). The intercept is never penalised.
Ridge uses penalty (lam / 2) * ||b||^2, lasso uses lam * ||b||_1.
"""

import numpy as np
from numba import njit

from ..errors import FitError


def standardize(X, w):
    """Weighted column means and standard deviations (zero-variance columns get sd 0)."""
    wn = w / w.sum()
    mean = wn @ X
    var = wn @ (X - mean) ** 2
    sd = np.sqrt(np.maximum(var, 0.0))
    sd[sd < 1e-12] = 0.0
    return mean, sd


def _prepare(X, y, w):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or w.shape[0] != y.shape[0]:
        raise FitError("design, outcome and weights have inconsistent shapes")
    if X.shape[1] == 0:
        raise FitError("empty design")
    mean, sd = standardize(X, w)
    live = sd > 0
    Xs = np.zeros_like(X)
    Xs[:, live] = (X[:, live] - mean[live]) / sd[live]
    ybar = float(w @ y / w.sum())
    return Xs, y - ybar, w / w.sum(), mean, sd, ybar


def _unscale(beta, mean, sd, ybar):
    coef = np.zeros_like(beta)
    live = sd > 0
    coef[live] = beta[live] / sd[live]
    return ybar - coef @ mean, coef


def lambda_max(X, y, w):
    """Smallest lasso penalty at which every slope is zero."""
    Xs, yc, wn, *_ = _prepare(X, y, w)
    return float(np.max(np.abs((wn * yc) @ Xs)))


def lambda_grid(lmax, n_lambda=50, ratio=1e-4):
    if lmax <= 0:
        return np.zeros(1)
    return np.logspace(np.log10(lmax), np.log10(lmax * ratio), n_lambda)


def ridge_solve(X, y, w, lam):
    """Closed-form weighted ridge; ``lam = 0`` gives (minimum-norm) least squares."""
    if lam < 0:
        raise FitError(f"ridge penalty must be >= 0, got {lam}")
    Xs, yc, wn, mean, sd, ybar = _prepare(X, y, w)
    if lam == 0:
        sw = np.sqrt(wn)
        beta = np.linalg.lstsq(Xs * sw[:, None], yc * sw, rcond=None)[0]
    else:
        A = Xs.T @ (Xs * wn[:, None])
        b = Xs.T @ (wn * yc)
        beta = np.linalg.solve(A + lam * np.eye(A.shape[0]), b)
    if not np.all(np.isfinite(beta)):
        raise FitError("ridge solution is not finite")
    return _unscale(beta, mean, sd, ybar)


@njit(cache=True)
def _cd(Xs, yc, wn, lam, beta, tol, max_sweeps):
    n, p = Xs.shape
    r = yc.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(n):
                r[i] -= Xs[i, j] * beta[j]
    # column norms; zero-variance columns stay at zero
    norm = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += wn[i] * Xs[i, j] * Xs[i, j]
        norm[j] = s
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        delta = 0.0
        for j in range(p):
            if norm[j] <= 0.0:
                continue
            rho = 0.0
            for i in range(n):
                rho += wn[i] * Xs[i, j] * r[i]
            rho += norm[j] * beta[j]
            if rho > lam:
                new = (rho - lam) / norm[j]
            elif rho < -lam:
                new = (rho + lam) / norm[j]
            else:
                new = 0.0
            d = new - beta[j]
            if d != 0.0:
                for i in range(n):
                    r[i] -= Xs[i, j] * d
                beta[j] = new
                if abs(d) > delta:
                    delta = abs(d)
        if delta < tol:
            break
    return beta, sweeps


def lasso_path(Xs, yc, wn, lams, tol=1e-7, max_sweeps=10_000):
    """Standardized-scale coefficients along a decreasing penalty path (warm starts)."""
    Xs = np.ascontiguousarray(Xs)
    beta = np.zeros(Xs.shape[1])
    out = np.empty((len(lams), Xs.shape[1]))
    for k, lam in enumerate(lams):
        beta, _ = _cd(Xs, yc, wn, float(lam), beta.copy(), float(tol), int(max_sweeps))
        out[k] = beta
    return out


def lasso_solve(X, y, w, lam, tol=1e-7, max_sweeps=10_000):
    """Cyclic coordinate descent lasso at a single penalty."""
    if lam < 0:
        raise FitError(f"lasso penalty must be >= 0, got {lam}")
    Xs, yc, wn, mean, sd, ybar = _prepare(X, y, w)
    lmax = float(np.max(np.abs((wn * yc) @ Xs)))
    lams = [lam] if lam >= lmax else [*lambda_grid(lmax, 20, max(lam / lmax, 1e-12))[:-1], lam]
    beta = lasso_path(Xs, yc, wn, lams, tol, max_sweeps)[-1]
    if not np.all(np.isfinite(beta)):
        raise FitError("lasso solution is not finite")
    return _unscale(beta, mean, sd, ybar)


def _split(n, k, seed):
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=np.int64)
    fold[rng.permutation(n)] = np.arange(n) % k
    return fold


def cv_penalty(kind, X, y, w, *, n_lambda=50, ratio=1e-4, cv_folds=5, seed=0, tol=1e-7, max_sweeps=10_000):
    """Choose a penalty on a log grid by weighted K-fold cross-validated MSE."""
    X = np.asarray(X, dtype=float)
    Xs, yc, wn, *_ = _prepare(X, y, w)
    lmax = float(np.max(np.abs((wn * yc) @ Xs)))
    if lmax <= 0:
        return 0.0
    grid = lambda_grid(lmax, n_lambda, ratio)
    k = min(cv_folds, len(y))
    fold = _split(len(y), k, seed)
    err = np.zeros(len(grid))
    for f in range(k):
        tr, te = fold != f, fold == f
        Xtr, ytr, wtr = X[tr], y[tr], w[tr]
        Xs_tr, yc_tr, wn_tr, mean, sd, ybar = _prepare(Xtr, ytr, wtr)
        live = sd > 0
        Xte = np.zeros((te.sum(), X.shape[1]))
        Xte[:, live] = (X[te][:, live] - mean[live]) / sd[live]
        if kind == "ridge":
            A = Xs_tr.T @ (Xs_tr * wn_tr[:, None])
            b = Xs_tr.T @ (wn_tr * yc_tr)
            evals, V = np.linalg.eigh(A)
            Vb = V.T @ b
            betas = ((Vb[None, :] / (evals[None, :] + grid[:, None])) @ V.T)
        else:
            betas = lasso_path(Xs_tr, yc_tr, wn_tr, grid, tol, max_sweeps)
        pred = ybar + Xte @ betas.T
        err += (w[te][:, None] * (y[te][:, None] - pred) ** 2).sum(axis=0)
    return float(grid[int(np.argmin(err))])
