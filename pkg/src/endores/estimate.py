"""OLS, 2SLS and the comparative difference estimator.

All solves go through a reduced QR factorization; (X'X)^-1 is only ever
formed as R^-1 R^-T for the covariance estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from endores.errors import RankDeficient, ShapeMismatch, WeakInstrumentWarning

COND_LIMIT = 1e12
WEAK_INSTRUMENT_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class FitResult:
    beta_hat: np.ndarray
    residuals: np.ndarray
    sigma2_hat: float
    cov_hat: np.ndarray
    condition_number: float
    n: int
    p: int
    # 2SLS only: smallest canonical correlation between design and instruments
    first_stage_min_corr: float | None = None
    weak_instrument: bool = False

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_hat))


@dataclass(frozen=True, eq=False)
class DiffResult:
    diff: np.ndarray
    cov: np.ndarray
    z_scores: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def _as_design(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or y.ndim != 1:
        raise ShapeMismatch("x must be 2-D and y 1-D")
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    return x, y


def _qr_checked(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray, float]:
    n, p = a.shape
    if n < p:
        raise ShapeMismatch(f"{what} has fewer rows ({n}) than columns ({p})")
    q, r = np.linalg.qr(a, mode="reduced")
    sv = np.linalg.svd(r, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond <= COND_LIMIT:
        raise RankDeficient(f"{what} condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return q, r, cond


def _inv_gram(r: np.ndarray) -> np.ndarray:
    r_inv = solve_triangular(r, np.eye(r.shape[0]))
    g = r_inv @ r_inv.T
    return (g + g.T) / 2


def ols_solve(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bare least-squares coefficients; same factorization and gate as :func:`ols_fit`.

    ``y`` may be a matrix of several right-hand sides.
    """
    q, r, _ = _qr_checked(x, "design")
    return solve_triangular(r, q.T @ y)


def ols_fit(x, y) -> FitResult:
    """Ordinary least squares of ``y`` on the columns of ``x`` (no implicit intercept)."""
    x, y = _as_design(x, y)
    n, p = x.shape
    q, r, cond = _qr_checked(x, "design")
    beta = solve_triangular(r, q.T @ y)
    resid = y - x @ beta
    dof = n - p
    sigma2 = float(resid @ resid / dof) if dof > 0 else float("nan")
    cov = sigma2 * _inv_gram(r)
    return FitResult(beta, resid, sigma2, cov, cond, n, p)


def tsls_fit(x, z, y) -> FitResult:
    """Two-stage least squares with instruments ``z`` (q >= p columns).

    Weak first stages are flagged on the result and warned about, never raised.
    """
    x, y = _as_design(x, y)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    n, p = x.shape
    if z.ndim != 2 or z.shape[0] != n:
        raise ShapeMismatch(f"z must have {n} rows")
    q_inst = z.shape[1]
    if q_inst < p:
        raise ShapeMismatch(f"need at least {p} instruments, got {q_inst}")

    qz, _, _ = _qr_checked(z, "instrument matrix")
    qx, _ = np.linalg.qr(x, mode="reduced")
    canon = np.linalg.svd(qx.T @ qz, compute_uv=False)
    min_corr = float(canon[-1]) if canon.size == p else 0.0
    weak = min_corr < WEAK_INSTRUMENT_THRESHOLD
    if weak:
        warnings.warn(
            f"weak first stage: smallest canonical correlation {min_corr:.3g}",
            WeakInstrumentWarning,
            stacklevel=2,
        )

    x_proj = qz @ (qz.T @ x)
    q, r, cond = _qr_checked(x_proj, "first-stage fitted design")
    beta = solve_triangular(r, q.T @ y)
    resid = y - x @ beta
    dof = n - p
    sigma2 = float(resid @ resid / dof) if dof > 0 else float("nan")
    cov = sigma2 * _inv_gram(r)
    return FitResult(beta, resid, sigma2, cov, cond, n, p, min_corr, weak)


def diff_estimator(fit_b: FitResult, fit_a: FitResult) -> DiffResult:
    """Change in coefficients from B to A for independent samples."""
    if fit_b.p != fit_a.p:
        raise ShapeMismatch(f"coefficient lengths differ: {fit_b.p} vs {fit_a.p}")
    diff = fit_a.beta_hat - fit_b.beta_hat
    cov = fit_a.cov_hat + fit_b.cov_hat
    se = np.sqrt(np.diag(cov))
    z = np.divide(diff, se, out=np.zeros_like(diff), where=se > 0)
    return DiffResult(diff, cov, z)
