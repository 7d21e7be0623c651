"""Monte Carlo evaluation of the OLS bias functional for paired systems.

For one system the OLS error is exactly ``beta_hat - beta = (X'X)^-1 X'u``.
Its replication mean is the finite-sample bias term; its probability limit
``Sigma_x^-1 c`` is the asymptotic one. Comparing two systems (before/after
an event, or two populations) the expected change in estimates equals the
true change plus the difference of the two bias terms, so the comparison is
unbiased exactly when those terms coincide.

Replication ``i`` of a run seeded with ``s`` always uses sub-seed
``derive_seed(s, i)`` and writes into slot ``i`` of preallocated arrays, so
results are bit-identical at any worker count.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from endores.dgp import DgpSpec, generate_sample, observed_x_cov, sample_c, theoretical_c
from endores.errors import IncompatiblePair, InvalidSpec, RankDeficient, SampleTooSmall
from endores.estimate import _inv_gram, _qr_checked, tsls_fit
from endores.rng import derive_seed

log = logging.getLogger(__name__)

WORKERS_ENV = "ENDORES_WORKERS"
MAX_SKIP_FRACTION = 0.01
HOLDS = "criterion holds"
VIOLATED = "violated"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class ScenarioPair:
    spec_b: DgpSpec
    spec_a: DgpSpec
    n_b: int
    n_a: int
    reps: int
    master_seed: int

    def __post_init__(self) -> None:
        if self.spec_a.p != self.spec_b.p:
            raise IncompatiblePair(f"p differs: B has {self.spec_b.p}, A has {self.spec_a.p}")
        _check_run(self.spec_b, self.n_b, self.reps)
        _check_run(self.spec_a, self.n_a, self.reps)

    @property
    def p(self) -> int:
        return self.spec_b.p

    @property
    def seed_b(self) -> int:
        return derive_seed(self.master_seed, 0)

    @property
    def seed_a(self) -> int:
        return derive_seed(self.master_seed, 1)


@dataclass(frozen=True, eq=False)
class BiasTerm:
    finite_sample: np.ndarray
    asymptotic: np.ndarray
    mc_se: np.ndarray
    reps: int
    skipped: int = 0


@dataclass(frozen=True, eq=False)
class PropositionReport:
    mean_beta_b: np.ndarray
    mean_beta_a: np.ndarray
    mc_se_beta_b: np.ndarray
    mc_se_beta_a: np.ndarray
    true_diff: np.ndarray
    measured_diff: np.ndarray
    mc_se_diff: np.ndarray
    bias_b: BiasTerm
    bias_a: BiasTerm
    criterion_gap: np.ndarray
    gap_mc_se: np.ndarray
    asymptotic_gap: np.ndarray
    identity_residual: np.ndarray
    identity_tolerance: np.ndarray
    tol_multiplier: float
    verdict: str

    @property
    def identity_holds(self) -> bool:
        return bool(np.all(np.abs(self.identity_residual) <= self.identity_tolerance))

    @property
    def valid(self) -> bool:
        """False when more than 1% of either side's replications were rank deficient."""
        return all(
            b.skipped <= MAX_SKIP_FRACTION * (b.reps + b.skipped) for b in (self.bias_b, self.bias_a)
        )


@dataclass(frozen=True, eq=False)
class FactorizationResult:
    """Joint expectation E[(X'X)^-1 c_hat] against the product E[(X'X)^-1] E[c_hat]."""

    joint: np.ndarray
    product: np.ndarray
    gap: np.ndarray
    mc_se: np.ndarray
    joint_mc_se: np.ndarray
    product_mc_se: np.ndarray
    reps: int
    skipped: int = 0


@dataclass(frozen=True, eq=False)
class _Draws:
    beta_hat: np.ndarray
    bias: np.ndarray
    inv_gram: np.ndarray | None
    c_hat: np.ndarray | None
    ok: np.ndarray

    @property
    def skipped(self) -> int:
        return int((~self.ok).sum())


def _check_run(spec: DgpSpec, n: int, reps: int) -> None:
    if not isinstance(spec, DgpSpec):
        raise InvalidSpec("expected a DgpSpec")
    if reps < 2:
        raise ValueError(f"reps must be >= 2, got {reps}")
    if n <= spec.p:
        raise SampleTooSmall(f"need n >= p + 1 = {spec.p + 1}, got {n}")


def _chunks(reps: int, workers: int) -> list[range]:
    size = -(-reps // workers)
    return [range(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def _run_indexed(fill, reps: int, workers: int | None) -> None:
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or reps < 2 * workers:
        fill(range(reps))
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fill, _chunks(reps, workers)))


def _simulate(
    spec: DgpSpec, n: int, reps: int, seed: int, *, factors: bool = False, workers: int | None = None
) -> _Draws:
    p = spec.p
    beta_hat = np.zeros((reps, p))
    bias = np.zeros((reps, p))
    inv_gram = np.zeros((reps, p, p)) if factors else None
    c_hat = np.zeros((reps, p)) if factors else None
    ok = np.ones(reps, dtype=bool)

    def fill(idx: range) -> None:
        for i in idx:
            s = generate_sample(spec, n, derive_seed(seed, i))
            try:
                q, r, _ = _qr_checked(s.x, "design")
            except RankDeficient:
                ok[i] = False
                continue
            sol = solve_triangular(r, q.T @ np.column_stack((s.y, s.u)))
            beta_hat[i] = sol[:, 0]
            bias[i] = sol[:, 1]
            if factors:
                inv_gram[i] = _inv_gram(r)
                c_hat[i] = sample_c(s)

    _run_indexed(fill, reps, workers)
    if not ok.all():
        log.warning("skipped %d of %d rank-deficient replications", (~ok).sum(), reps)
    return _Draws(beta_hat, bias, inv_gram, c_hat, ok)


def _mean_se(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = values.shape[0]
    mean = values.mean(axis=0)
    if k < 2:
        return mean, np.full(mean.shape, np.nan)
    return mean, values.std(axis=0, ddof=1) / np.sqrt(k)


def asymptotic_bias(spec: DgpSpec) -> np.ndarray:
    """Probability limit of the OLS error: observed-design covariance inverse times c."""
    return np.linalg.solve(observed_x_cov(spec), theoretical_c(spec))


def _bias_from_draws(spec: DgpSpec, draws: _Draws) -> BiasTerm:
    mean, se = _mean_se(draws.bias[draws.ok])
    return BiasTerm(mean, asymptotic_bias(spec), se, int(draws.ok.sum()), draws.skipped)


def bias_term(
    spec: DgpSpec, n: int, reps: int, seed: int, *, workers: int | None = None
) -> BiasTerm:
    """Finite-sample E[(X'X)^-1 X'u] by Monte Carlo, alongside its limit."""
    _check_run(spec, n, reps)
    return _bias_from_draws(spec, _simulate(spec, n, reps, seed, workers=workers))


def mc_expectation_beta(
    spec: DgpSpec, n: int, reps: int, seed: int, *, workers: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and standard error of the OLS coefficients."""
    _check_run(spec, n, reps)
    draws = _simulate(spec, n, reps, seed, workers=workers)
    return _mean_se(draws.beta_hat[draws.ok])


def mc_expectation_tsls(
    spec: DgpSpec,
    n: int,
    reps: int,
    seed: int,
    instrument: str = "v",
    *,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and standard error of 2SLS using a latent as instrument.

    ``instrument`` names an entry of ``Sample.latents`` (e.g. ``"v"`` for the
    structural shock of a simultaneity spec). Uses the same sub-seeds as the
    OLS routines, so both estimators see identical samples.
    """
    _check_run(spec, n, reps)
    p = spec.p
    est = np.zeros((reps, p))
    ok = np.ones(reps, dtype=bool)

    def fill(idx: range) -> None:
        for i in idx:
            s = generate_sample(spec, n, derive_seed(seed, i))
            if instrument not in s.latents:
                raise InvalidSpec(
                    f"instrument {instrument!r} not available; have {sorted(s.latents)}"
                )
            try:
                est[i] = tsls_fit(s.x, s.latents[instrument], s.y).beta_hat
            except RankDeficient:
                ok[i] = False

    _run_indexed(fill, reps, workers)
    if not ok.all():
        log.warning("skipped %d of %d rank-deficient replications", (~ok).sum(), reps)
    return _mean_se(est[ok])


def proposition_check(
    pair: ScenarioPair, tol_multiplier: float = 4.0, *, workers: int | None = None
) -> PropositionReport:
    """Estimate every term of the comparative-bias decomposition for ``pair``.

    The verdict says whether the two finite-sample bias terms agree within
    ``tol_multiplier`` Monte Carlo standard errors. The identity residual
    (measured change minus true change minus bias gap) is reported regardless
    of the verdict and should be statistically zero for every pair.
    """
    if not tol_multiplier > 0:
        raise ValueError("tol_multiplier must be positive")
    draws_b = _simulate(pair.spec_b, pair.n_b, pair.reps, pair.seed_b, workers=workers)
    draws_a = _simulate(pair.spec_a, pair.n_a, pair.reps, pair.seed_a, workers=workers)
    return _assemble(pair, draws_b, draws_a, tol_multiplier)


def _assemble(
    pair: ScenarioPair, draws_b: _Draws, draws_a: _Draws, tol_multiplier: float
) -> PropositionReport:
    mean_b, se_b = _mean_se(draws_b.beta_hat[draws_b.ok])
    mean_a, se_a = _mean_se(draws_a.beta_hat[draws_a.ok])
    bias_b = _bias_from_draws(pair.spec_b, draws_b)
    bias_a = _bias_from_draws(pair.spec_a, draws_a)

    true_diff = pair.spec_a.beta - pair.spec_b.beta
    measured = mean_a - mean_b
    se_diff = np.hypot(se_a, se_b)
    gap = bias_a.finite_sample - bias_b.finite_sample
    gap_se = np.hypot(bias_a.mc_se, bias_b.mc_se)
    residual = measured - true_diff - gap
    id_tol = 4.0 * np.hypot(se_diff, gap_se)

    holds = np.max(np.abs(gap)) <= tol_multiplier * np.max(gap_se)
    return PropositionReport(
        mean_beta_b=mean_b,
        mean_beta_a=mean_a,
        mc_se_beta_b=se_b,
        mc_se_beta_a=se_a,
        true_diff=true_diff,
        measured_diff=measured,
        mc_se_diff=se_diff,
        bias_b=bias_b,
        bias_a=bias_a,
        criterion_gap=gap,
        gap_mc_se=gap_se,
        asymptotic_gap=bias_a.asymptotic - bias_b.asymptotic,
        identity_residual=residual,
        identity_tolerance=id_tol,
        tol_multiplier=float(tol_multiplier),
        verdict=HOLDS if holds else VIOLATED,
    )


def criterion_gap(
    pair: ScenarioPair, *, workers: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(finite-sample gap, its MC standard error, asymptotic gap) of the two bias terms."""
    b = bias_term(pair.spec_b, pair.n_b, pair.reps, pair.seed_b, workers=workers)
    a = bias_term(pair.spec_a, pair.n_a, pair.reps, pair.seed_a, workers=workers)
    return (
        a.finite_sample - b.finite_sample,
        np.hypot(a.mc_se, b.mc_se),
        a.asymptotic - b.asymptotic,
    )


def factorization_check(
    spec: DgpSpec, n: int, reps: int, seed: int, *, workers: int | None = None
) -> FactorizationResult:
    """Compare E[(X'X)^-1 c_hat] with E[(X'X)^-1] E[c_hat] for one system.

    ``c_hat`` is the per-replication sample covariance of x with u. Standard
    errors for the product and the gap are leave-one-out jackknife estimates.
    """
    _check_run(spec, n, reps)
    draws = _simulate(spec, n, reps, seed, factors=True, workers=workers)
    g = draws.inv_gram[draws.ok]
    c = draws.c_hat[draws.ok]
    k = g.shape[0]

    per_rep = np.einsum("kij,kj->ki", g, c)
    joint = per_rep.mean(axis=0)
    g_bar = g.mean(axis=0)
    c_bar = c.mean(axis=0)
    product = g_bar @ c_bar
    gap = joint - product

    g_loo = (k * g_bar - g) / (k - 1)
    c_loo = (k * c_bar - c) / (k - 1)
    j_loo = (k * joint - per_rep) / (k - 1)
    p_loo = np.einsum("kij,kj->ki", g_loo, c_loo)

    def jack(theta: np.ndarray) -> np.ndarray:
        return np.sqrt((k - 1) / k * ((theta - theta.mean(axis=0)) ** 2).sum(axis=0))

    return FactorizationResult(
        joint=joint,
        product=product,
        gap=gap,
        mc_se=jack(j_loo - p_loo),
        joint_mc_se=jack(j_loo),
        product_mc_se=jack(p_loo),
        reps=k,
        skipped=draws.skipped,
    )
