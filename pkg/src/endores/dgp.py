"""Data-generating processes with controllable endogeneity.

Every primitive shock is a mean-zero Gaussian, so each mechanism has a
closed-form regressor/error covariance ``c`` to check simulations against.
Samples keep the latent error ``u`` (defined against the *observed* design)
and the mechanism internals, which the estimators never see but the oracles do.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from endores.errors import InvalidSpec, SampleTooSmall
from endores.rng import make_rng

SYMMETRY_RTOL = 1e-12


def _vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidSpec(f"{name} must be finite", name)
    arr.setflags(write=False)
    return arr


def _cholesky(mat: np.ndarray, name: str, field: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise InvalidSpec(f"{name} is not positive definite", field) from None


@dataclass(frozen=True, eq=False)
class Exogenous:
    """No endogeneity: u = e."""


@dataclass(frozen=True, eq=False)
class LinearErrorCorrelation:
    """u = gamma'x + e, giving Cov(x, u) = Sigma_x gamma."""

    gamma: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", _vector(self.gamma, "gamma"))


@dataclass(frozen=True, eq=False)
class OmittedVariable:
    """u = delta * w + e with w ~ N(0, 1) and Cov(x, w) = loading."""

    delta: float
    loading: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "loading", _vector(self.loading, "loading"))
        if not np.isfinite(self.delta):
            raise InvalidSpec("delta must be finite", "delta")


@dataclass(frozen=True, eq=False)
class MeasurementError:
    """Classical additive noise: observed x = x_true + eta, eta_j ~ N(0, eta_sd_j^2).

    Against the observed design the regression error is u = e - eta'beta.
    """

    eta_sd: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta_sd", _vector(self.eta_sd, "eta_sd"))
        if np.any(self.eta_sd < 0):
            raise InvalidSpec("eta_sd entries must be >= 0", "eta_sd")


@dataclass(frozen=True, eq=False)
class Simultaneity:
    """Scalar feedback system y = beta x + u, x = alpha y + v.

    The structural shock v has variance ``x_cov[0, 0]`` and u = e has
    variance ``noise_sd**2``.
    """

    alpha: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", float(self.alpha))
        if not np.isfinite(self.alpha):
            raise InvalidSpec("alpha must be finite", "alpha")


EndogeneityMechanism = Union[
    Exogenous, LinearErrorCorrelation, OmittedVariable, MeasurementError, Simultaneity
]

MECHANISM_NAMES = {
    Exogenous: "exogenous",
    LinearErrorCorrelation: "linear_error_correlation",
    OmittedVariable: "omitted_variable",
    MeasurementError: "measurement_error",
    Simultaneity: "simultaneity",
}


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Generative description of one system: y = x beta + u.

    Validated on construction; an instance that exists is a valid spec.
    """

    beta: np.ndarray
    x_cov: np.ndarray
    noise_sd: float = 1.0
    mechanism: EndogeneityMechanism = field(default_factory=Exogenous)

    def __post_init__(self) -> None:
        beta = _vector(self.beta, "beta")
        x_cov = np.array(self.x_cov, dtype=float)
        if x_cov.ndim == 0:
            x_cov = x_cov.reshape(1, 1)
        x_cov.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "x_cov", x_cov)
        object.__setattr__(self, "noise_sd", float(self.noise_sd))
        self._validate()

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def _validate(self) -> None:
        p = self.p
        if p < 1:
            raise InvalidSpec("beta must have at least one entry", "beta")
        if self.x_cov.shape != (p, p):
            raise InvalidSpec(f"x_cov must be {p}x{p}, got {self.x_cov.shape}", "x_cov")
        if not np.all(np.isfinite(self.x_cov)):
            raise InvalidSpec("x_cov must be finite", "x_cov")
        scale = np.max(np.abs(self.x_cov))
        if np.max(np.abs(self.x_cov - self.x_cov.T)) > SYMMETRY_RTOL * scale:
            raise InvalidSpec("x_cov is not symmetric", "x_cov")
        if not (np.isfinite(self.noise_sd) and self.noise_sd > 0):
            raise InvalidSpec("noise_sd must be positive", "noise_sd")
        mech = self.mechanism
        if type(mech) not in MECHANISM_NAMES:
            raise InvalidSpec(f"unknown mechanism {mech!r}", "mechanism")
        _ = self.x_chol
        if isinstance(mech, LinearErrorCorrelation) and mech.gamma.shape[0] != p:
            raise InvalidSpec(f"gamma must have length {p}", "mechanism.gamma")
        if isinstance(mech, MeasurementError) and mech.eta_sd.shape[0] != p:
            raise InvalidSpec(f"eta_sd must have length {p}", "mechanism.eta_sd")
        if isinstance(mech, OmittedVariable):
            if mech.loading.shape[0] != p:
                raise InvalidSpec(f"loading must have length {p}", "mechanism.loading")
            _ = self.block_chol
        if isinstance(mech, Simultaneity):
            if p != 1:
                raise InvalidSpec("simultaneity requires p = 1", "beta")
            if abs(mech.alpha * self.beta[0]) >= 1:
                raise InvalidSpec("simultaneity requires |alpha * beta| < 1", "mechanism.alpha")

    @cached_property
    def x_chol(self) -> np.ndarray:
        return _cholesky(self.x_cov, "x_cov", "x_cov")

    @cached_property
    def block_chol(self) -> np.ndarray:
        """Cholesky factor of the joint (x, w) covariance for omitted-variable specs."""
        loading = self.mechanism.loading
        p = self.p
        block = np.empty((p + 1, p + 1))
        block[:p, :p] = self.x_cov
        block[:p, p] = loading
        block[p, :p] = loading
        block[p, p] = 1.0
        return _cholesky(block, "joint (x, w) covariance", "mechanism.loading")


@dataclass(frozen=True, eq=False)
class Sample:
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    latents: dict[str, np.ndarray]
    seed: int

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def generate_sample(spec: DgpSpec, n: int, seed: int) -> Sample:
    """Draw ``n`` i.i.d. rows from ``spec``.

    Pure in ``(spec, n, seed)``. The response is assembled as ``x @ beta + u``
    from the observed design, so the reconstruction identity holds to rounding.
    """
    p = spec.p
    if n <= p:
        raise SampleTooSmall(f"need n >= p + 1 = {p + 1}, got {n}")
    rng = make_rng(seed)
    mech = spec.mechanism
    latents: dict[str, np.ndarray] = {}

    if isinstance(mech, Simultaneity):
        sd_v = np.sqrt(spec.x_cov[0, 0])
        v = sd_v * rng.standard_normal(n)
        e = spec.noise_sd * rng.standard_normal(n)
        x = ((v + mech.alpha * e) / (1.0 - mech.alpha * spec.beta[0])).reshape(n, 1)
        u = e
        latents = {"v": v, "e": e}
    elif isinstance(mech, OmittedVariable):
        joint = rng.standard_normal((n, p + 1)) @ spec.block_chol.T
        x, w = joint[:, :p], joint[:, p]
        e = spec.noise_sd * rng.standard_normal(n)
        u = mech.delta * w + e
        latents = {"w": w, "e": e}
    else:
        x = rng.standard_normal((n, p)) @ spec.x_chol.T
        e = spec.noise_sd * rng.standard_normal(n)
        if isinstance(mech, LinearErrorCorrelation):
            u = x @ mech.gamma + e
            latents = {"e": e}
        elif isinstance(mech, MeasurementError):
            eta = rng.standard_normal((n, p)) * mech.eta_sd
            latents = {"x_true": x, "eta": eta, "e": e}
            x = x + eta
            u = e - eta @ spec.beta
        else:
            u = e
            latents = {"e": e}

    y = x @ spec.beta + u
    return Sample(x=x, y=y, u=u, latents=latents, seed=seed)


def theoretical_c(spec: DgpSpec) -> np.ndarray:
    """Population Cov(x_j, u) for each observed regressor."""
    mech = spec.mechanism
    if isinstance(mech, LinearErrorCorrelation):
        return spec.x_cov @ mech.gamma
    if isinstance(mech, OmittedVariable):
        return mech.loading * mech.delta
    if isinstance(mech, MeasurementError):
        return -(mech.eta_sd**2) * spec.beta
    if isinstance(mech, Simultaneity):
        return np.array([mech.alpha * spec.noise_sd**2 / (1.0 - mech.alpha * spec.beta[0])])
    return np.zeros(spec.p)


def observed_x_cov(spec: DgpSpec) -> np.ndarray:
    """Population covariance of the design the estimator actually sees."""
    mech = spec.mechanism
    if isinstance(mech, MeasurementError):
        return spec.x_cov + np.diag(mech.eta_sd**2)
    if isinstance(mech, Simultaneity):
        ab = mech.alpha * spec.beta[0]
        var_x = (spec.x_cov[0, 0] + mech.alpha**2 * spec.noise_sd**2) / (1.0 - ab) ** 2
        return np.array([[var_x]])
    return np.array(spec.x_cov)


def sample_c(sample: Sample) -> np.ndarray:
    """Empirical covariance (divisor n - 1) of each column of x with the latent u."""
    xc = sample.x - sample.x.mean(axis=0)
    uc = sample.u - sample.u.mean()
    return xc.T @ uc / (sample.n - 1)
