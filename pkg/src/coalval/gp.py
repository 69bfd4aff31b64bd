"""Exact Gaussian-process regression over coalition utilities.

Utilities are modelled as ``u(C) = m + f(C) + eps`` with ``f ~ GP(0, k)``,
``eps ~ N(0, sigma^2)`` and a constant prior mean ``m`` (by default the
empirical mean of the observed utilities).  With ``r = u_A - m``::

    E[u_B | u_A] = m + K_BA (K_AA + sigma^2 I)^-1 r
    V[u_B | u_A] = K_BB - K_BA (K_AA + sigma^2 I)^-1 K_AB

The Cholesky factor of ``K_AA + sigma^2 I`` is computed once in
:func:`condition`; predictions are triangular solves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .datasets import Coalition
from .exceptions import (
    ConfigError,
    EmptyGrid,
    FactorizationFailure,
    InconsistentPosterior,
)
from .kernel import FAMILIES, CoalitionKernel, KernelSpec

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
NEG_VAR_TOL = 1e-10
_TIE_TOL = 1e-10


@dataclass(frozen=True)
class HyperGrid:
    """Exhaustive search grid; ``etas`` and ``rhos`` only apply where meaningful."""

    families: tuple[str, ...] = ("ssw_sq_exp", "ssw_l1_exp")
    gammas: tuple[float, ...] = tuple(np.logspace(-3, 3, 13))
    noise_vars: tuple[float, ...] = (1e-6, 1e-4, 1e-2, 1e-1)
    etas: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    rhos: tuple[float, ...] = (0.5, 1.0)

    def __post_init__(self):
        for f in self.families:
            if f not in FAMILIES:
                raise ConfigError(f"unknown kernel family {f!r}")
        if any(s < 0 for s in self.noise_vars):
            raise ConfigError("noise variances must be >= 0")

    @classmethod
    def single(cls, spec: KernelSpec, noise_var: float) -> "HyperGrid":
        return cls((spec.family,), (spec.gamma,), (noise_var,), (spec.eta,), (spec.rho,))

    @classmethod
    def binary(cls, **kw) -> "HyperGrid":
        return cls(families=("binary_rbf",), etas=(1.0,), rhos=(1.0,), **kw)

    def geometries(self) -> list[KernelSpec]:
        """One gamma-free spec per distinct underlying distance (gamma set to 1)."""
        out, seen = [], set()
        for fam, eta, rho in itertools.product(self.families, self.etas, self.rhos):
            if fam == "binary_rbf":
                eta, rho = 1.0, 1.0
            elif fam == "otdd_exp":
                eta = 1.0
            spec = KernelSpec(fam, 1.0, eta, rho)
            if spec.geometry_key() not in seen:
                seen.add(spec.geometry_key())
                out.append(spec)
        return out

    def __iter__(self) -> Iterator[tuple[KernelSpec, float]]:
        for g in self.geometries():
            for gamma in self.gammas:
                for s2 in self.noise_vars:
                    yield g.with_gamma(float(gamma)), float(s2)

    def __len__(self) -> int:
        return len(self.geometries()) * len(self.gammas) * len(self.noise_vars)


@dataclass(frozen=True)
class GPModel:
    kernel: CoalitionKernel
    spec: KernelSpec
    noise_var: float
    coalitions: tuple[Coalition, ...]
    utilities: np.ndarray
    prior_mean: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray
    log_likelihood: float
    n_candidates: int = 1

    @property
    def effective_noise(self) -> float:
        """Diagonal actually added to ``K_AA``: noise variance plus jitter."""
        return self.noise_var + self.jitter

    def summary(self) -> dict:
        return {
            "family": self.spec.family,
            "gamma": self.spec.gamma,
            "eta": self.spec.eta,
            "rho": self.spec.rho,
            "noise_var": self.noise_var,
            "jitter": self.jitter,
            "prior_mean": self.prior_mean,
            "log_marginal_likelihood": self.log_likelihood,
            "n_train": len(self.coalitions),
            "n_candidates": self.n_candidates,
        }


@dataclass(frozen=True)
class Posterior:
    coalitions: tuple[Coalition, ...]
    mean: np.ndarray
    cov: np.ndarray

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def factorize(K: np.ndarray, noise_var: float, ladder=JITTER_LADDER) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + (noise_var + jitter) I`` with the first jitter that works."""
    n = K.shape[0]
    for jitter in ladder:
        try:
            L = np.linalg.cholesky(K + (noise_var + jitter) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L, jitter
    raise FactorizationFailure(
        f"matrix not positive definite after jitter {ladder[-1]:g} (noise {noise_var:g})"
    )


def _lml(L: np.ndarray, r: np.ndarray) -> tuple[float, np.ndarray]:
    alpha = cho_solve((L, True), r)
    val = -0.5 * float(r @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * len(r) * math.log(2 * math.pi)
    return val, alpha


def _prior_mean(u: np.ndarray, prior_mean) -> float:
    if prior_mean == "empirical":
        return float(np.mean(u))
    return float(prior_mean)


def _check_training(coalitions, utilities):
    coalitions = tuple(coalitions)
    u = np.asarray(utilities, dtype=np.float64).ravel()
    if len(coalitions) != len(u):
        raise ConfigError(f"{len(coalitions)} coalitions but {len(u)} utilities")
    if len(u) < 1:
        raise ConfigError("need at least one training coalition")
    if not np.all(np.isfinite(u)):
        raise ConfigError("utilities must be finite")
    if len(set(coalitions)) != len(coalitions):
        raise ConfigError("training coalitions must be distinct")
    return coalitions, u


def condition(
    kernel: CoalitionKernel,
    spec: KernelSpec,
    noise_var: float,
    coalitions: Sequence[Coalition],
    utilities,
    prior_mean="empirical",
    ladder=JITTER_LADDER,
) -> GPModel:
    """Condition the GP on observations with fixed hyperparameters."""
    coalitions, u = _check_training(coalitions, utilities)
    m = _prior_mean(u, prior_mean)
    K = kernel(spec, coalitions, coalitions)
    L, jitter = factorize(K, noise_var, ladder)
    lml, alpha = _lml(L, u - m)
    return GPModel(kernel, spec, float(noise_var), coalitions, u, m, jitter, L, alpha, lml)


def fit(
    kernel: CoalitionKernel,
    coalitions: Sequence[Coalition],
    utilities,
    grid: HyperGrid | Sequence[tuple[KernelSpec, float]] = HyperGrid(),
    prior_mean="empirical",
    ladder=JITTER_LADDER,
) -> GPModel:
    """Pick the grid candidate with the largest log marginal likelihood.

    Ties (within 1e-10) go to the larger noise variance.  Candidates whose
    matrix cannot be factorized even with the largest jitter are skipped; if
    none survives, :class:`FactorizationFailure` is raised.
    """
    coalitions, u = _check_training(coalitions, utilities)
    cands = list(grid)
    if not cands:
        raise EmptyGrid("hyperparameter grid is empty")
    m = _prior_mean(u, prior_mean)
    r = u - m
    base_cache: dict[tuple, np.ndarray] = {}
    best = None
    for spec, s2 in cands:
        key = spec.geometry_key()
        if key not in base_cache:
            base_cache[key] = kernel.base(spec, coalitions, coalitions)
        K = np.exp(-spec.gamma * base_cache[key])
        np.fill_diagonal(K, 1.0)
        try:
            L, jitter = factorize(K, s2, ladder)
        except FactorizationFailure:
            continue
        lml, alpha = _lml(L, r)
        if (
            best is None
            or lml > best[0] + _TIE_TOL
            or (abs(lml - best[0]) <= _TIE_TOL and s2 > best[2])
        ):
            best = (lml, spec, s2, L, jitter, alpha)
    if best is None:
        raise FactorizationFailure("no grid candidate could be factorized")
    lml, spec, s2, L, jitter, alpha = best
    return GPModel(kernel, spec, s2, coalitions, u, m, jitter, L, alpha, lml, len(cands))


def predict(model: GPModel, coalitions: Sequence[Coalition], full_cov: bool = True) -> Posterior:
    """Posterior mean and covariance of the (noise-free) utilities of ``coalitions``."""
    B = tuple(coalitions)
    if not B:
        return Posterior(B, np.zeros(0), np.zeros((0, 0)))
    K_BA = model.kernel(model.spec, B, model.coalitions)
    mean = model.prior_mean + K_BA @ model.alpha
    V = solve_triangular(model.chol, K_BA.T, lower=True)
    if full_cov:
        cov = model.kernel(model.spec, B, B) - V.T @ V
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.diag(model.kernel.diag(model.spec, B) - np.sum(V * V, axis=0))
    d = np.diag(cov)
    if np.any(d < -NEG_VAR_TOL):
        raise InconsistentPosterior(f"posterior variance {d.min():.3e} below -{NEG_VAR_TOL:g}")
    idx = np.flatnonzero(d < 0)
    cov[idx, idx] = 0.0
    return Posterior(B, mean, cov)


def log_marginal_likelihood(model: GPModel) -> float:
    """``log N(u_A | m, K_AA + sigma^2 I)`` evaluated via the stored factor."""
    return _lml(model.chol, model.utilities - model.prior_mean)[0]
