"""Exponential kernels over coalitions.

Four families are available:

=============  ==============================================================
``ssw_sq_exp``  ``exp(-gamma * SSW_2^(2 rho))`` with ``SSW_2^2 = mean_l W_2^2``
``ssw_l1_exp``  ``exp(-gamma * SSW_1^rho)``
``binary_rbf``  ``exp(-gamma * ||b_A - b_B||^2)`` on 0/1 owner indicators
``otdd_exp``    ``exp(-gamma * OTDD^(2 rho))``; not guaranteed PSD
=============  ==============================================================

The two sliced families are positive semi-definite for any fixed set of
projection directions.  ``otdd_exp`` exists as a baseline only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .datasets import Coalition
from .exceptions import ConfigError, NonSquare
from .transport import CoalitionDistances

FAMILIES = ("ssw_sq_exp", "ssw_l1_exp", "binary_rbf", "otdd_exp")


@dataclass(frozen=True)
class KernelSpec:
    family: str = "ssw_sq_exp"
    gamma: float = 1.0
    eta: float = 0.5
    rho: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0 < self.rho <= 1:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")

    @property
    def needs_transport(self) -> bool:
        return self.family != "binary_rbf"

    def with_gamma(self, gamma: float) -> "KernelSpec":
        return replace(self, gamma=gamma)

    def geometry_key(self) -> tuple:
        """Settings that determine the underlying distance (everything except gamma)."""
        if self.family == "binary_rbf":
            return (self.family,)
        if self.family == "otdd_exp":
            return (self.family, self.rho)
        return (self.family, self.eta, self.rho)


@dataclass(frozen=True)
class KernelMatrix:
    rows: tuple[Coalition, ...]
    cols: tuple[Coalition, ...]
    entries: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def shape(self):
        return self.entries.shape


def _hamming(rows: Sequence[Coalition], cols: Sequence[Coalition]) -> np.ndarray:
    out = np.empty((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = bin(a.bits ^ b.bits).count("1")
    return out


def base_distance(
    spec: KernelSpec,
    rows: Sequence[Coalition],
    cols: Sequence[Coalition],
    distances: CoalitionDistances | None,
) -> np.ndarray:
    """The exponent ``d`` with ``k = exp(-gamma * d)``; independent of gamma."""
    rows, cols = list(rows), list(cols)
    if spec.family == "binary_rbf":
        return _hamming(rows, cols)
    if distances is None:
        raise ConfigError(f"{spec.family} needs a CoalitionDistances instance")
    if spec.family == "ssw_sq_exp":
        d = distances.distance_matrix(rows, cols, "ssw", spec.eta, 2, "power_mean_raw")
        return d**spec.rho
    if spec.family == "ssw_l1_exp":
        d = distances.distance_matrix(rows, cols, "ssw", spec.eta, 1, "slice_mean")
        return d**spec.rho
    d = distances.distance_matrix(rows, cols, "otdd", p=distances.params.p)
    return d ** (2.0 * spec.rho)


def kernel_value(
    spec: KernelSpec, a: Coalition, b: Coalition, distances: CoalitionDistances | None = None
) -> float:
    if a == b:
        return 1.0
    return float(np.exp(-spec.gamma * base_distance(spec, [a], [b], distances)[0, 0]))


def build_matrix(
    spec: KernelSpec,
    rows: Sequence[Coalition],
    cols: Sequence[Coalition],
    distances: CoalitionDistances | None = None,
) -> KernelMatrix:
    """Kernel matrix between two coalition lists.

    Every unordered pair is transported at most once (the distance engine
    memoizes), and identical coalitions get exactly 1.
    """
    rows, cols = tuple(rows), tuple(cols)
    K = np.exp(-spec.gamma * base_distance(spec, rows, cols, distances))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            if a == b:
                K[i, j] = 1.0
    K.setflags(write=False)
    return KernelMatrix(rows, cols, K)


@dataclass(frozen=True)
class PSDReport:
    min_eigenvalue: float
    max_eigenvalue: float
    passed: bool


def psd_check(K, tolerance: float = 1e-8) -> PSDReport:
    """Pass iff ``min eig >= -tolerance * max(1, max eig)``.

    A failure is reported in the result, not raised.
    """
    M = np.asarray(K, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {M.shape}")
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    lo, hi = float(ev[0]), float(ev[-1])
    return PSDReport(lo, hi, lo >= -tolerance * max(1.0, hi))


class CoalitionKernel:
    """Kernel evaluation bound to one problem.

    Caches the gamma-free base distances per :meth:`KernelSpec.geometry_key`
    and coalition list, so a hyperparameter sweep over gamma costs only an
    exponential per entry.
    """

    def __init__(self, distances: CoalitionDistances | None = None, n_owners: int | None = None):
        self.distances = distances
        self.n_owners = distances.n_owners if distances is not None else n_owners

    def base(self, spec: KernelSpec, rows, cols) -> np.ndarray:
        return base_distance(spec, rows, cols, self.distances)

    def __call__(self, spec: KernelSpec, rows, cols) -> np.ndarray:
        return build_matrix(spec, rows, cols, self.distances).entries

    def diag(self, spec: KernelSpec, coalitions) -> np.ndarray:
        return np.ones(len(coalitions))
