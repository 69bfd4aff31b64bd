"""Desk-scale utility functions ``u(C)``.

Each utility trains a cheap surrogate on the pooled data of a coalition and
scores it on a fixed validation set.  Results are memoized per coalition,
so asking twice trains once.
"""

from __future__ import annotations

import json
import threading
import warnings
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .datasets import Coalition, OwnerDataset, aggregate
from .exceptions import (
    ConfigError,
    ConstantTarget,
    DegenerateTrainingWarning,
    EmptyCoalition,
)


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ConfigError("y_true and y_pred differ in length")
    if y_true.size < 2:
        raise ConfigError("r2_score needs at least two points")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTarget("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


class Utility:
    """Base class: memoizes ``__call__`` per coalition and counts trainings."""

    kind = "base"
    lower_bound = -np.inf
    upper_bound = np.inf

    def __init__(self):
        self._memo: dict[Coalition, float] = {}
        self._lock = threading.Lock()
        self.n_trainings = 0
        self.degenerate: set[Coalition] = set()

    def __call__(self, c: Coalition) -> float:
        if not c:
            raise EmptyCoalition("utility of the empty coalition is fixed at 0, not evaluated")
        if c in self._memo:
            return self._memo[c]
        v = float(self._compute(c))
        with self._lock:
            if c not in self._memo:
                self.n_trainings += 1
                self._memo[c] = v
            return self._memo[c]

    def _compute(self, c: Coalition) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


def evaluate(fn: Utility, c: Coalition, ledger=None) -> float:
    """Evaluate ``fn`` on ``c`` and record the value as actual in ``ledger`` (if given)."""
    if ledger is not None and c in ledger and ledger.entry(c).source == "actual":
        return ledger[c]
    v = fn(c)
    if ledger is not None:
        ledger.record_actual(c, v)
    return v


class _TrainedUtility(Utility):
    def __init__(self, owners: Sequence[OwnerDataset], X_val, y_val):
        super().__init__()
        self.owners = list(owners)
        self.X_val = np.asarray(X_val, dtype=np.float64)
        self.y_val = np.asarray(y_val)
        if self.X_val.ndim != 2 or self.X_val.shape[0] != self.y_val.shape[0]:
            raise ConfigError("validation features and targets do not align")
        if self.X_val.shape[1] != self.owners[0].n_features:
            raise ConfigError("validation features have the wrong width")

    def _floor(self, c: Coalition, y_train) -> float:
        """Accuracy of the constant majority-class predictor, flagged as degenerate."""
        warnings.warn(
            f"degenerate training data for {c!r}; using the majority-class floor",
            DegenerateTrainingWarning,
            stacklevel=4,
        )
        self.degenerate.add(c)
        majority = np.bincount(y_train).argmax()
        return float(np.mean(self.y_val == majority))


class KNNAccuracy(_TrainedUtility):
    """Validation accuracy of a k-nearest-neighbour classifier.

    Distance ties are broken by training order (stable sort) and vote ties
    by the smallest label.
    """

    kind = "knn"
    lower_bound, upper_bound = 0.0, 1.0

    def __init__(self, owners, X_val, y_val, k: int = 5):
        super().__init__(owners, X_val, y_val)
        if k < 1:
            raise ConfigError("k must be >= 1")
        self.k = int(k)

    def _compute(self, c):
        D = aggregate(self.owners, c)
        X, y = D.features, D.targets
        if np.unique(y).size < 2:
            return self._floor(c, y)
        k = min(self.k, len(y))
        d2 = (
            np.sum(self.X_val**2, axis=1)[:, None]
            + np.sum(X**2, axis=1)[None, :]
            - 2.0 * self.X_val @ X.T
        )
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = y[nn]
        K = int(max(y.max(), self.y_val.max())) + 1
        counts = np.zeros((len(votes), K), dtype=np.int64)
        np.add.at(counts, (np.arange(len(votes))[:, None], votes), 1)
        pred = counts.argmax(axis=1)
        return float(np.mean(pred == self.y_val))

    def describe(self):
        return {"kind": self.kind, "k": self.k}


class RidgeR2(_TrainedUtility):
    """Validation R^2 of closed-form ridge regression with an unpenalized intercept."""

    kind = "ridge"
    upper_bound = 1.0

    def __init__(self, owners, X_val, y_val, lam: float = 1e-3):
        super().__init__(owners, X_val, y_val)
        if lam < 0:
            raise ConfigError("lambda must be >= 0")
        self.lam = float(lam)

    def _compute(self, c):
        D = aggregate(self.owners, c)
        X, y = D.features, D.targets.astype(np.float64)
        xm, ym = X.mean(axis=0), y.mean(axis=0)
        Xc = X - xm
        G = Xc.T @ Xc + self.lam * np.eye(X.shape[1])
        beta = np.linalg.lstsq(G, Xc.T @ (y - ym), rcond=None)[0]
        pred = (self.X_val - xm) @ beta + ym
        return r2_score(self.y_val, pred)

    def describe(self):
        return {"kind": self.kind, "lambda": self.lam}


class LogisticAccuracy(_TrainedUtility):
    """Validation accuracy of softmax regression fit by full-batch gradient descent."""

    kind = "logistic"
    lower_bound, upper_bound = 0.0, 1.0

    def __init__(self, owners, X_val, y_val, steps: int = 500, lr: float = 0.1):
        super().__init__(owners, X_val, y_val)
        self.steps, self.lr = int(steps), float(lr)

    def _compute(self, c):
        D = aggregate(self.owners, c)
        X, y = D.features, D.targets
        if np.unique(y).size < 2:
            return self._floor(c, y)
        K = int(max(y.max(), self.y_val.max())) + 1
        Xb = np.hstack([X, np.ones((len(X), 1))])
        Y = np.eye(K)[y]
        W = np.zeros((Xb.shape[1], K))
        for _ in range(self.steps):
            Z = Xb @ W
            Z -= Z.max(axis=1, keepdims=True)
            P = np.exp(Z)
            P /= P.sum(axis=1, keepdims=True)
            W -= self.lr * Xb.T @ (P - Y) / len(X)
        Xv = np.hstack([self.X_val, np.ones((len(self.X_val), 1))])
        return float(np.mean((Xv @ W).argmax(axis=1) == self.y_val))

    def describe(self):
        return {"kind": self.kind, "steps": self.steps, "lr": self.lr}


class TableUtility(Utility):
    """Utilities looked up from a precomputed table keyed by coalition."""

    kind = "table"

    def __init__(self, table: Mapping[Coalition, float]):
        super().__init__()
        self.table = {Coalition(c) if isinstance(c, int) else c: float(v) for c, v in table.items()}

    @classmethod
    def from_function(cls, f, n: int) -> "TableUtility":
        return cls({Coalition(b): float(f(Coalition(b))) for b in range(1, 1 << n)})

    @classmethod
    def load(cls, path: str | Path) -> "TableUtility":
        """Read a JSON object mapping decimal bit patterns to utilities."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls({Coalition(int(k)): float(v) for k, v in raw.items()})
        except (ValueError, AttributeError) as exc:
            raise ConfigError(f"bad utility table {path}: {exc}") from None

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({str(c.bits): v for c, v in sorted(self.table.items())}, fh, indent=1)

    def _compute(self, c):
        try:
            return self.table[c]
        except KeyError:
            raise ConfigError(f"utility table has no entry for {c!r}") from None


def parse_utility(spec: str, owners=None, X_val=None, y_val=None) -> Utility:
    """Build a utility from ``knn:K``, ``ridge:LAMBDA``, ``logistic`` or ``table:PATH``."""
    kind, _, arg = spec.partition(":")
    if kind == "table":
        if not arg:
            raise ConfigError("table utility needs a path: table:PATH")
        return TableUtility.load(arg)
    if owners is None or X_val is None or y_val is None:
        raise ConfigError(f"{kind} utility needs owners and a validation set")
    try:
        if kind == "knn":
            return KNNAccuracy(owners, X_val, y_val, int(arg) if arg else 5)
        if kind == "ridge":
            return RidgeR2(owners, X_val, y_val, float(arg) if arg else 1e-3)
        if kind == "logistic":
            if arg:
                steps, _, lr = arg.partition(",")
                return LogisticAccuracy(owners, X_val, y_val, int(steps), float(lr) if lr else 0.1)
            return LogisticAccuracy(owners, X_val, y_val)
    except ValueError as exc:
        raise ConfigError(f"bad utility spec {spec!r}: {exc}") from None
    raise ConfigError(f"unknown utility {spec!r}")
