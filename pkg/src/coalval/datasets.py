"""Owner datasets, coalitions and the synthetic generators used in demos and tests.

A problem consists of ``n <= 64`` data owners.  Owner ``i`` holds a feature
matrix ``X_i`` and a target vector ``y_i``; a coalition ``C`` pools the data
of its members into ``D_C`` by stacking rows in ascending owner order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    ConfigError,
    EmptyCoalition,
    HeterogeneousSchema,
    MissingOwner,
    ParseError,
    UnknownClass,
)

MAX_OWNERS = 64
TASKS = ("classification", "regression")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OwnerDataset:
    """One owner's data.

    ``features`` is a float64 ``(rows, m)`` matrix and ``targets`` either a
    float64 vector (regression) or an int64 vector of dense class labels
    ``0..K-1`` (classification).  ``label_names`` keeps the original label
    strings when the data came from a file.
    """

    owner_id: int
    features: np.ndarray
    targets: np.ndarray
    task: str = "classification"
    name: str | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if not 0 <= self.owner_id < MAX_OWNERS:
            raise ConfigError(f"owner_id must lie in [0, {MAX_OWNERS}), got {self.owner_id}")
        X = np.array(self.features, dtype=np.float64, order="C")
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ConfigError("features must be a 2-D matrix")
        if self.task == "classification":
            y = np.asarray(self.targets)
            if y.size and (not np.all(np.equal(np.mod(y, 1), 0)) or y.min() < 0):
                raise ConfigError("class labels must be non-negative integers")
            y = y.astype(np.int64)
        else:
            y = np.array(self.targets, dtype=np.float64)
        if X.shape[0] < 1:
            raise ConfigError(f"owner {self.owner_id} has no rows")
        if X.shape[0] != y.shape[0]:
            raise ConfigError(
                f"owner {self.owner_id}: {X.shape[0]} feature rows but {y.shape[0]} targets"
            )
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "targets", _frozen(y))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, order=True)
class Coalition:
    """A set of owners stored as a bit pattern (bit ``i`` set iff owner ``i`` is a member)."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << MAX_OWNERS):
            raise ConfigError(f"coalition bit pattern out of range: {self.bits}")

    @classmethod
    def of(cls, members: Iterable[int]) -> "Coalition":
        bits = 0
        for i in members:
            if not 0 <= i < MAX_OWNERS:
                raise ConfigError(f"owner index {i} out of range")
            bits |= 1 << int(i)
        return cls(bits)

    @classmethod
    def grand(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1)

    @property
    def members(self) -> tuple[int, ...]:
        out = []
        b, i = self.bits, 0
        while b:
            if b & 1:
                out.append(i)
            b >>= 1
            i += 1
        return tuple(out)

    @property
    def size(self) -> int:
        return bin(self.bits).count("1")

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, i) -> bool:
        return bool((self.bits >> int(i)) & 1)

    def __bool__(self) -> bool:
        return self.bits != 0

    def __or__(self, other: "Coalition") -> "Coalition":
        return Coalition(self.bits | other.bits)

    def with_owner(self, i: int) -> "Coalition":
        return Coalition(self.bits | (1 << i))

    def without_owner(self, i: int) -> "Coalition":
        return Coalition(self.bits & ~(1 << i))

    def indicator(self, n: int) -> np.ndarray:
        return np.array([(self.bits >> i) & 1 for i in range(n)], dtype=np.float64)

    def __repr__(self) -> str:
        return f"Coalition({set(self.members) or '{}'})"


def all_coalitions(n: int, include_empty: bool = False) -> list[Coalition]:
    """Every coalition of ``n`` owners, ordered by bit pattern."""
    if n > 30:
        raise ConfigError("refusing to enumerate the power set of more than 30 owners")
    start = 0 if include_empty else 1
    return [Coalition(b) for b in range(start, 1 << n)]


@dataclass(frozen=True)
class AggregatedDataset:
    features: np.ndarray
    targets: np.ndarray
    source: Coalition
    task: str = "classification"

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


def _owner_map(owners: Sequence[OwnerDataset]) -> dict[int, OwnerDataset]:
    return {o.owner_id: o for o in owners}


def aggregate(owners: Sequence[OwnerDataset], c: Coalition) -> AggregatedDataset:
    """Pool the data of the members of ``c`` in ascending owner order."""
    if not c:
        raise EmptyCoalition("cannot aggregate the empty coalition")
    by_id = _owner_map(owners)
    parts = []
    for i in c.members:
        if i not in by_id:
            raise MissingOwner(f"no dataset for owner {i}")
        parts.append(by_id[i])
    X = np.concatenate([p.features for p in parts], axis=0)
    y = np.concatenate([p.targets for p in parts], axis=0)
    return AggregatedDataset(_frozen(X), _frozen(y), c, parts[0].task)


def check_problem(owners: Sequence[OwnerDataset]) -> None:
    """Validate that owners form one problem (shared width, task, unique ids)."""
    if not owners:
        raise ConfigError("no owners")
    if len({o.owner_id for o in owners}) != len(owners):
        raise ConfigError("duplicate owner ids")
    if len({o.n_features for o in owners}) != 1:
        raise HeterogeneousSchema("owners disagree on the number of features")
    if len({o.task for o in owners}) != 1:
        raise ConfigError("owners disagree on the task kind")


def n_classes(owners: Sequence[OwnerDataset]) -> int:
    return int(max(o.targets.max() for o in owners)) + 1


# ----------------------------------------------------------------------------
# CSV ingestion


def _sort_keys(values):
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def load_csv(
    path: str | Path,
    target_column: str,
    task: str = "classification",
    owner_column: str = "owner",
) -> list[OwnerDataset]:
    """Read a headered CSV and split it into one dataset per distinct owner value.

    All columns other than ``target_column`` and ``owner_column`` are
    features and must parse as floats.  Class labels are remapped densely to
    ``0..K-1`` in sorted order; the original names are kept on every
    returned dataset as ``label_names``.  Owners are numbered in sorted order
    of their key (numeric when every key parses as a number).
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        header = [h.strip() for h in header]
        for col in (target_column, owner_column):
            if col not in header:
                raise ParseError(f"missing column {col!r}", row=1)
        t_idx = header.index(target_column)
        o_idx = header.index(owner_column)
        f_idx = [k for k in range(len(header)) if k not in (t_idx, o_idx)]
        if not f_idx:
            raise ParseError("no feature columns", row=1)

        rows: list[tuple[str, list[float], str]] = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                raise HeterogeneousSchema(
                    f"row {line_no}: expected {len(header)} fields, found {len(rec)}"
                )
            feats = []
            for k in f_idx:
                cell = rec[k].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"column {header[k]!r} has non-numeric value {cell!r}", row=line_no
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(f"column {header[k]!r} is not finite", row=line_no)
                feats.append(v)
            target = rec[t_idx].strip()
            if target == "":
                raise ParseError(f"missing target in column {target_column!r}", row=line_no)
            if task == "regression":
                try:
                    float(target)
                except ValueError:
                    raise ParseError(f"non-numeric regression target {target!r}", row=line_no) from None
            rows.append((rec[o_idx].strip(), feats, target))

    if not rows:
        raise ParseError("no data rows", row=2)
    owner_keys = _sort_keys({r[0] for r in rows})
    if len(owner_keys) > MAX_OWNERS:
        raise ConfigError(f"{len(owner_keys)} owners exceed the limit of {MAX_OWNERS}")
    label_names = None
    if task == "classification":
        label_names = tuple(_sort_keys({r[2] for r in rows}))
        label_of = {name: k for k, name in enumerate(label_names)}

    out = []
    for oid, key in enumerate(owner_keys):
        mine = [r for r in rows if r[0] == key]
        X = np.array([r[1] for r in mine], dtype=np.float64)
        if task == "classification":
            y = np.array([label_of[r[2]] for r in mine], dtype=np.int64)
        else:
            y = np.array([float(r[2]) for r in mine], dtype=np.float64)
        out.append(OwnerDataset(oid, X, y, task, name=key, label_names=label_names))
    return out


def save_csv(
    owners: Sequence[OwnerDataset],
    path: str | Path,
    target_column: str = "target",
    owner_column: str = "owner",
) -> None:
    """Write owners back to CSV; floats use ``repr`` so they re-parse exactly."""
    check_problem(owners)
    m = owners[0].n_features
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k}" for k in range(m)] + [target_column, owner_column])
        for o in owners:
            names = o.label_names
            for x, y in zip(o.features, o.targets):
                if o.task == "classification":
                    label = names[int(y)] if names else str(int(y))
                else:
                    label = repr(float(y))
                w.writerow([repr(float(v)) for v in x] + [label, o.name or str(o.owner_id)])


# ----------------------------------------------------------------------------
# synthetic generators


def _moons(n_points: int, noise: float, rng: np.random.Generator, p_upper: float = 0.5):
    labels = (rng.random(n_points) >= p_upper).astype(np.int64)
    t = rng.uniform(0.0, np.pi, n_points)
    X = np.where(
        labels[:, None] == 0,
        np.column_stack([np.cos(t), np.sin(t)]),
        np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)]),
    )
    if noise > 0:
        X = X + rng.normal(0.0, noise, X.shape)
    return X, labels


def make_moons(
    n_owners: int,
    points_per_owner: int,
    noise: float = 0.1,
    seed: int = 0,
    label_skew: float = 0.0,
) -> list[OwnerDataset]:
    """Two interleaved half circles split among owners.

    Class 0 lies on the upper unit half circle centred at the origin, class 1
    on the lower unit half circle centred at ``(1, 0.5)``.  With
    ``label_skew = 0`` every owner draws each class with probability 1/2;
    larger skew spreads the owners' class-0 proportion linearly from
    ``(1 + skew) / 2`` for owner 0 down to ``(1 - skew) / 2`` for the last
    owner, producing heterogeneous owners.
    """
    if n_owners < 1 or points_per_owner < 1:
        raise ConfigError("n_owners and points_per_owner must be >= 1")
    if noise < 0:
        raise ConfigError("noise must be >= 0")
    if not 0 <= label_skew <= 1:
        raise ConfigError("label_skew must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    owners = []
    for i in range(n_owners):
        frac = 0.5 if n_owners == 1 else i / (n_owners - 1)
        p_upper = 0.5 + label_skew * (0.5 - frac)
        X, y = _moons(points_per_owner, noise, rng, p_upper)
        owners.append(OwnerDataset(i, X, y, "classification"))
    return owners


def make_moons_validation(n_points: int, noise: float = 0.1, seed: int = 0):
    """A balanced held-out moons sample ``(X, y)``."""
    rng = np.random.default_rng(seed)
    return _moons(n_points, noise, rng)


def make_blobs(
    n_owners: int,
    class_centers: Sequence[Sequence[float]],
    spread: float,
    assignment: Sequence[Sequence[int]],
    points_per_owner: int | Sequence[int],
    seed: int = 0,
) -> list[OwnerDataset]:
    """Isotropic Gaussian blobs, each owner drawing only from its assigned classes.

    Owner ``i`` cycles through ``assignment[i]`` so its class counts are as
    balanced as possible; each point is ``center + spread * N(0, I)``.
    """
    centers = np.asarray(class_centers, dtype=np.float64)
    if centers.ndim != 2:
        raise ConfigError("class_centers must be a list of mean vectors")
    if len(assignment) != n_owners:
        raise ConfigError("assignment needs one class list per owner")
    if spread < 0:
        raise ConfigError("spread must be >= 0")
    if np.isscalar(points_per_owner):
        counts = [int(points_per_owner)] * n_owners
    else:
        counts = [int(c) for c in points_per_owner]
    rng = np.random.default_rng(seed)
    owners = []
    for i, classes in enumerate(assignment):
        if not classes:
            raise UnknownClass(f"owner {i} has no assigned class")
        for c in classes:
            if not 0 <= c < len(centers):
                raise UnknownClass(f"owner {i} assigned unknown class {c}")
        y = np.array([classes[k % len(classes)] for k in range(counts[i])], dtype=np.int64)
        X = centers[y] + spread * rng.standard_normal((counts[i], centers.shape[1]))
        owners.append(OwnerDataset(i, X, y, "classification"))
    return owners
