"""End-to-end valuation runs.

:func:`run_valuation` strings the pieces together:

1. enumerate every coalition (``method="exact"``) or sample permutations
   and collect their prefixes (``method="permutation"``);
2. split the coalitions at random into evaluated and predicted parts, the
   grand coalition always evaluated; optionally move more coalitions to the
   evaluated side by greedy variance reduction;
3. evaluate, fit the GP, predict the rest;
4. combine actual and predicted utilities into semivalues with GP (and,
   for permutations, Monte Carlo) uncertainty.

Every random choice derives from ``RunConfig.seed`` so identical configs
produce identical reports.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .active import SelectionState, aggregate_weight, greedy_select
from .datasets import (
    Coalition,
    OwnerDataset,
    all_coalitions,
    check_problem,
    load_csv,
    make_blobs,
    make_moons,
    make_moons_validation,
)
from .exceptions import CoalvalError, ConfigError, OwnerMismatch
from .gp import GPModel, HyperGrid, Posterior, fit, predict
from .kernel import FAMILIES, CoalitionKernel
from .semivalue import (
    EvaluationLedger,
    SemivalueReport,
    SemivalueWeights,
    monte_carlo_std,
    permutation_weight_matrix,
    sample_permutation_coalitions,
    weight_matrix,
)
from .transport import CoalitionDistances, SWParams
from .utility import Utility, parse_utility

KERNEL_CHOICES = ("ssw", "sw") + FAMILIES
METHODS = ("exact", "permutation")


@dataclass
class RunConfig:
    """Everything a valuation run depends on.

    ``dataset`` is either ``{"csv": path, "target_column": ..., "owner_column":
    ..., "task": ..., "validation_csv": path}`` or a generator spec
    ``{"generator": "moons" | "blobs", ...}`` whose remaining keys are passed
    to :func:`~coalval.datasets.make_moons` / :func:`~coalval.datasets.make_blobs`
    (plus ``validation_points``).  A ``table:PATH`` utility needs no dataset
    unless a transport kernel is used.
    """

    dataset: dict = field(default_factory=dict)
    utility: str = "knn:5"
    kernel: str = "ssw"
    grid: dict = field(default_factory=dict)
    method: str = "exact"
    semivalue: str = "shapley"
    budget: int | None = None
    actual_fraction: float = 0.5
    active_fraction: float = 0.0
    seed: int = 0
    n_projections: int = 100
    projection_seed: int | None = None
    n_owners: int | None = None
    threads: int | None = None
    output: str | None = None
    curve_csv: str | None = None
    curve_steps: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 < self.actual_fraction <= 1:
            raise ConfigError(f"actual_fraction must lie in (0, 1], got {self.actual_fraction}")
        if not 0 <= self.active_fraction <= 1:
            raise ConfigError(f"active_fraction must lie in [0, 1], got {self.active_fraction}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.semivalue not in ("shapley", "banzhaf"):
            raise ConfigError("semivalue must be shapley or banzhaf")
        if self.method == "permutation" and self.semivalue != "shapley":
            raise ConfigError("permutation sampling estimates Shapley values only")
        if self.method == "permutation" and not self.budget:
            raise ConfigError("permutation sampling needs a coalition budget")
        if self.kernel not in KERNEL_CHOICES:
            raise ConfigError(f"kernel must be one of {KERNEL_CHOICES}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.n_projections < 1:
            raise ConfigError("n_projections must be >= 1")
        unknown = set(self.grid) - {"gammas", "noise_vars", "etas", "rhos"}
        if unknown:
            raise ConfigError(f"unknown grid keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**dict(d))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)


@contextmanager
def stage(name: str):
    """Tag package errors raised inside with the pipeline stage they came from."""
    try:
        yield
    except CoalvalError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


# ----------------------------------------------------------------------------
# building blocks


def load_problem(config: RunConfig):
    """Owners and validation set ``(owners, X_val, y_val)`` described by ``config.dataset``."""
    ds = dict(config.dataset)
    if not ds:
        return None, None, None
    if "csv" in ds:
        task = ds.get("task", "classification")
        target = ds.get("target_column", "target")
        owner_col = ds.get("owner_column", "owner")
        owners = load_csv(ds["csv"], target, task, owner_col)
        X_val = y_val = None
        if ds.get("validation_csv"):
            # validation rows may carry any owner value; pool them
            val = load_csv(ds["validation_csv"], target, task, owner_col)
            X_val = np.concatenate([o.features for o in val])
            y_val = np.concatenate([o.targets for o in val])
            if task == "classification" and val[0].label_names != owners[0].label_names:
                names = owners[0].label_names
                remap = {n: k for k, n in enumerate(names)}
                try:
                    y_val = np.array(
                        [remap[val[0].label_names[int(t)]] for t in y_val], dtype=np.int64
                    )
                except KeyError as exc:
                    raise ConfigError(f"validation label {exc} unknown to training data") from None
        return owners, X_val, y_val
    gen = ds.pop("generator", None)
    n_val = int(ds.pop("validation_points", 500))
    seed = int(ds.get("seed", config.seed))
    ds["seed"] = seed
    if gen == "moons":
        owners = make_moons(**ds)
        X_val, y_val = make_moons_validation(n_val, ds.get("noise", 0.1), seed + 10_007)
    elif gen == "blobs":
        owners = make_blobs(**ds)
        centers = np.asarray(ds["class_centers"], dtype=np.float64)
        rng = np.random.default_rng(seed + 10_007)
        y_val = rng.integers(0, len(centers), n_val)
        X_val = centers[y_val] + ds["spread"] * rng.standard_normal((n_val, centers.shape[1]))
    else:
        raise ConfigError(f"unknown dataset generator {gen!r}")
    return owners, X_val, y_val


def make_grid(kernel: str, overrides: Mapping | None = None) -> HyperGrid:
    """Default search grid for a kernel choice, with optional overrides."""
    kw = {k: tuple(float(x) for x in v) for k, v in (overrides or {}).items()}
    if kernel == "ssw":
        return HyperGrid(**kw)
    if kernel == "sw":
        kw["etas"] = (1.0,)
        return HyperGrid(**kw)
    if kernel == "binary_rbf":
        kw.pop("etas", None)
        kw.pop("rhos", None)
        return HyperGrid.binary(**kw)
    if kernel == "otdd_exp":
        kw["etas"] = (1.0,)
        return HyperGrid(families=("otdd_exp",), **kw)
    return HyperGrid(families=(kernel,), **kw)


def make_kernel(kernel: str, owners, n_owners: int, n_projections: int = 100, seed: int = 0):
    if kernel == "binary_rbf":
        return CoalitionKernel(None, n_owners)
    if owners is None:
        raise ConfigError(f"kernel {kernel!r} needs owner datasets")
    p = 1 if kernel == "otdd_exp" else 2
    return CoalitionKernel(CoalitionDistances(owners, SWParams(p=p, n_projections=n_projections, seed=seed)))


def partition(
    coalitions: Sequence[Coalition], n_owners: int, actual_fraction: float, seed: int
) -> tuple[list[Coalition], list[Coalition]]:
    """Random split into (evaluated, predicted); the grand coalition is always evaluated.

    ``round(actual_fraction * len(coalitions))`` coalitions (at least one,
    the grand coalition) are evaluated.  Both parts keep the input order.
    """
    grand = Coalition.grand(n_owners)
    coalitions = list(coalitions)
    others = [c for c in coalitions if c != grand]
    n_actual = max(1, int(round(actual_fraction * len(coalitions))))
    rng = np.random.default_rng(seed)
    pick = set(rng.choice(len(others), size=min(n_actual - 1, len(others)), replace=False).tolist())
    chosen = {grand} | {others[k] for k in pick}
    A = [c for c in coalitions if c in chosen]
    if grand not in A:
        A.append(grand)
    B = [c for c in coalitions if c not in chosen]
    return A, B


@dataclass
class HybridResult:
    """Utilities of all coalitions in play, each actual or GP-predicted."""

    coalitions: tuple[Coalition, ...]
    actual: tuple[Coalition, ...]
    predicted: tuple[Coalition, ...]
    u_actual: np.ndarray
    model: GPModel | None
    posterior: Posterior | None
    ledger: EvaluationLedger
    selection: SelectionState | None = None

    def utilities(self) -> np.ndarray:
        """Actual or predicted-mean utility of every coalition, aligned with ``coalitions``."""
        return np.array([self.ledger[c] for c in self.coalitions])


def hybrid_utilities(
    utility: Utility,
    coalitions: Sequence[Coalition],
    actual: Sequence[Coalition],
    kernel: CoalitionKernel,
    grid: HyperGrid,
    weights: np.ndarray | None = None,
    n_active: int = 0,
    threads: int = 1,
) -> HybridResult:
    """Evaluate ``actual``, fit the GP, optionally add ``n_active`` greedy picks, predict the rest.

    ``weights`` (owners x coalitions, aligned with ``coalitions``) drive the
    greedy selection and are only needed when ``n_active > 0``.
    """
    coalitions = tuple(coalitions)
    actual = list(actual)
    in_a = set(actual)
    predicted = [c for c in coalitions if c not in in_a]
    ledger = EvaluationLedger()
    with stage("evaluate"):
        _evaluate_all(utility, actual, ledger, threads)
    model = selection = None
    if predicted:
        with stage("fit"):
            model = fit(kernel, actual, [ledger[c] for c in actual], grid)
        if n_active > 0:
            with stage("active"):
                idx = {c: j for j, c in enumerate(coalitions)}
                w = aggregate_weight(weights[:, [idx[c] for c in predicted]])
                selection = greedy_select(model, predicted, w, min(n_active, len(predicted)))
            with stage("evaluate"):
                _evaluate_all(utility, selection.chosen, ledger, threads)
            actual += selection.chosen
            in_a = set(actual)
            predicted = [c for c in predicted if c not in in_a]
            with stage("fit"):
                model = fit(kernel, actual, [ledger[c] for c in actual], grid)
    posterior = None
    if predicted:
        with stage("predict"):
            posterior = predict(model, predicted)
        for c, m in zip(predicted, posterior.mean):
            ledger.record_predicted(c, float(m))
    u_a = np.array([ledger[c] for c in actual])
    return HybridResult(coalitions, tuple(actual), tuple(predicted), u_a, model, posterior, ledger, selection)


def _evaluate_all(utility: Utility, coalitions, ledger: EvaluationLedger, threads: int) -> None:
    # values are recorded in input order whatever the pool size
    if threads > 1 and len(coalitions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            values = list(ex.map(utility, coalitions))
    else:
        values = [utility(c) for c in coalitions]
    for c, v in zip(coalitions, values):
        ledger.record_actual(c, v)


def assemble(
    W: np.ndarray, coalitions: Sequence[Coalition], hybrid: HybridResult
) -> tuple[np.ndarray, np.ndarray]:
    """Per-owner mean and GP standard deviation of ``W @ u`` given the hybrid utilities."""
    idx = {c: j for j, c in enumerate(coalitions)}
    ja = [idx[c] for c in hybrid.actual]
    jb = [idx[c] for c in hybrid.predicted]
    mean = W[:, ja] @ hybrid.u_actual
    var = np.zeros(W.shape[0])
    if jb:
        WB = W[:, jb]
        mean = mean + WB @ hybrid.posterior.mean
        var = np.einsum("ij,jk,ik->i", WB, hybrid.posterior.cov, WB)
    return mean, np.sqrt(np.clip(var, 0.0, None))


# ----------------------------------------------------------------------------
# runs


def _setup(config: RunConfig, owners=None, utility: Utility | None = None):
    with stage("load"):
        X_val = y_val = None
        if owners is None:
            owners, X_val, y_val = load_problem(config)
        if owners is not None:
            check_problem(owners)
        n = len(owners) if owners is not None else config.n_owners
        if n is None:
            raise ConfigError("owner count unknown: give a dataset or n_owners")
        if utility is None:
            utility = parse_utility(config.utility, owners, X_val, y_val)
    with stage("kernel"):
        pseed = config.seed if config.projection_seed is None else config.projection_seed
        kernel = make_kernel(config.kernel, owners, n, config.n_projections, pseed)
        grid = make_grid(config.kernel, config.grid)
    return owners, n, utility, kernel, grid


def run_valuation(
    config: RunConfig, owners: Sequence[OwnerDataset] | None = None, utility: Utility | None = None
) -> SemivalueReport:
    """Run the full hybrid valuation described by ``config``.

    ``owners`` and ``utility`` may be passed directly instead of being built
    from the config.  When ``config.output`` is set the report JSON is
    written there; ``config.curve_csv`` adds an uncertainty curve.
    """
    config.validate()
    owners, n, utility, kernel, grid = _setup(config, owners, utility)

    with stage("sample"):
        if config.method == "exact":
            coalitions = all_coalitions(n)
            perms = None
        else:
            sample = sample_permutation_coalitions(config.budget, n, config.seed)
            coalitions, perms = list(sample.coalitions), sample.permutations
        if config.method == "exact":
            W = weight_matrix(SemivalueWeights.named(config.semivalue, n), coalitions)
        else:
            W = permutation_weight_matrix(perms, coalitions, n)
        A, _ = partition(coalitions, n, config.actual_fraction, config.seed)
        n_active = int(round(config.active_fraction * (1 - config.actual_fraction) * len(coalitions)))

    threads = config.threads or os.cpu_count() or 1
    hybrid = hybrid_utilities(utility, coalitions, A, kernel, grid, W, n_active, threads)
    with stage("assemble"):
        mean, std_gp = assemble(W, coalitions, hybrid)
        std_mc = monte_carlo_std(perms, hybrid.ledger, n) if perms is not None else None

    report = SemivalueReport(
        mean=mean,
        std_gp=std_gp,
        std_mc=std_mc,
        method=config.method,
        semivalue=config.semivalue,
        n_actual=len(hybrid.actual),
        n_predicted=len(hybrid.predicted),
        provenance=provenance_table(hybrid),
        model=None if hybrid.model is None else hybrid.model.summary(),
    )
    if hybrid.selection is not None:
        report.model["active_picks"] = [c.bits for c in hybrid.selection.chosen]
    if config.output:
        write_report(report, config.output)
        if owners is not None and owners[0].label_names is not None:
            labels = {str(k): name for k, name in enumerate(owners[0].label_names)}
            Path(str(config.output) + ".labels.json").write_text(
                json.dumps(labels, indent=1, sort_keys=True) + "\n", encoding="utf-8"
            )
    if config.curve_csv:
        steps = config.curve_steps or 5
        write_curve(uncertainty_curve(config, steps, owners, utility), config.curve_csv)
    return report


def provenance_table(hybrid: HybridResult) -> list[dict]:
    rows = []
    for c in sorted(hybrid.coalitions, key=lambda c: c.bits):
        e = hybrid.ledger.entry(c)
        rows.append({"coalition": c.bits, "members": list(c.members), "source": e.source, "utility": e.utility})
    return rows


def uncertainty_curve(
    config: RunConfig,
    steps: int,
    owners: Sequence[OwnerDataset] | None = None,
    utility: Utility | None = None,
) -> list[dict]:
    """Semivalue mean and one-sigma band as more coalitions are evaluated.

    Evaluated sets are nested: a single seeded order of the non-grand
    coalitions is revealed in ``steps`` increments, from
    ``config.actual_fraction`` of all coalitions up to all but one.
    """
    owners, n, utility, kernel, grid = _setup(config, owners, utility)
    if config.method == "exact":
        coalitions = all_coalitions(n)
        W = weight_matrix(SemivalueWeights.named(config.semivalue, n), coalitions)
    else:
        sample = sample_permutation_coalitions(config.budget, n, config.seed)
        coalitions = list(sample.coalitions)
        W = permutation_weight_matrix(sample.permutations, coalitions, n)
    grand = Coalition.grand(n)
    others = [c for c in coalitions if c != grand]
    order = np.random.default_rng(config.seed).permutation(len(others))
    lo = max(1, int(round(config.actual_fraction * len(coalitions))))
    counts = np.unique(np.linspace(lo, len(coalitions) - 1, max(steps, 1)).round().astype(int))
    rows = []
    for k in counts:
        A = [grand] + [others[j] for j in order[: k - 1]]
        hybrid = hybrid_utilities(utility, coalitions, A, kernel, grid)
        mean, sd = assemble(W, coalitions, hybrid)
        row = {"n_evaluated": int(k)}
        for i in range(n):
            row[f"mean_{i}"] = float(mean[i])
            row[f"lower_{i}"] = float(mean[i] - sd[i])
            row[f"upper_{i}"] = float(mean[i] + sd[i])
        rows.append(row)
    return rows


# ----------------------------------------------------------------------------
# metrics and output


def mse(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.mean((a - b) ** 2))


def pearson(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if np.std(a) == 0 or np.std(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def kendall_tau(a, b) -> float:
    return float(stats.kendalltau(a, b).statistic)


def compare_reports(report: SemivalueReport, reference: SemivalueReport) -> dict:
    if report.n_owners != reference.n_owners:
        raise OwnerMismatch(f"{report.n_owners} owners vs {reference.n_owners} in the reference")
    return {
        "mse": mse(report.mean, reference.mean),
        "pearson": pearson(report.mean, reference.mean),
        "kendall_tau": kendall_tau(report.mean, reference.mean),
    }


def compare_methods(results: Mapping[str, Sequence[SemivalueReport]], reference: SemivalueReport) -> dict:
    """MSE, Pearson and Kendall tau of each method against ``reference``, mean and std over runs."""
    table = {}
    for name, reports in results.items():
        rows = [compare_reports(r, reference) for r in reports]
        table[name] = {
            k: {"mean": float(np.mean([r[k] for r in rows])), "std": float(np.std([r[k] for r in rows]))}
            for k in ("mse", "pearson", "kendall_tau")
        }
    return table


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def report_json(report: SemivalueReport) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=True, default=_json_default) + "\n"


def write_report(report: SemivalueReport, path: str | Path) -> None:
    Path(path).write_text(report_json(report), encoding="utf-8")


def read_report(path: str | Path) -> SemivalueReport:
    with open(path, encoding="utf-8") as fh:
        return SemivalueReport.from_dict(json.load(fh))


def write_curve(rows: list[dict], path: str | Path) -> None:
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def report_schema() -> dict:
    """The JSON schema every written report satisfies."""
    path = Path(__file__).with_name("report_schema.json")
    return json.loads(path.read_text(encoding="utf-8"))
