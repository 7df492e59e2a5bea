"""Model accuracy evaluation: relative error and k-fold cross-validation.

The headline accuracy number is the mean relative estimation error

    eps_bar = (1/N) * sum_n |E_hat_n - E_n| / E_n

Cross-validation splits the dataset into k folds from a seeded
permutation, fits on k-1 folds, estimates the held-out fold, and pools
every out-of-fold estimate into one eps_bar.  Folds can optionally be
assigned per group (e.g. per video sequence) so that no sequence
contributes rows to both a training and its test fold.

Reports are plain data with a deterministic JSON rendering; plotting
lives elsewhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from decenergy.dataset import Dataset, design_matrix
from decenergy.errors import ValidationError
from decenergy.estimator import EnergyModel, FitConfig, fit

DEFAULT_FOLDS = 10


def mean_relative_error(estimated, measured) -> float:
    """Mean of |estimate - measurement| / measurement.

    Measurements must be positive; the two vectors must have equal,
    nonzero length.
    """
    e_hat = np.asarray(estimated, dtype=float)
    e = np.asarray(measured, dtype=float)
    if e.shape != e_hat.shape or e.ndim != 1:
        raise ValidationError(
            f"estimated and measured shapes differ: {e_hat.shape} vs {e.shape}"
        )
    if len(e) == 0:
        raise ValidationError("relative error of an empty set is undefined")
    if np.any(e <= 0):
        raise ValidationError("measured energies must be positive")
    return float(np.mean(np.abs(e_hat - e) / e))


@dataclass(frozen=True)
class FoldAssignment:
    """A seeded assignment of record ids to folds 0..k-1."""

    seed: int
    k: int
    fold_of: dict[str, int]

    def fold_sizes(self) -> tuple[int, ...]:
        sizes = [0] * self.k
        for f in self.fold_of.values():
            sizes[f] += 1
        return tuple(sizes)


def make_folds(
    dataset: Dataset,
    k: int,
    seed: int,
    group_field: str | None = None,
) -> FoldAssignment:
    """Assign records to k near-equal folds from a seeded shuffle.

    The permutation is drawn from a PCG64 generator so assignments are
    reproducible across platforms.  The first N % k folds receive one
    extra record.  With ``group_field`` set (a record attribute such as
    "sequence"), whole groups are assigned to folds instead of records,
    so related rows never straddle a fold boundary.
    """
    n = len(dataset)
    if k < 2:
        raise ValidationError(f"fold count must be >= 2, got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))

    if group_field is None:
        if k > n:
            raise ValidationError(f"cannot split {n} records into {k} folds")
        order = rng.permutation(n)
        fold_of: dict[str, int] = {}
        start = 0
        for fold in range(k):
            size = n // k + (1 if fold < n % k else 0)
            for i in order[start : start + size]:
                fold_of[dataset.records[int(i)].id] = fold
            start += size
        return FoldAssignment(seed=seed, k=k, fold_of=fold_of)

    groups: list[str] = []
    seen: set[str] = set()
    for rec in dataset.records:
        label = str(getattr(rec, group_field))
        if label not in seen:
            seen.add(label)
            groups.append(label)
    if k > len(groups):
        raise ValidationError(
            f"cannot split {len(groups)} groups ({group_field}) into {k} folds"
        )
    order = rng.permutation(len(groups))
    group_fold: dict[str, int] = {}
    start = 0
    for fold in range(k):
        size = len(groups) // k + (1 if fold < len(groups) % k else 0)
        for i in order[start : start + size]:
            group_fold[groups[int(i)]] = fold
        start += size
    fold_of = {
        rec.id: group_fold[str(getattr(rec, group_field))] for rec in dataset.records
    }
    return FoldAssignment(seed=seed, k=k, fold_of=fold_of)


@dataclass(frozen=True)
class RecordResult:
    """One record's measured and estimated energy."""

    id: str
    measured_joules: float
    estimated_joules: float
    fold_index: int

    @property
    def relative_error(self) -> float:
        return abs(self.estimated_joules - self.measured_joules) / self.measured_joules


@dataclass(frozen=True)
class EvaluationReport:
    """Per-record estimates plus the pooled mean relative error."""

    setup_label: str
    catalog_kind: str
    epsilon_bar: float
    fold_count: int
    seed: int | None
    records: tuple[RecordResult, ...]

    def to_dict(self) -> dict:
        from decenergy import __version__

        return {
            "version": __version__,
            "setup_label": self.setup_label,
            "catalog_kind": self.catalog_kind,
            "record_count": len(self.records),
            "fold_count": self.fold_count,
            "seed": self.seed,
            "epsilon_bar": self.epsilon_bar,
            "records": [
                {
                    "id": r.id,
                    "measured_joules": r.measured_joules,
                    "estimated_joules": r.estimated_joules,
                    "relative_error": r.relative_error,
                    "fold_index": r.fold_index,
                }
                for r in self.records
            ],
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> EvaluationReport:
        data = json.loads(Path(path).read_text())
        records = tuple(
            RecordResult(
                id=r["id"],
                measured_joules=r["measured_joules"],
                estimated_joules=r["estimated_joules"],
                fold_index=r["fold_index"],
            )
            for r in data["records"]
        )
        return cls(
            setup_label=data["setup_label"],
            catalog_kind=data["catalog_kind"],
            epsilon_bar=data["epsilon_bar"],
            fold_count=data["fold_count"],
            seed=data["seed"],
            records=records,
        )


def evaluate_dataset(dataset: Dataset, model: EnergyModel) -> EvaluationReport:
    """Estimate every record with a fixed model (no cross-validation)."""
    if model.catalog_kind is not None and model.catalog_kind != dataset.catalog_kind:
        raise ValidationError(
            f"model is for catalog {model.catalog_kind}, dataset is {dataset.catalog_kind}"
        )
    a, e = design_matrix(dataset)
    e_hat = model.predict(a)
    results = tuple(
        RecordResult(
            id=rec.id,
            measured_joules=float(e[i]),
            estimated_joules=float(e_hat[i]),
            fold_index=-1,
        )
        for i, rec in enumerate(dataset.records)
    )
    return EvaluationReport(
        setup_label=dataset.setup_label,
        catalog_kind=dataset.catalog_kind,
        epsilon_bar=mean_relative_error(e_hat, e),
        fold_count=0,
        seed=None,
        records=results,
    )


def cross_validate(
    dataset: Dataset,
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    fit_config: FitConfig | None = None,
    group_field: str | None = None,
) -> EvaluationReport:
    """k-fold cross-validation pooling all out-of-fold estimates.

    Every record is estimated exactly once, by the model fitted on the
    k-1 folds that exclude it; eps_bar is the mean relative error over
    the pooled estimates.
    """
    folds = make_folds(dataset, k, seed, group_field=group_field)
    a, e = design_matrix(dataset)
    fold_idx = np.array([folds.fold_of[rec.id] for rec in dataset.records])
    e_hat = np.empty(len(dataset))
    for fold in range(k):
        test = fold_idx == fold
        train = ~test
        if not np.any(test):
            continue
        if not np.any(train):
            raise ValidationError(f"fold {fold} leaves no training records")
        model = fit(a[train], e[train], fit_config)
        e_hat[test] = model.predict(a[test])
    results = tuple(
        RecordResult(
            id=rec.id,
            measured_joules=float(e[i]),
            estimated_joules=float(e_hat[i]),
            fold_index=int(fold_idx[i]),
        )
        for i, rec in enumerate(dataset.records)
    )
    return EvaluationReport(
        setup_label=dataset.setup_label,
        catalog_kind=dataset.catalog_kind,
        epsilon_bar=mean_relative_error(e_hat, e),
        fold_count=k,
        seed=seed,
        records=results,
    )


def scatter_rows(report: EvaluationReport) -> list[tuple[str, float, float, float]]:
    """(id, measured, estimated, relative error) rows in report order."""
    return [
        (r.id, r.measured_joules, r.estimated_joules, r.relative_error)
        for r in report.records
    ]


def export_scatter_csv(report: EvaluationReport, path: str | Path) -> tuple[Path, Path]:
    """Write scatter points plus a two-point identity-line companion file.

    The companion ``<stem>_identity.csv`` spans the measured-energy range
    so plotting tools can draw the perfect-estimation diagonal without
    computing it.
    """
    import csv

    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["id", "E_measured_joules", "E_estimated_joules", "relative_error"]
        )
        for rec_id, measured, estimated, rel in scatter_rows(report):
            writer.writerow([rec_id, repr(measured), repr(estimated), repr(rel)])
    identity_path = path.with_name(path.stem + "_identity" + path.suffix)
    lo = min(r.measured_joules for r in report.records)
    hi = max(r.measured_joules for r in report.records)
    with identity_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["E_measured_joules", "E_estimated_joules"])
        writer.writerow([repr(lo), repr(lo)])
        writer.writerow([repr(hi), repr(hi)])
    return path, identity_path
