"""Per-bitstream records and CSV dataset ingestion.

A dataset row holds one bit stream's identity metadata, its measured
decoding energy statistics, and a dense feature-count vector over one of
the two catalogs.  The CSV schema is fixed: eight metadata columns
followed by the catalog's feature columns in canonical order.  Header
drift (a missing, extra, or misordered feature column) is a hard error.

Values use ``.`` as the decimal separator and no thousands separators.
Feature counts are stored as reals so the logarithmically accumulated
``val`` feature can be fractional; every other feature must be integral.
Files written by :func:`save_dataset` start with a ``#``-prefixed version
comment which the loader skips.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from decenergy.catalog import CountingLevel, FeatureCatalog, build_catalog
from decenergy.errors import SchemaError, ValidationError

METADATA_COLUMNS = (
    "id",
    "sequence",
    "config",
    "qp",
    "tool_off",
    "energy_joules",
    "energy_stddev",
    "sample_count",
)

# Coding tools that may be switched off when encoding extra training streams.
TOOL_ACRONYMS = ("ALF", "BDOF", "DMVR", "ISP", "LFNST", "MIP", "MTS", "TPM")

SETUP_LABELS = ("CTC", "ToolOff", "Merge", "Synthetic")


@dataclass(frozen=True)
class BitstreamRecord:
    """One bit stream: metadata, measured energy statistics, feature counts."""

    id: str
    sequence: str
    config: str
    qp: int
    tool_off: str | None
    energy_joules: float
    energy_stddev: float
    sample_count: int
    features: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _frozen_vector(self.features))
        if not self.id:
            raise ValidationError("record id must be nonempty")
        if self.tool_off is not None and self.tool_off not in TOOL_ACRONYMS:
            raise ValidationError(
                f"record {self.id!r}: tool_off must be one of {TOOL_ACRONYMS}, "
                f"got {self.tool_off!r}"
            )
        if not (self.energy_joules > 0):
            raise ValidationError(
                f"record {self.id!r}: energy_joules must be positive, got {self.energy_joules}"
            )
        if self.energy_stddev < 0:
            raise ValidationError(
                f"record {self.id!r}: energy_stddev must be nonnegative, got {self.energy_stddev}"
            )
        if self.sample_count < 1:
            raise ValidationError(
                f"record {self.id!r}: sample_count must be >= 1, got {self.sample_count}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValidationError(f"record {self.id!r}: feature counts must be finite")
        if np.any(self.features < 0):
            raise ValidationError(f"record {self.id!r}: feature counts must be nonnegative")


def _frozen_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"feature vector must be one-dimensional, got shape {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of records over one catalog."""

    catalog_kind: str
    records: tuple[BitstreamRecord, ...]
    setup_label: str = "CTC"

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        catalog = build_catalog(self.catalog_kind)
        object.__setattr__(self, "catalog_kind", catalog.kind)
        if self.setup_label not in SETUP_LABELS:
            raise ValidationError(
                f"setup_label must be one of {SETUP_LABELS}, got {self.setup_label!r}"
            )
        seen: set[str] = set()
        val_col = catalog.column_index("val")
        for rec in self.records:
            if rec.id in seen:
                raise ValidationError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if rec.features.shape != (catalog.column_count,):
                raise ValidationError(
                    f"record {rec.id!r}: expected {catalog.column_count} feature values "
                    f"for the {catalog.kind} catalog, got {rec.features.shape[0]}"
                )
            _check_integrality(rec, val_col, catalog)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def catalog(self) -> FeatureCatalog:
        return build_catalog(self.catalog_kind)


def _check_integrality(rec: BitstreamRecord, val_col: int, catalog: FeatureCatalog) -> None:
    """All features except the log-accumulated ``val`` must be whole counts."""
    counts = rec.features
    mask = np.ones(len(counts), dtype=bool)
    mask[val_col] = False
    fractional = mask & (counts != np.floor(counts))
    if np.any(fractional):
        bad = catalog.column_names[int(np.flatnonzero(fractional)[0])]
        raise ValidationError(
            f"record {rec.id!r}: feature {bad!r} must be integral, "
            f"got {counts[catalog.column_index(bad)]}"
        )


def expected_header(catalog_kind: str) -> tuple[str, ...]:
    """The full canonical CSV header for a catalog kind."""
    return METADATA_COLUMNS + build_catalog(catalog_kind).column_names


def detect_catalog_kind(header: list[str] | tuple[str, ...]) -> str:
    """Infer FV or FVS from a CSV header, or raise SchemaError."""
    header = tuple(header)
    for kind in ("FV", "FVS"):
        if header == expected_header(kind):
            return kind
    raise SchemaError("header matches neither the FV nor the FVS dataset schema")


def _check_header(header: list[str], catalog_kind: str) -> None:
    expected = expected_header(catalog_kind)
    got = tuple(header)
    if got == expected:
        return
    missing = [c for c in expected if c not in got]
    extra = [c for c in got if c not in expected]
    if missing:
        raise SchemaError(f"header is missing column {missing[0]!r}")
    if extra:
        raise SchemaError(f"header has unexpected column {extra[0]!r}")
    for i, (g, e) in enumerate(zip(got, expected)):
        if g != e:
            raise SchemaError(f"header column {i} is {g!r}, expected {e!r}")
    raise SchemaError("header does not match the expected schema")


def _parse_row(row: list[str], line_no: int, catalog: FeatureCatalog) -> BitstreamRecord:
    n_meta = len(METADATA_COLUMNS)
    expected_len = n_meta + catalog.column_count
    if len(row) != expected_len:
        raise SchemaError(f"line {line_no}: expected {expected_len} fields, got {len(row)}")
    rec_id, sequence, config, qp_s, tool_off_s, energy_s, stddev_s, count_s = row[:n_meta]

    def parse(field_name: str, text: str, conv):
        try:
            return conv(text)
        except ValueError:
            raise ValidationError(
                f"line {line_no} ({rec_id!r}): field {field_name!r} has invalid value {text!r}"
            ) from None

    qp = parse("qp", qp_s, int)
    energy = parse("energy_joules", energy_s, float)
    stddev = parse("energy_stddev", stddev_s, float)
    sample_count = parse("sample_count", count_s, int)
    features = np.empty(catalog.column_count)
    for j, text in enumerate(row[n_meta:]):
        features[j] = parse(catalog.column_names[j], text, float)
    try:
        return BitstreamRecord(
            id=rec_id,
            sequence=sequence,
            config=config,
            qp=qp,
            tool_off=tool_off_s or None,
            energy_joules=energy,
            energy_stddev=stddev,
            sample_count=sample_count,
            features=features,
        )
    except ValidationError as exc:
        raise ValidationError(f"line {line_no}: {exc}") from None


def load_dataset(path: str | Path, catalog_kind: str, setup_label: str = "CTC") -> Dataset:
    """Load and validate a dataset CSV against a catalog's canonical schema.

    Every row's feature columns must match the catalog's header names
    exactly and in full; leading ``#`` comment lines are skipped.
    """
    path = Path(path)
    catalog = build_catalog(catalog_kind)
    records: list[BitstreamRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        line_no = 0
        reader = csv.reader(fh)
        header = None
        for row in reader:
            line_no += 1
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = row
                _check_header(header, catalog.kind)
                continue
            records.append(_parse_row(row, line_no, catalog))
    if header is None:
        raise SchemaError(f"{path}: no header row found")
    return Dataset(catalog_kind=catalog.kind, records=tuple(records), setup_label=setup_label)


def format_count(value: float) -> str:
    """Exact, compact CSV rendering: integers bare, reals via repr round-trip."""
    if value == np.floor(value) and abs(value) < 2**53:
        return str(int(value))
    return repr(float(value))


def save_dataset(dataset: Dataset, path: str | Path, version: str | None = None) -> Path:
    """Write a dataset in canonical CSV form (load -> save is a fixed point)."""
    from decenergy import __version__

    path = Path(path)
    header = expected_header(dataset.catalog_kind)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# decenergy {version or __version__}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in dataset.records:
            row = [
                rec.id,
                rec.sequence,
                rec.config,
                str(rec.qp),
                rec.tool_off or "",
                repr(float(rec.energy_joules)),
                repr(float(rec.energy_stddev)),
                str(rec.sample_count),
            ]
            row.extend(format_count(v) for v in rec.features)
            writer.writerow(row)
    return path


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Concatenate two datasets over the same catalog into a Merge set.

    Record ids must be disjoint; input order is preserved (a then b).
    """
    if a.catalog_kind != b.catalog_kind:
        raise ValidationError(
            f"cannot merge datasets over different catalogs: "
            f"{a.catalog_kind} vs {b.catalog_kind}"
        )
    ids_a = {r.id for r in a.records}
    dup = [r.id for r in b.records if r.id in ids_a]
    if dup:
        raise ValidationError(f"duplicate record id {dup[0]!r} in both datasets")
    return Dataset(
        catalog_kind=a.catalog_kind,
        records=a.records + b.records,
        setup_label="Merge",
    )


def design_matrix(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack a dataset into (A, E): feature rows and measured energies.

    Row n of A is record n's feature vector; E[n] is its measured energy
    in joules.  Row order matches ``dataset.records``.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot build a design matrix from an empty dataset")
    a = np.vstack([rec.features for rec in dataset.records])
    e = np.array([rec.energy_joules for rec in dataset.records])
    return a, e


def relabel(dataset: Dataset, setup_label: str) -> Dataset:
    """Return a copy of the dataset with a different setup label."""
    return replace(dataset, setup_label=setup_label)
