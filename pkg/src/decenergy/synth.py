"""Synthetic datasets with known ground-truth feature energies.

Real corpora need an instrumented decoder and measurement hardware; the
generator here builds datasets of the same shape whose energies are an
exactly known linear function of the feature counts, so fitting and
cross-validation can be checked against ground truth.

A generated corpus mirrors a codec test run: a base grid of sequences x
QPs x coder configurations, optionally augmented with "tool-off" sets
in which one coding tool is disabled.  Count magnitudes are drawn from
log-uniform ranges per counting level (pel-level counts dwarf CTB-level
counts, which dwarf slice-level counts); the residual-coefficient
features shrink with rising QP.  A record's energy is the dot product
of its counts with ``e_true``, optionally perturbed by a noise model.

Generation is a pure function of the config: one PCG64 stream, seeded
from ``config.seed``, is consumed in a fixed order, so outputs are
bit-identical across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from decenergy.catalog import (
    BLOCKPEL_PEL_COUNTS,
    CountingLevel,
    FeatureCategory,
    aggregate_fv_to_fvs,
    build_catalog,
)
from decenergy.dataset import TOOL_ACRONYMS, BitstreamRecord, Dataset
from decenergy.errors import ValidationError

E_TRUE_LOG_RANGE = (-8.0, -4.0)  # joules per occurrence, log10

# Disabling a tool removes its occurrences; blocks it would have coded
# fall back to a sibling mode.  MTS leaves no trace in the counted
# features (its transforms land in the same transform columns).
TOOL_EFFECTS: dict[str, tuple[tuple[str, ...], str | None]] = {
    "ALF": (("alf_luma", "alf_chroma"), None),
    "BDOF": (("bdof",), "inter_inter"),
    "DMVR": (("dmvr",), "inter_inter"),
    "ISP": (("isp",), "intra_blocks"),
    "LFNST": (("lfnst",), "transform"),
    "MIP": (("mip",), "intra_blocks"),
    "MTS": ((), None),
    "TPM": (("triangle_split",), "inter_inter"),
}

# One tool-off encode set per tool: six random-access sets of 92 streams
# (23 sequences x 4 QPs) and two all-intra sets of 104 (26 x 4).
DEFAULT_TOOL_OFF_PLAN: tuple[tuple[str, str, int], ...] = (
    ("ALF", "RA", 92),
    ("BDOF", "RA", 92),
    ("DMVR", "RA", 92),
    ("ISP", "AI", 104),
    ("LFNST", "RA", 92),
    ("MIP", "AI", 104),
    ("MTS", "RA", 92),
    ("TPM", "RA", 92),
)

DEFAULT_CONFIGS = ("RA", "AI", "LB")
DEFAULT_QPS = (22, 27, 32, 37)


@dataclass(frozen=True)
class NoiseModel:
    """Energy perturbation: none, multiplicative, or additive Gaussian."""

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "multiplicative", "additive"):
            raise ValidationError(
                f"noise kind must be none, multiplicative, or additive, got {self.kind!r}"
            )
        if self.sigma < 0:
            raise ValidationError(f"noise sigma must be nonnegative, got {self.sigma}")
        if self.kind == "none" and self.sigma != 0.0:
            raise ValidationError("noise kind 'none' cannot carry a sigma")

    @classmethod
    def parse(cls, text: str) -> NoiseModel:
        """Parse "none", "mult:<sigma_rel>", or "add:<sigma_abs>"."""
        if text == "none":
            return cls()
        if ":" in text:
            kind, _, value = text.partition(":")
            try:
                sigma = float(value)
            except ValueError:
                raise ValidationError(f"invalid noise sigma {value!r}") from None
            if kind == "mult":
                return cls("multiplicative", sigma)
            if kind == "add":
                return cls("additive", sigma)
        raise ValidationError(
            f"noise model must be none, mult:<sigma>, or add:<sigma>, got {text!r}"
        )


def perturb_energy(e_clean: float, noise: NoiseModel, rng: np.random.Generator) -> float:
    """Apply the noise model; non-positive draws are resampled.

    A measured energy cannot be zero or negative, so the rare draw that
    lands there is rejected and redrawn rather than clamped, keeping the
    noise distribution clean near zero.
    """
    if not (e_clean > 0):
        raise ValidationError(f"clean energy must be positive, got {e_clean}")
    if noise.kind == "none" or noise.sigma == 0.0:
        return e_clean
    for _ in range(1000):
        if noise.kind == "multiplicative":
            value = e_clean * (1.0 + noise.sigma * rng.standard_normal())
        else:
            value = e_clean + noise.sigma * rng.standard_normal()
        if value > 0:
            return value
    raise ValidationError(
        f"noise model {noise} cannot produce a positive energy near {e_clean}"
    )


@dataclass(frozen=True)
class SynthConfig:
    """Shape, ground truth, and noise settings for one generated corpus."""

    catalog_kind: str = "FV"
    n_sequences: int = 23
    qps: tuple[int, ...] = DEFAULT_QPS
    configs: tuple[str, ...] = DEFAULT_CONFIGS
    seed: int = 0
    e_true: np.ndarray | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    tool_off_plan: tuple[tuple[str, str, int], ...] = DEFAULT_TOOL_OFF_PLAN

    def __post_init__(self) -> None:
        catalog = build_catalog(self.catalog_kind)
        object.__setattr__(self, "catalog_kind", catalog.kind)
        object.__setattr__(self, "qps", tuple(int(q) for q in self.qps))
        object.__setattr__(self, "configs", tuple(self.configs))
        object.__setattr__(self, "tool_off_plan", tuple(self.tool_off_plan))
        if self.n_sequences < 1:
            raise ValidationError(f"n_sequences must be >= 1, got {self.n_sequences}")
        if not self.qps or any(q < 1 for q in self.qps):
            raise ValidationError(f"qps must be positive integers, got {self.qps}")
        if not self.configs or any(not c for c in self.configs):
            raise ValidationError("configs must be nonempty labels")
        if self.e_true is not None:
            e = np.asarray(self.e_true, dtype=float).copy()
            if e.shape != (catalog.column_count,):
                raise ValidationError(
                    f"e_true must have {catalog.column_count} entries for "
                    f"{catalog.kind}, got {e.shape}"
                )
            if not np.all(np.isfinite(e)) or np.any(e < 0):
                raise ValidationError("e_true must be finite and nonnegative")
            e.setflags(write=False)
            object.__setattr__(self, "e_true", e)
        for tool, config, count in self.tool_off_plan:
            if tool not in TOOL_ACRONYMS:
                raise ValidationError(
                    f"unknown tool acronym {tool!r}; expected one of {TOOL_ACRONYMS}"
                )
            if count < 1:
                raise ValidationError(f"tool-off count must be >= 1, got {count}")
            if not config:
                raise ValidationError("tool-off config label must be nonempty")

    @property
    def base_record_count(self) -> int:
        return self.n_sequences * len(self.qps) * len(self.configs)

    @property
    def tool_off_record_count(self) -> int:
        return sum(count for _, _, count in self.tool_off_plan)


def _sequence_name(index: int) -> str:
    return f"S{index + 1:02d}"


# Residual and intra machinery run hotter in all-intra streams: without
# temporal prediction every block is intra-coded and carries coefficients.
AI_INTRA_DENSITY = 6.0


class _RowGenerator:
    """Draws FV-count rows; per-sequence complexity is drawn lazily."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.fv = build_catalog("FV")
        self._cplx: dict[str, float] = {}
        self._inter_cols = np.zeros(self.fv.column_count, dtype=bool)
        self._ai_boost_cols = np.zeros(self.fv.column_count, dtype=bool)
        for spec in self.fv.specs:
            sl = self.fv.column_slice(spec.name)
            if spec.category is FeatureCategory.INTER:
                self._inter_cols[sl] = True
            if spec.category in (FeatureCategory.INTRA, FeatureCategory.TRANSFORM):
                self._ai_boost_cols[sl] = True
            if spec.name in ("coeff", "coeff_g1", "val"):
                self._ai_boost_cols[sl] = True

    def complexity(self, sequence: str) -> float:
        if sequence not in self._cplx:
            self._cplx[sequence] = 10.0 ** self.rng.uniform(-0.25, 0.25)
        return self._cplx[sequence]

    def row(self, sequence: str, config: str, qp: int, tool_off: str | None) -> np.ndarray:
        rng = self.rng
        cplx = self.complexity(sequence)
        fv = self.fv
        counts = np.zeros(fv.column_count)
        coeff_value = 0.0
        for spec in fv.specs:
            sl = fv.column_slice(spec.name)
            if spec.name == "eo":
                counts[sl] = 1.0
            elif spec.name == "i_slice":
                counts[sl] = max(1.0, np.rint(rng.uniform(1, 12)))
            elif spec.name in ("p_slice", "b_slice"):
                counts[sl] = 0.0 if config == "AI" else np.rint(rng.uniform(20, 300))
            elif spec.level is CountingLevel.BLOCKPEL:
                base = 10.0 ** rng.uniform(3.8, 5.2) * cplx
                decay = rng.uniform(0.4, 1.0)
                bins = np.array(BLOCKPEL_PEL_COUNTS) / 4.0
                jitter = np.exp(rng.normal(0.0, 0.7, size=len(bins)))
                counts[sl] = np.rint(base * bins**-decay * jitter)
            elif spec.name == "coeff":
                coeff_value = np.rint(
                    10.0 ** rng.uniform(5.6, 6.8)
                    * cplx
                    * (22.0 / qp) ** 2
                    * np.exp(rng.normal(0.0, 0.5))
                )
                counts[sl] = coeff_value
            elif spec.name == "coeff_g1":
                counts[sl] = np.rint(coeff_value * rng.uniform(0.1, 0.5))
            elif spec.name == "val":
                counts[sl] = coeff_value * rng.uniform(1.5, 6.0)
            elif spec.level is CountingLevel.PEL:
                counts[sl] = np.rint(
                    10.0 ** rng.uniform(5.6, 6.8) * cplx * np.exp(rng.normal(0.0, 0.6))
                )
            else:  # CTB and boundary counters
                counts[sl] = np.rint(
                    10.0 ** rng.uniform(4.0, 5.5) * cplx * np.exp(rng.normal(0.0, 0.5))
                )
        if config == "AI":
            counts[self._ai_boost_cols] *= AI_INTRA_DENSITY
            counts[self._inter_cols] = 0.0
        if tool_off is not None:
            self._apply_tool_off(counts, tool_off)
        return counts

    def _apply_tool_off(self, counts: np.ndarray, tool: str) -> None:
        off_features, sibling = TOOL_EFFECTS[tool]
        for name in off_features:
            sl = self.fv.column_slice(name)
            if sibling is not None:
                dst = self.fv.column_slice(sibling)
                counts[dst] += counts[sl]
            counts[sl] = 0.0


def generate(config: SynthConfig) -> tuple[Dataset, np.ndarray]:
    """Generate a synthetic dataset and its ground-truth energy vector.

    Record order is fixed: the base corpus config-major (config, then
    sequence, then QP), followed by the tool-off plan rows in plan
    order.  The returned ``e_true`` matches the target catalog's column
    order.
    """
    catalog = build_catalog(config.catalog_kind)
    rng = np.random.Generator(np.random.PCG64(config.seed))

    if config.e_true is not None:
        e_true = np.asarray(config.e_true, dtype=float)
    else:
        lo, hi = E_TRUE_LOG_RANGE
        e_true = 10.0 ** rng.uniform(lo, hi, size=catalog.column_count)

    gen = _RowGenerator(rng)
    records: list[BitstreamRecord] = []

    def add_record(rec_id, sequence, cfg, qp, tool_off):
        fv_row = gen.row(sequence, cfg, qp, tool_off)
        features = fv_row if catalog.kind == "FV" else aggregate_fv_to_fvs(fv_row)
        e_clean = float(features @ e_true)
        energy = perturb_energy(e_clean, config.noise, rng)
        if config.noise.kind == "multiplicative":
            stddev = config.noise.sigma * e_clean
        elif config.noise.kind == "additive":
            stddev = config.noise.sigma
        else:
            stddev = 0.0
        records.append(
            BitstreamRecord(
                id=rec_id,
                sequence=sequence,
                config=cfg,
                qp=qp,
                tool_off=tool_off,
                energy_joules=energy,
                energy_stddev=stddev,
                sample_count=1,
                features=features,
            )
        )

    for cfg in config.configs:
        for s in range(config.n_sequences):
            seq = _sequence_name(s)
            for qp in config.qps:
                add_record(f"{cfg}-{seq}-qp{qp}", seq, cfg, qp, None)

    for tool, cfg, count in config.tool_off_plan:
        for i in range(count):
            seq = _sequence_name(i // len(config.qps))
            qp = config.qps[i % len(config.qps)]
            add_record(f"{tool}off-{cfg}-{seq}-qp{qp}", seq, cfg, qp, tool)

    dataset = Dataset(
        catalog_kind=catalog.kind,
        records=tuple(records),
        setup_label="Synthetic",
    )
    return dataset, e_true


def save_truth(e_true: np.ndarray, catalog_kind: str, path) -> None:
    """Write the ground-truth energies as a name -> joules JSON map."""
    import json
    from pathlib import Path

    from decenergy import __version__

    catalog = build_catalog(catalog_kind)
    e_true = np.asarray(e_true, dtype=float)
    if e_true.shape != (catalog.column_count,):
        raise ValidationError(
            f"e_true must have {catalog.column_count} entries, got {e_true.shape}"
        )
    payload = {
        "version": __version__,
        "catalog_kind": catalog.kind,
        "e_true_joules": {
            name: float(v) for name, v in zip(catalog.column_names, e_true)
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_truth(path) -> tuple[np.ndarray, str]:
    """Read a ground-truth JSON back into catalog column order."""
    import json
    from pathlib import Path

    data = json.loads(Path(path).read_text())
    catalog = build_catalog(data["catalog_kind"])
    values = data["e_true_joules"]
    missing = [n for n in catalog.column_names if n not in values]
    if missing:
        raise ValidationError(f"truth file is missing column {missing[0]!r}")
    e_true = np.array([values[n] for n in catalog.column_names])
    return e_true, catalog.kind
