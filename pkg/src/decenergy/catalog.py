"""Feature catalogs for the FV and FVS decoder energy models.

The energy of decoding a bit stream is modeled as a weighted sum over
counted bit-stream features.  Two catalogs are defined:

* ``FV``  -- the full model, 230 columns.  Block-based features are
  counted per block size, binned by the number of pels in the block.
* ``FVS`` -- the simplified model, 66 columns, obtained by merging
  sibling FV features (e.g. the three deblocking boundary-strength
  counters collapse into one) and dropping tool-specific counters.

Each feature is counted at one of several levels: per slice, per pel,
per coding tree block (CTB), per filtered block boundary, or per block
binned by pel count ("blockpel").  A blockpel feature expands into 13
columns, one per block size bin (4, 8, ..., 16384 pels); every other
level contributes a single column.

Catalogs are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

# Pel counts of the 13 blockpel bins: bin k holds blocks of 2**(k+2) pels.
BLOCKPEL_PEL_COUNTS: tuple[int, ...] = tuple(4 * 2**k for k in range(13))

# Block dimensions allowed by the multi-type tree: powers of two, 1..128.
VALID_BLOCK_DIMENSIONS: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128)


class CountingLevel(Enum):
    """Granularity at which a feature's occurrences are counted."""

    SLICE = "slice"
    PEL = "pel"
    PEL_LOG = "pel_log"  # pel-level with logarithmic value accumulation (Val only)
    CTB = "ctb"
    BOUNDARY = "boundary"
    BLOCKPEL = "blockpel"
    SCALAR = "scalar"  # per-stream constant (the offset feature)


class FeatureCategory(Enum):
    """Hybrid-coder stage a feature belongs to."""

    GENERAL = "general"
    INTRA = "intra"
    INTER = "inter"
    TRANSFORM = "transform"
    IN_LOOP_FILTER = "in_loop_filter"


@dataclass(frozen=True)
class BlockShape:
    """A rectangular block, width and height in pels (powers of two, 1..128)."""

    width: int
    height: int

    def __post_init__(self) -> None:
        for name, value in (("width", self.width), ("height", self.height)):
            if value not in VALID_BLOCK_DIMENSIONS:
                raise ValueError(
                    f"block {name} must be a power of two in [1, 128], got {value}"
                )

    @property
    def pels(self) -> int:
        return self.width * self.height


def blockpel_bin(shape: BlockShape) -> int:
    """Map a block shape to its blockpel bin index in [0, 12].

    Bin k holds blocks of 2**(k+2) pels.  Blocks smaller than 4 pels
    (1x1, 1x2, 2x1) fall below the first bin and clamp to bin 0.
    """
    return max(shape.pels.bit_length() - 3, 0)


@dataclass(frozen=True)
class FeatureSpec:
    """One named feature of a catalog.

    ``fv_index_range`` is the feature's 1-based inclusive column range in
    the FV model's 230-column space, or ``None`` for the five aggregate
    features that exist only in the FVS catalog.
    """

    name: str
    level: CountingLevel
    category: FeatureCategory
    fv_index_range: tuple[int, int] | None

    def __post_init__(self) -> None:
        if self.fv_index_range is not None:
            lo, hi = self.fv_index_range
            if hi - lo + 1 != self.column_width:
                raise ValueError(
                    f"feature {self.name}: index range {self.fv_index_range} does not "
                    f"span {self.column_width} columns"
                )

    @property
    def column_width(self) -> int:
        return 13 if self.level is CountingLevel.BLOCKPEL else 1

    def column_names(self) -> tuple[str, ...]:
        """Canonical CSV header names for this feature's columns.

        Blockpel features are suffixed with the bin pel count
        (``intra_blocks_4`` ... ``intra_blocks_16384``); all other
        features use the bare name.
        """
        if self.level is CountingLevel.BLOCKPEL:
            return tuple(f"{self.name}_{pels}" for pels in BLOCKPEL_PEL_COUNTS)
        return (self.name,)


class FeatureCatalog:
    """Ordered, immutable list of feature specs defining a model's columns."""

    def __init__(self, kind: str, specs: tuple[FeatureSpec, ...]):
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique within a catalog")
        self.kind = kind
        self.specs = specs
        self._column_names = tuple(n for s in specs for n in s.column_names())
        offsets: dict[str, slice] = {}
        pos = 0
        for s in specs:
            offsets[s.name] = slice(pos, pos + s.column_width)
            pos += s.column_width
        self._offsets = offsets

    @property
    def column_count(self) -> int:
        return len(self._column_names)

    @property
    def column_names(self) -> tuple[str, ...]:
        return self._column_names

    def spec(self, name: str) -> FeatureSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(f"no feature named {name!r} in the {self.kind} catalog")

    def column_slice(self, name: str) -> slice:
        """0-based column range of a feature within this catalog."""
        try:
            return self._offsets[name]
        except KeyError:
            raise KeyError(f"no feature named {name!r} in the {self.kind} catalog") from None

    def column_index(self, column_name: str) -> int:
        """0-based index of a single canonical column name."""
        try:
            return self._column_names.index(column_name)
        except ValueError:
            raise KeyError(
                f"no column named {column_name!r} in the {self.kind} catalog"
            ) from None

    def features_in_category(self, category: FeatureCategory) -> tuple[FeatureSpec, ...]:
        return tuple(s for s in self.specs if s.category is category)

    def __repr__(self) -> str:
        return f"FeatureCatalog(kind={self.kind!r}, columns={self.column_count})"


def _spec(name, level, category, fv_range):
    return FeatureSpec(name, level, category, fv_range)


_G = FeatureCategory.GENERAL
_I = FeatureCategory.INTRA
_P = FeatureCategory.INTER
_T = FeatureCategory.TRANSFORM
_L = FeatureCategory.IN_LOOP_FILTER

_FV_SPECS = (
    _spec("eo", CountingLevel.SCALAR, _G, (1, 1)),
    _spec("i_slice", CountingLevel.SLICE, _G, (2, 2)),
    _spec("p_slice", CountingLevel.SLICE, _G, (3, 3)),
    _spec("b_slice", CountingLevel.SLICE, _G, (4, 4)),
    _spec("intra_blocks", CountingLevel.BLOCKPEL, _I, (5, 17)),
    _spec("isp", CountingLevel.BLOCKPEL, _I, (18, 30)),
    _spec("intra_pdpc", CountingLevel.BLOCKPEL, _I, (31, 43)),
    _spec("mip", CountingLevel.BLOCKPEL, _I, (44, 56)),
    _spec("ibc", CountingLevel.BLOCKPEL, _I, (57, 69)),
    _spec("inter_inter", CountingLevel.BLOCKPEL, _P, (70, 82)),
    _spec("inter_merge", CountingLevel.BLOCKPEL, _P, (83, 95)),
    _spec("inter_skip", CountingLevel.BLOCKPEL, _P, (96, 108)),
    _spec("affine", CountingLevel.BLOCKPEL, _P, (109, 121)),
    _spec("triangle_split", CountingLevel.BLOCKPEL, _P, (122, 134)),
    _spec("dmvr", CountingLevel.BLOCKPEL, _P, (135, 147)),
    _spec("bdof", CountingLevel.BLOCKPEL, _P, (148, 160)),
    _spec("uni", CountingLevel.PEL, _P, (161, 161)),
    _spec("bi", CountingLevel.PEL, _P, (162, 162)),
    _spec("frac_pel_hor", CountingLevel.PEL, _P, (163, 163)),
    _spec("frac_pel_ver", CountingLevel.PEL, _P, (164, 164)),
    _spec("frac_pel_both", CountingLevel.PEL, _P, (165, 165)),
    _spec("copy_pel", CountingLevel.PEL, _P, (166, 166)),
    _spec("transform", CountingLevel.BLOCKPEL, _T, (167, 179)),
    _spec("transform_skip", CountingLevel.BLOCKPEL, _T, (180, 192)),
    _spec("transform_no_cbf", CountingLevel.BLOCKPEL, _T, (193, 205)),
    _spec("lfnst", CountingLevel.BLOCKPEL, _T, (206, 218)),
    _spec("coeff", CountingLevel.PEL, _T, (219, 219)),
    _spec("coeff_g1", CountingLevel.PEL, _T, (220, 220)),
    _spec("val", CountingLevel.PEL_LOG, _T, (221, 221)),
    _spec("bs0", CountingLevel.BOUNDARY, _L, (222, 222)),
    _spec("bs1", CountingLevel.BOUNDARY, _L, (223, 223)),
    _spec("bs2", CountingLevel.BOUNDARY, _L, (224, 224)),
    _spec("sao_luma_bo", CountingLevel.CTB, _L, (225, 225)),
    _spec("sao_luma_eo", CountingLevel.CTB, _L, (226, 226)),
    _spec("sao_chroma_bo", CountingLevel.CTB, _L, (227, 227)),
    _spec("sao_chroma_eo", CountingLevel.CTB, _L, (228, 228)),
    _spec("alf_luma", CountingLevel.CTB, _L, (229, 229)),
    _spec("alf_chroma", CountingLevel.CTB, _L, (230, 230)),
)

_FVS_SPECS = (
    _spec("eo", CountingLevel.SCALAR, _G, (1, 1)),
    _spec("i_slice", CountingLevel.SLICE, _G, (2, 2)),
    _spec("pb_slice", CountingLevel.SLICE, _G, None),
    _spec("intra_blocks", CountingLevel.BLOCKPEL, _I, (5, 17)),
    _spec("inter_cu", CountingLevel.BLOCKPEL, _P, None),
    _spec("inter_skip", CountingLevel.BLOCKPEL, _P, (96, 108)),
    _spec("uni", CountingLevel.PEL, _P, (161, 161)),
    _spec("bi", CountingLevel.PEL, _P, (162, 162)),
    _spec("frac_pel_hor", CountingLevel.PEL, _P, (163, 163)),
    _spec("frac_pel_ver", CountingLevel.PEL, _P, (164, 164)),
    _spec("frac_pel_both", CountingLevel.PEL, _P, (165, 165)),
    _spec("copy_pel", CountingLevel.PEL, _P, (166, 166)),
    _spec("transform", CountingLevel.BLOCKPEL, _T, (167, 179)),
    _spec("coeff", CountingLevel.PEL, _T, (219, 219)),
    _spec("val", CountingLevel.PEL_LOG, _T, (221, 221)),
    _spec("bs", CountingLevel.BOUNDARY, _L, None),
    _spec("sao", CountingLevel.CTB, _L, None),
    _spec("alf", CountingLevel.CTB, _L, None),
)

# FVS feature -> FV features it sums.  Features absent from this map and
# from the FVS catalog (tool counters such as dmvr or lfnst) are dropped
# by the aggregation.  Blockpel groups are summed bin by bin.
FV_TO_FVS_MAP: dict[str, tuple[str, ...]] = {
    "eo": ("eo",),
    "i_slice": ("i_slice",),
    "pb_slice": ("p_slice", "b_slice"),
    "intra_blocks": ("intra_blocks",),
    "inter_cu": ("inter_inter", "inter_merge"),
    "inter_skip": ("inter_skip",),
    "uni": ("uni",),
    "bi": ("bi",),
    "frac_pel_hor": ("frac_pel_hor",),
    "frac_pel_ver": ("frac_pel_ver",),
    "frac_pel_both": ("frac_pel_both",),
    "copy_pel": ("copy_pel",),
    "transform": ("transform",),
    "coeff": ("coeff",),
    "val": ("val",),
    "bs": ("bs0", "bs1", "bs2"),
    "sao": ("sao_luma_bo", "sao_luma_eo", "sao_chroma_bo", "sao_chroma_eo"),
    "alf": ("alf_luma", "alf_chroma"),
}

CATALOG_KINDS = ("FV", "FVS")


def build_catalog(kind: str) -> FeatureCatalog:
    """Return the complete ordered catalog for ``kind`` ("FV" or "FVS")."""
    return _build_catalog_cached(kind.upper())


@lru_cache(maxsize=None)
def _build_catalog_cached(kind: str) -> FeatureCatalog:
    if kind == "FV":
        return FeatureCatalog("FV", _FV_SPECS)
    if kind == "FVS":
        return FeatureCatalog("FVS", _FVS_SPECS)
    raise ValueError(f"unknown catalog kind {kind!r}; expected one of {CATALOG_KINDS}")


@lru_cache(maxsize=None)
def _aggregation_matrix() -> np.ndarray:
    """0/1 matrix M with FVS_counts = M @ FV_counts."""
    fv = build_catalog("FV")
    fvs = build_catalog("FVS")
    m = np.zeros((fvs.column_count, fv.column_count))
    for fvs_name, fv_names in FV_TO_FVS_MAP.items():
        dst = fvs.column_slice(fvs_name)
        width = dst.stop - dst.start
        for fv_name in fv_names:
            src = fv.column_slice(fv_name)
            if src.stop - src.start != width:
                raise AssertionError(f"width mismatch aggregating {fv_name} into {fvs_name}")
            m[dst, src] += np.eye(width)
    return m


def aggregate_fv_to_fvs(fv_counts: np.ndarray) -> np.ndarray:
    """Project an FV feature-count vector onto the FVS column space.

    Sibling FV features are summed (p_slice + b_slice -> pb_slice, the
    boundary-strength and SAO/ALF counters likewise), shared features
    copy through, and FV-only tool counters are dropped.
    """
    fv_counts = np.asarray(fv_counts, dtype=float)
    expected = build_catalog("FV").column_count
    if fv_counts.shape != (expected,):
        raise ValueError(
            f"expected an FV vector of length {expected}, got shape {fv_counts.shape}"
        )
    return _aggregation_matrix() @ fv_counts


def dump_catalog_csv(kind: str) -> str:
    """Render a catalog as CSV text: column_index, canonical_name, level, category, pel_bin.

    ``pel_bin`` is the bin's pel count for blockpel columns and empty
    otherwise.  Used to document the dataset CSV schema.
    """
    catalog = build_catalog(kind)
    buf = io.StringIO()
    buf.write("column_index,canonical_name,level,category,pel_bin\n")
    index = 0
    for spec in catalog.specs:
        if spec.level is CountingLevel.BLOCKPEL:
            for pels, column in zip(BLOCKPEL_PEL_COUNTS, spec.column_names()):
                buf.write(f"{index},{column},{spec.level.value},{spec.category.value},{pels}\n")
                index += 1
        else:
            buf.write(f"{index},{spec.name},{spec.level.value},{spec.category.value},\n")
            index += 1
    return buf.getvalue()
