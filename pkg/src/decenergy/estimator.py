"""Bound-constrained least-squares fitting of per-feature energies.

The model is linear: a bit stream's decoding energy is estimated as the
dot product of its feature-count vector with a per-feature energy vector

    E_hat = sum_j e_j * n_j

The energies ``e`` are fitted by minimizing ||A e - E||_2 subject to
elementwise bounds, nonnegativity by default, since a counted feature
cannot release energy.  The solve pipeline:

1. Columns of A are equilibrated to unit norm (bounds scale along), which
   keeps the solver stable across count scales spanning many decades.
2. A bounded-variable least-squares solve on the scaled system.
3. Two iterative-refinement steps over the free (strictly interior)
   coordinates only, recovering digits lost to scaling without pushing
   actively bounded coordinates off their bounds.

The result is checked against the first-order optimality conditions: at
an optimum each coordinate either has a (relative) zero gradient or sits
at a bound with the gradient pointing outward.

Features whose column is identically zero in the training data carry no
information; their coefficients are set to the in-bounds value nearest
zero and flagged as unsupported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import lsq_linear

from decenergy.catalog import build_catalog
from decenergy.dataset import Dataset, design_matrix
from decenergy.errors import FitError

KKT_TOLERANCE = 1e-8
REFINEMENT_STEPS = 2


@dataclass
class FitConfig:
    """Bounds and solver controls for a coefficient fit."""

    lower_bound: float = 0.0
    upper_bound: float = np.inf
    convergence_tol: float = 1e-12
    max_iterations: int = 500

    def __post_init__(self) -> None:
        if not self.lower_bound < self.upper_bound:
            raise FitError(
                f"bounds must satisfy lower < upper, got [{self.lower_bound}, {self.upper_bound}]"
            )
        if self.convergence_tol <= 0:
            raise FitError(f"convergence_tol must be positive, got {self.convergence_tol}")
        if self.max_iterations < 1:
            raise FitError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class EnergyModel:
    """Fitted per-feature energies plus fit diagnostics."""

    coefficients: np.ndarray
    catalog_kind: str | None = None
    residual_norm: float = 0.0
    active_lower: int = 0
    active_upper: int = 0
    unsupported: tuple[int, ...] = ()
    lower_bound: float = 0.0
    upper_bound: float = np.inf

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=float).copy()
        coeffs.setflags(write=False)
        self.coefficients = coeffs
        if self.catalog_kind is not None:
            catalog = build_catalog(self.catalog_kind)
            self.catalog_kind = catalog.kind
            if len(coeffs) != catalog.column_count:
                raise FitError(
                    f"{catalog.kind} catalog has {catalog.column_count} columns, "
                    f"got {len(coeffs)} coefficients"
                )

    def predict(self, features: np.ndarray) -> float | np.ndarray:
        """Estimated energy for one feature vector or a stack of rows."""
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != len(self.coefficients):
            raise FitError(
                f"feature vector has {features.shape[-1]} entries, "
                f"model has {len(self.coefficients)} coefficients"
            )
        result = features @ self.coefficients
        return float(result) if result.ndim == 0 else result

    def to_dict(self) -> dict:
        from decenergy import __version__

        if self.catalog_kind is not None:
            names = build_catalog(self.catalog_kind).column_names
        else:
            names = tuple(f"c{i}" for i in range(len(self.coefficients)))
        return {
            "version": __version__,
            "catalog_kind": self.catalog_kind,
            "lower_bound": _json_float(self.lower_bound),
            "upper_bound": _json_float(self.upper_bound),
            "residual_norm": self.residual_norm,
            "active_lower": self.active_lower,
            "active_upper": self.active_upper,
            "unsupported_columns": [names[i] for i in self.unsupported],
            "coefficients_joules": {
                name: float(c) for name, c in zip(names, self.coefficients)
            },
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> EnergyModel:
        data = json.loads(Path(path).read_text())
        kind = data.get("catalog_kind")
        coeff_map = data["coefficients_joules"]
        if kind is not None:
            names = build_catalog(kind).column_names
            missing = [n for n in names if n not in coeff_map]
            if missing:
                raise FitError(f"model file is missing coefficient {missing[0]!r}")
            coeffs = np.array([coeff_map[n] for n in names])
        else:
            coeffs = np.array(list(coeff_map.values()))
            names = tuple(coeff_map)
        unsupported = tuple(
            names.index(n) for n in data.get("unsupported_columns", ())
        )
        return cls(
            coefficients=coeffs,
            catalog_kind=kind,
            residual_norm=data.get("residual_norm", 0.0),
            active_lower=data.get("active_lower", 0),
            active_upper=data.get("active_upper", 0),
            unsupported=unsupported,
            lower_bound=_parse_float(data.get("lower_bound", 0.0)),
            upper_bound=_parse_float(data.get("upper_bound", "inf")),
        )


def _json_float(value: float):
    """JSON has no infinities; encode them as strings."""
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)


def _parse_float(value) -> float:
    return float(value)


def kkt_satisfied(
    a: np.ndarray,
    e: np.ndarray,
    x: np.ndarray,
    lower: float,
    upper: float,
    kappa: float = KKT_TOLERANCE,
) -> bool:
    """First-order optimality for min ||Ax - E|| with box bounds.

    Each coordinate must either have gradient g_j = (A^T (Ax - E))_j of
    relative magnitude at most ``kappa`` (scaled by ||A^T E||_inf), or
    sit at a bound with the gradient pointing out of the feasible box
    (g_j >= 0 at the lower bound, g_j <= 0 at the upper bound).
    """
    g = a.T @ (a @ x - e)
    scale = float(np.max(np.abs(a.T @ e)))
    if scale == 0:
        scale = 1.0
    tol = kappa * scale
    bound_snap = 1e-12 * max(abs(lower) if np.isfinite(lower) else 0.0, 1.0)
    for j in range(len(x)):
        if abs(g[j]) <= tol:
            continue
        at_lower = np.isfinite(lower) and x[j] - lower <= bound_snap
        at_upper = np.isfinite(upper) and upper - x[j] <= bound_snap
        if at_lower and g[j] >= 0:
            continue
        if at_upper and g[j] <= 0:
            continue
        return False
    return True


def fit(a: np.ndarray, e: np.ndarray, config: FitConfig | None = None) -> EnergyModel:
    """Fit per-feature energies to (A, E) under box bounds.

    Raises FitError for non-finite inputs, shape mismatches, or a solve
    that fails the first-order optimality check.
    """
    config = config or FitConfig()
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    if a.ndim != 2:
        raise FitError(f"design matrix must be 2-D, got shape {a.shape}")
    if e.shape != (a.shape[0],):
        raise FitError(
            f"energy vector has shape {e.shape}, expected ({a.shape[0]},)"
        )
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise FitError("design matrix must be nonempty")
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(e)):
        raise FitError("design matrix and energies must be finite")

    lb, ub = config.lower_bound, config.upper_bound
    n = a.shape[1]

    # Zero columns carry no signal; exclude them from the solve and pin
    # their coefficients to the in-bounds value nearest zero.
    col_norms = np.linalg.norm(a, axis=0)
    supported = col_norms > 0
    pinned = float(np.clip(0.0, lb, ub))

    x = np.full(n, pinned)
    if np.any(supported):
        a_sup = a[:, supported]
        norms = col_norms[supported]
        b = a_sup / norms  # unit-norm columns
        lb_s = lb * norms if np.isfinite(lb) else np.full(norms.shape, lb)
        ub_s = ub * norms if np.isfinite(ub) else np.full(norms.shape, ub)
        result = lsq_linear(
            b,
            e,
            bounds=(lb_s, ub_s),
            method="bvls",
            tol=config.convergence_tol,
            max_iter=config.max_iterations,
        )
        if result.status < 0:
            raise FitError(f"bounded least-squares solve failed: {result.message}")
        # BVLS can land a breath outside the box (~1e-14 past a bound);
        # clamp before refinement so the active set is detected cleanly.
        y = np.clip(result.x, lb_s, ub_s)
        y = _refine_free_set(b, e, y, lb_s, ub_s)
        x[supported] = y / norms

    if not kkt_satisfied(a[:, supported], e, x[supported], lb, ub):
        raise FitError("solution failed the first-order optimality check")

    residual = float(np.linalg.norm(a @ x - e))
    at_lower = int(np.sum(np.isfinite(lb) & (x[supported] <= lb + 1e-12 * max(abs(lb), 1.0))))
    at_upper = int(np.sum(np.isfinite(ub) & (x[supported] >= ub - 1e-12 * max(abs(ub), 1.0))))
    return EnergyModel(
        coefficients=x,
        catalog_kind=None,
        residual_norm=residual,
        active_lower=at_lower,
        active_upper=at_upper,
        unsupported=tuple(int(i) for i in np.flatnonzero(~supported)),
        lower_bound=lb,
        upper_bound=ub,
    )


def _refine_free_set(
    b: np.ndarray,
    e: np.ndarray,
    y: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
) -> np.ndarray:
    """Iterative refinement restricted to strictly interior coordinates.

    Correcting only the free set preserves the active set the bounded
    solve identified; refining bounded coordinates would drag them off
    their constraints when the residual is noisy.
    """
    y = y.copy()
    snap = 1e-10
    for _ in range(REFINEMENT_STEPS):
        free = (y > lb + snap) & (y < ub - snap)
        if not np.any(free):
            break
        r = e - b @ y
        delta, *_ = np.linalg.lstsq(b[:, free], r, rcond=None)
        if not np.all(np.isfinite(delta)):
            break
        y[free] = np.clip(y[free] + delta, lb[free], ub[free])
    return y


def fit_dataset(dataset: Dataset, config: FitConfig | None = None) -> EnergyModel:
    """Fit a model to a dataset, tagging it with the dataset's catalog."""
    a, e = design_matrix(dataset)
    model = fit(a, e, config)
    return EnergyModel(
        coefficients=model.coefficients,
        catalog_kind=dataset.catalog_kind,
        residual_norm=model.residual_norm,
        active_lower=model.active_lower,
        active_upper=model.active_upper,
        unsupported=model.unsupported,
        lower_bound=model.lower_bound,
        upper_bound=model.upper_bound,
    )
