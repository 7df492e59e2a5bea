"""Repeated decode-energy measurement with a confidence stopping rule.

A measurement session repeatedly runs a decoder command and reads a
cumulative energy counter around each run.  Each iteration also samples
the idle energy of the system over the same wall-clock duration, so the
reported net energy of one decode is::

    net = E_decode - E_idle

Sampling stops once the width of the two-sided confidence interval for
the mean net energy falls below a fraction ``beta`` of that mean:

    2 * (sigma / sqrt(m)) * t_crit(alpha, m - 1)  <  beta * mean

with ``sigma`` the sample standard deviation and ``t_crit`` the Student
t critical value for confidence level ``alpha``.  At least ``m_min``
samples are always taken; a session that reaches ``m_max`` without
converging is flagged rather than discarded.

Counter sources are pluggable.  ``RaplCounterSource`` reads the Linux
powercap sysfs interface (integer microjoules with a documented wrap
range); ``MockCounterSource`` replays scripted readings for testing and
for machines without RAPL.
"""

from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy.special import betaincinv

from decenergy.errors import MeasurementError

DEFAULT_ALPHA = 0.99
DEFAULT_BETA = 0.02
DEFAULT_M_MIN = 5
DEFAULT_M_MAX = 50

RAPL_ENERGY_PATH = "/sys/class/powercap/intel-rapl:0/energy_uj"
RAPL_MAX_RANGE_PATH = "/sys/class/powercap/intel-rapl:0/max_energy_range_uj"

# Environment overrides for the sysfs paths, for containers and tests.
RAPL_ENERGY_ENV = "DECENERGY_RAPL_ENERGY_UJ"
RAPL_MAX_RANGE_ENV = "DECENERGY_RAPL_MAX_RANGE_UJ"


def t_critical(alpha: float, df: int) -> float:
    """Two-sided Student t critical value at confidence level ``alpha``.

    Solves F(t) = 1 - (1 - alpha) / 2 for the t CDF with ``df`` degrees
    of freedom through the inverse regularized incomplete beta function:

        x = I^-1(df/2, 1/2; 1 - alpha),   t = sqrt(df * (1 - x) / x)

    Falls back to bisection on the CDF written as a regularized beta
    integral if the inverse evaluates outside (0, 1].
    """
    if not (0 < alpha < 1):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    x = float(betaincinv(df / 2.0, 0.5, 1.0 - alpha))
    if 0.0 < x <= 1.0:
        return math.sqrt(df * (1.0 - x) / x)
    return _t_critical_bisect(alpha, df)


def _t_critical_bisect(alpha: float, df: int) -> float:
    """Bisection fallback on the tail probability 2*P(T > t) = 1 - alpha."""
    from scipy.special import betainc

    def tail(t: float) -> float:
        return float(betainc(df / 2.0, 0.5, df / (df + t * t)))

    target = 1.0 - alpha
    lo, hi = 0.0, 1.0
    while tail(hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise MeasurementError(
                f"t critical value did not bracket for alpha={alpha}, df={df}"
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tail(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def counter_delta(before: float, after: float, wrap_range: float) -> float:
    """Energy consumed between two cumulative counter readings.

    Counters count up to ``wrap_range`` and wrap to zero.  A reading
    that appears to decrease is interpreted as exactly one wrap; the
    measurement intervals used here are far shorter than the hours a
    package-level counter takes to wrap twice.
    """
    if wrap_range <= 0:
        raise MeasurementError(f"wrap_range must be positive, got {wrap_range}")
    if not (0 <= before < wrap_range and 0 <= after < wrap_range):
        raise MeasurementError(
            f"counter readings must lie in [0, {wrap_range}), got {before}, {after}"
        )
    if after >= before:
        return after - before
    return after + wrap_range - before


@dataclass(frozen=True)
class EnergySample:
    """One decode run: raw decode energy, its duration, and matched idle energy."""

    decode_energy_joules: float
    decode_duration_s: float
    idle_energy_joules: float

    def __post_init__(self) -> None:
        if not (self.decode_duration_s > 0):
            raise MeasurementError(
                f"decode duration must be positive, got {self.decode_duration_s}"
            )
        if self.decode_energy_joules < 0 or self.idle_energy_joules < 0:
            raise MeasurementError("energy readings must be nonnegative")

    @property
    def net_energy_joules(self) -> float:
        """Decode energy with the idle baseline over the same duration removed."""
        return self.decode_energy_joules - self.idle_energy_joules


class EnergyCounterSource(Protocol):
    """A monotone (modulo wrap) cumulative energy counter."""

    @property
    def wrap_range_joules(self) -> float: ...

    def read_cumulative_joules(self) -> float: ...


class RaplCounterSource:
    """Package energy from the Linux powercap (RAPL) sysfs interface.

    Reads integer microjoules from ``energy_uj``; the wrap range comes
    from ``max_energy_range_uj``.  Paths may be overridden through the
    DECENERGY_RAPL_ENERGY_UJ / DECENERGY_RAPL_MAX_RANGE_UJ environment
    variables.
    """

    def __init__(self, energy_path: str | None = None, max_range_path: str | None = None):
        self.energy_path = Path(
            energy_path or os.environ.get(RAPL_ENERGY_ENV, RAPL_ENERGY_PATH)
        )
        self.max_range_path = Path(
            max_range_path or os.environ.get(RAPL_MAX_RANGE_ENV, RAPL_MAX_RANGE_PATH)
        )
        self._wrap_range = self._read_uj(self.max_range_path) / 1e6
        if self._wrap_range <= 0:
            raise MeasurementError(f"{self.max_range_path}: wrap range must be positive")

    @staticmethod
    def _read_uj(path: Path) -> int:
        try:
            text = path.read_text()
        except OSError as exc:
            raise MeasurementError(f"cannot read energy counter {path}: {exc}") from None
        try:
            return int(text.strip())
        except ValueError:
            raise MeasurementError(
                f"{path}: expected an integer microjoule reading, got {text.strip()!r}"
            ) from None

    @property
    def wrap_range_joules(self) -> float:
        return self._wrap_range

    def read_cumulative_joules(self) -> float:
        value = self._read_uj(self.energy_path)
        if not (0 <= value / 1e6 < self._wrap_range):
            raise MeasurementError(
                f"{self.energy_path}: reading {value} uJ outside wrap range"
            )
        return value / 1e6


class MockCounterSource:
    """Replays a fixed sequence of cumulative joule readings."""

    def __init__(self, readings, wrap_range_joules: float = 262144.0):
        self._readings = [float(v) for v in readings]
        self._next = 0
        self._wrap = float(wrap_range_joules)
        if self._wrap <= 0:
            raise MeasurementError("wrap range must be positive")

    @classmethod
    def from_file(cls, path: str | Path, wrap_range_joules: float = 262144.0):
        """One reading per line; blank lines and ``#`` comments are skipped."""
        values = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                values.append(float(line))
        return cls(values, wrap_range_joules)

    @property
    def wrap_range_joules(self) -> float:
        return self._wrap

    def read_cumulative_joules(self) -> float:
        if self._next >= len(self._readings):
            raise MeasurementError("mock energy counter exhausted")
        value = self._readings[self._next]
        self._next += 1
        return value


@dataclass
class SessionConfig:
    """Stopping-rule parameters for a measurement session."""

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    m_min: int = DEFAULT_M_MIN
    m_max: int = DEFAULT_M_MAX

    def __post_init__(self) -> None:
        if not (0 < self.alpha < 1):
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.m_min < 2:
            raise ValueError(f"m_min must be >= 2, got {self.m_min}")
        if self.m_max < self.m_min:
            raise ValueError(f"m_max must be >= m_min, got {self.m_max} < {self.m_min}")


def confidence_satisfied(energies, alpha: float, beta: float) -> bool:
    """True when the CI width of the mean is below ``beta`` of the mean.

    ``energies`` are the net per-run energies gathered so far; requires
    at least two samples so the sample standard deviation exists.
    """
    e = np.asarray(energies, dtype=float)
    m = len(e)
    if m < 2:
        raise MeasurementError("confidence check needs at least two samples")
    mean = float(e.mean())
    if mean <= 0:
        raise MeasurementError(
            f"mean net energy must be positive, got {mean}; "
            "idle baseline exceeds decode energy"
        )
    sigma = float(e.std(ddof=1))
    half_width = sigma / math.sqrt(m) * t_critical(alpha, m - 1)
    return 2.0 * half_width < beta * mean


@dataclass
class MeasurementSession:
    """Result of a stopping-rule measurement campaign for one command."""

    command: str
    config: SessionConfig
    samples: list[EnergySample] = field(default_factory=list)
    converged: bool = False

    @property
    def sample_count(self) -> int:
        return len(self.samples)

    @property
    def net_energies(self) -> list[float]:
        return [s.net_energy_joules for s in self.samples]

    @property
    def mean_energy_joules(self) -> float:
        if not self.samples:
            raise MeasurementError("session has no samples")
        return sum(self.net_energies) / len(self.samples)

    @property
    def energy_stddev_joules(self) -> float:
        if len(self.samples) < 2:
            raise MeasurementError("standard deviation needs at least two samples")
        return float(np.std(self.net_energies, ddof=1))

    def to_dict(self) -> dict:
        from decenergy import __version__

        return {
            "version": __version__,
            "command": self.command,
            "alpha": self.config.alpha,
            "beta": self.config.beta,
            "m_min": self.config.m_min,
            "m_max": self.config.m_max,
            "converged": self.converged,
            "sample_count": self.sample_count,
            "mean_energy_joules": self.mean_energy_joules,
            "energy_stddev_joules": self.energy_stddev_joules,
            "samples": [
                {
                    "decode_energy_joules": s.decode_energy_joules,
                    "decode_duration_s": s.decode_duration_s,
                    "idle_energy_joules": s.idle_energy_joules,
                    "net_energy_joules": s.net_energy_joules,
                }
                for s in self.samples
            ],
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def _run_command(command: str) -> None:
    proc = subprocess.run(
        shlex.split(command),
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    if proc.returncode != 0:
        raise MeasurementError(
            f"decoder command exited with status {proc.returncode}: {command}"
        )


def run_session(
    command: str,
    source: EnergyCounterSource,
    config: SessionConfig | None = None,
    runner: Callable[[str], None] | None = None,
    sleeper: Callable[[float], None] | None = None,
    clock: Callable[[], float] | None = None,
) -> MeasurementSession:
    """Measure a decoder command until the confidence criterion holds.

    Each iteration reads the counter around one decode run, then around
    an idle wait of the same duration.  ``runner``, ``sleeper``, and
    ``clock`` exist so tests can drive sessions without spawning
    processes or sleeping.
    """
    config = config or SessionConfig()
    runner = runner or _run_command
    sleeper = sleeper or time.sleep
    clock = clock or time.monotonic
    wrap = source.wrap_range_joules

    session = MeasurementSession(command=command, config=config)
    while session.sample_count < config.m_max:
        before = source.read_cumulative_joules()
        t0 = clock()
        runner(command)
        duration = clock() - t0
        after = source.read_cumulative_joules()
        decode_energy = counter_delta(before, after, wrap)

        idle_before = source.read_cumulative_joules()
        sleeper(duration)
        idle_after = source.read_cumulative_joules()
        idle_energy = counter_delta(idle_before, idle_after, wrap)

        session.samples.append(
            EnergySample(
                decode_energy_joules=decode_energy,
                decode_duration_s=duration,
                idle_energy_joules=idle_energy,
            )
        )
        if session.sample_count >= config.m_min and confidence_satisfied(
            session.net_energies, config.alpha, config.beta
        ):
            session.converged = True
            break
    return session
