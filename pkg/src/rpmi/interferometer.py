"""Intensity-difference model of the phase-modulated Michelson interferometer.

One sampling period ``T_s = 1/(2 f_u)`` is split into ``N`` time slots of
``M`` phase units each. Unit ``(i, j)`` reads the output-port intensity
difference ``(N_p / (M N)) cos(theta + phi_ij)`` in photon-count units.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .pnseq import TWO_PI, PhaseSequenceSet

__all__ = [
    "InterferometerConfig",
    "PhaseSignal",
    "NoiseModel",
    "IntensityRecord",
    "theta_from_path_difference",
    "ideal_intensity",
    "ideal_record",
    "simulate_sampling_period",
    "period_rng",
]


@dataclass(frozen=True)
class InterferometerConfig:
    """Photon budget and timing of one measurement.

    ``n_photons`` is the mean photon number per sampling period. The
    ``photon_efficiency`` factor lumps optical loss and detector quantum
    efficiency into a single multiplier on that budget.
    """

    n_photons: float
    slots: int
    phase_units: int
    upper_freq: float = 5e3
    wavelength: float = 1.064e-6
    sampling_period: Optional[float] = None
    photon_efficiency: float = 1.0

    def __post_init__(self):
        if not (self.n_photons > 0 and math.isfinite(self.n_photons)):
            raise InvalidArgumentError(f"n_photons must be positive, got {self.n_photons}")
        # N = 1 is accepted as the ordinary-interferometer baseline
        if int(self.slots) != self.slots or self.slots < 1:
            raise InvalidArgumentError(f"slots must be a positive integer, got {self.slots}")
        if int(self.phase_units) != self.phase_units or self.phase_units < 1:
            raise InvalidArgumentError(f"phase_units must be >= 1, got {self.phase_units}")
        if not self.upper_freq > 0:
            raise InvalidArgumentError("upper_freq must be positive")
        if not self.wavelength > 0:
            raise InvalidArgumentError("wavelength must be positive")
        if not 0 < self.photon_efficiency <= 1:
            raise InvalidArgumentError("photon_efficiency must lie in (0, 1]")
        object.__setattr__(self, "slots", int(self.slots))
        object.__setattr__(self, "phase_units", int(self.phase_units))
        nyquist = 1.0 / (2.0 * self.upper_freq)
        if self.sampling_period is None:
            object.__setattr__(self, "sampling_period", nyquist)
        elif abs(self.sampling_period - nyquist) > 1e-12 * nyquist:
            raise InvalidArgumentError(
                f"sampling_period {self.sampling_period} breaks T_s = 1/(2 f_u) = {nyquist}"
            )

    @property
    def effective_photons(self) -> float:
        return self.n_photons * self.photon_efficiency

    @property
    def unit_photons(self) -> float:
        """Mean photons per phase unit, ``N_p / (M N)``."""
        return self.effective_photons / (self.phase_units * self.slots)

    @property
    def unit_duration(self) -> float:
        return self.sampling_period / (self.slots * self.phase_units)

    @property
    def modulator_rate(self) -> float:
        """Phase-unit rate ``N M / T_s`` in hertz."""
        # 2 f_u * N * M is exact in integer-valued floats, unlike dividing by T_s
        return 2.0 * self.upper_freq * self.slots * self.phase_units

    def to_dict(self) -> dict:
        return asdict(self)


def theta_from_path_difference(delta_L: float, wavelength: float) -> float:
    """Interferometric phase ``4 pi dL / lambda`` in radians."""
    if not wavelength > 0:
        raise InvalidArgumentError(f"wavelength must be positive, got {wavelength}")
    return 4.0 * math.pi * delta_L / wavelength


@dataclass(frozen=True, eq=False)
class PhaseSignal:
    """The phase under measurement.

    kind ``"constant"`` holds ``theta``; ``"path-difference"`` holds ``delta_L``
    and ``wavelength``; ``"sampled-waveform"`` holds ``times`` and ``thetas``
    and is read with a zero-order hold.
    """

    kind: str = "constant"
    theta: float = 0.0
    delta_L: float = 0.0
    wavelength: float = 1.064e-6
    times: Optional[np.ndarray] = None
    thetas: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "path-difference":
            object.__setattr__(
                self, "theta", theta_from_path_difference(self.delta_L, self.wavelength)
            )
        elif self.kind == "sampled-waveform":
            if self.times is None or self.thetas is None:
                raise InvalidArgumentError("sampled-waveform needs times and thetas")
            times = np.asarray(self.times, dtype=float)
            thetas = np.asarray(self.thetas, dtype=float)
            if times.ndim != 1 or times.shape != thetas.shape or times.size == 0:
                raise InvalidArgumentError("times and thetas must be equal-length 1-D arrays")
            if np.any(np.diff(times) <= 0):
                raise InvalidArgumentError("times must be strictly increasing")
            object.__setattr__(self, "times", times)
            object.__setattr__(self, "thetas", thetas)
        elif self.kind != "constant":
            raise InvalidArgumentError(f"unknown signal kind {self.kind!r}")

    @classmethod
    def constant(cls, theta: float) -> "PhaseSignal":
        return cls("constant", theta=float(theta))

    @classmethod
    def path_difference(cls, delta_L: float, wavelength: float) -> "PhaseSignal":
        return cls("path-difference", delta_L=float(delta_L), wavelength=float(wavelength))

    @classmethod
    def sampled(cls, times, thetas) -> "PhaseSignal":
        return cls("sampled-waveform", times=times, thetas=thetas)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind != "sampled-waveform":
            return np.full(t.shape, self.theta)
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.thetas[np.clip(idx, 0, self.thetas.size - 1)]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["theta"] = self.theta
        elif self.kind == "path-difference":
            d.update(delta_L=self.delta_L, wavelength=self.wavelength)
        else:
            d.update(times=self.times.tolist(), thetas=self.thetas.tolist())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseSignal":
        kind = d.get("kind", "constant")
        if kind == "constant":
            return cls.constant(d.get("theta", 0.0))
        if kind == "path-difference":
            return cls.path_difference(d["delta_L"], d.get("wavelength", 1.064e-6))
        return cls.sampled(d["times"], d["thetas"])


@dataclass(frozen=True)
class NoiseModel:
    shot_noise: bool = False
    phase_jitter_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.phase_jitter_std >= 0:
            raise InvalidArgumentError("phase_jitter_std must be >= 0")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise InvalidArgumentError("rng_seed must be an unsigned 64-bit integer")

    @property
    def noiseless(self) -> bool:
        return not self.shot_noise and self.phase_jitter_std == 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class IntensityRecord:
    values: np.ndarray
    config: InterferometerConfig
    noise: NoiseModel = field(default_factory=NoiseModel)
    period_index: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidArgumentError("record values must be an N x M matrix")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def slots(self) -> int:
        return self.values.shape[0]

    @property
    def units(self) -> int:
        return self.values.shape[1]


def ideal_intensity(theta, phi, cfg: InterferometerConfig):
    """Noiseless per-unit intensity difference ``(N_p/(M N)) cos(theta + phi)``.

    ``phi`` is reduced mod 2pi first, so a stored 2pi evaluates exactly like 0.
    """
    return cfg.unit_photons * np.cos(np.asarray(theta) + np.mod(phi, TWO_PI))


def unit_times(cfg: InterferometerConfig, period_index: int = 0) -> np.ndarray:
    """Start time of every phase unit, shape (N, M)."""
    i = np.arange(cfg.slots)[:, None]
    j = np.arange(cfg.phase_units)[None, :]
    return period_index * cfg.sampling_period + (i * cfg.phase_units + j) * cfg.unit_duration


def ideal_record(cfg: InterferometerConfig, theta: float, phases: PhaseSequenceSet) -> np.ndarray:
    return ideal_intensity(theta, phases.phases, cfg)


def period_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for sampling period (or trial) ``index`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def simulate_sampling_period(
    cfg: InterferometerConfig,
    signal: PhaseSignal,
    phases: PhaseSequenceSet,
    noise: NoiseModel = NoiseModel(),
    period_index: int = 0,
) -> IntensityRecord:
    """Simulate one N x M intensity-difference record.

    Jitter adds an i.i.d. normal draw to every modulated phase. Shot noise
    replaces each reading with ``P1 - P2`` for independent Poisson counts at
    the two ports with means ``(N_p/(2MN))(1 +/- cos(theta + phi))``.
    """
    if phases.phases.shape != (cfg.slots, cfg.phase_units):
        raise InvalidArgumentError(
            f"phase set shape {phases.phases.shape} does not match "
            f"config (N={cfg.slots}, M={cfg.phase_units})"
        )
    theta = signal.at(unit_times(cfg, period_index))
    phi = np.mod(phases.phases, TWO_PI)
    rng = None if noise.noiseless else period_rng(noise.rng_seed, period_index)
    if noise.phase_jitter_std > 0:
        phi = phi + rng.normal(0.0, noise.phase_jitter_std, size=phi.shape)
    c = np.cos(theta + phi)
    if not noise.shot_noise:
        values = cfg.unit_photons * c
    else:
        half = 0.5 * cfg.unit_photons
        lam_plus = half * (1.0 + c)
        lam_minus = half * (1.0 - c)
        if np.any(lam_plus < 0) or np.any(lam_minus < 0):
            raise NumericalError("negative Poisson mean")
        values = (rng.poisson(lam_plus) - rng.poisson(lam_minus)).astype(np.float64)
    return IntensityRecord(values, cfg, noise, period_index)
