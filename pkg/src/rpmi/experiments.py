"""Scenario runner: worked example, fringe sweeps and Monte Carlo studies.

Every random draw is derived from ``(scenario.seed, grid point, trial)``
through :class:`numpy.random.SeedSequence`, so a report is reproducible from
its embedded scenario alone.
"""
from __future__ import annotations

import dataclasses
import json
import math
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional

import numpy as np
from scipy import stats

from . import __version__
from .correlator import (
    constant_offset,
    correlation_value,
    cross_term_residual,
    error_budget,
    estimate_theta,
    expected_sn,
    fringe_fit,
    leading_amplitude,
    linearized_shot_sigma,
    log_leading_amplitude,
    zero_crossings,
)
from .errors import ConfigError, InvalidArgumentError, NumericalError, OutOfRangeError
from .interferometer import (
    InterferometerConfig,
    NoiseModel,
    PhaseSignal,
    ideal_record,
    simulate_sampling_period,
)
from .io import phase_set_to_dict, table_to_csv
from .opll import OpllConfig, residual_phase_error
from .pnseq import (
    PAPER_POLYNOMIAL,
    TWO_PI,
    GeneratorPolynomial,
    PhaseSequenceSet,
    build_phase_set,
    default_polynomial,
    random_phase_set,
)

__all__ = [
    "Scenario",
    "Report",
    "derive_seed",
    "parse_grid",
    "run_paper_example",
    "run_fringe_sweep",
    "run_shot_noise_scaling",
    "run_jitter_study",
    "run_sequences",
]


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit child seed for ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def _angle(token: str) -> float:
    token = token.strip().lower()
    if "pi" not in token:
        return float(token)
    head, _, tail = token.partition("pi")
    head = head.rstrip("*")
    value = math.pi * (float(head) if head not in ("", "+", "-") else float(head + "1"))
    if tail:
        if not tail.startswith("/"):
            raise ValueError(f"bad angle {token!r}")
        value /= float(tail[1:])
    return value


def parse_grid(text: str) -> np.ndarray:
    """``"start:stop:step"`` to an arange; terms may use ``pi`` (``"0:2pi:pi/512"``)."""
    try:
        start, stop, step = (_angle(t) for t in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: expected start:stop:step") from exc
    if step <= 0 or stop <= start:
        raise ConfigError(f"bad grid {text!r}: need stop > start and step > 0")
    grid = np.arange(start, stop, step)
    if grid.size == 0:
        raise ConfigError(f"grid {text!r} is empty")
    return grid


@dataclass
class Scenario:
    """Everything a run needs; mirrors the config file layout section by section."""

    interferometer: dict = field(default_factory=lambda: {"n_photons": 1e6, "slots": 4})
    phase_set: dict = field(default_factory=lambda: {"mode": "designed"})
    signal: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    opll: Optional[dict] = None
    trials: int = 200
    seed: int = 0

    _SECTIONS = {
        "interferometer": {"n_photons", "slots", "upper_freq", "wavelength", "photon_efficiency", "sampling_period"},
        "phase_set": {"mode", "poly", "lfsr_seed", "allow_offset_terms", "phase_units", "seed"},
        "signal": {"kind", "theta", "delta_L", "wavelength", "times", "thetas"},
        "noise": {"shot_noise", "phase_jitter_std", "phase_jitter_deg"},
        "sweep": {"theta_grid", "photon_grid", "jitter_grid", "jitter_grid_deg", "slots_grid"},
        "opll": {f.name for f in dataclasses.fields(OpllConfig)},
    }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        unknown = set(d) - set(cls._SECTIONS) - {"trials", "seed", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for section, allowed in cls._SECTIONS.items():
            if section not in d or d[section] is None:
                continue
            if not isinstance(d[section], dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            bad = set(d[section]) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
            kwargs[section] = dict(d[section])
        if "trials" in d:
            kwargs["trials"] = int(d["trials"])
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        sc = cls(**kwargs)
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["opll"] is None:
            del d["opll"]
        return d

    def validate(self) -> None:
        """Check every referenced setting before anything runs."""
        try:
            if self.trials < 1:
                raise ConfigError("trials must be >= 1")
            if not 0 <= self.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            if self.phase_set.get("mode", "designed") not in ("designed", "uniform-random"):
                raise ConfigError(f"unknown phase_set mode {self.phase_set.get('mode')!r}")
            slots = self.slots
            if slots < 1:
                raise ConfigError("slots must be >= 1")
            self.config(self._units_for(slots), slots)
            self.theta_signal(slots)
            self.noise_model(0)
            if self.phase_set.get("poly"):
                GeneratorPolynomial.parse(self.phase_set["poly"])
            if self.opll is not None:
                self.opll_config().validate()
            if "theta_grid" in self.sweep:
                self.theta_grid(slots)
            for g in self.slots_grid:
                if int(g) < 1:
                    raise ConfigError("slots_grid entries must be >= 1")
            if any(p <= 0 for p in self.photon_grid):
                raise ConfigError("photon_grid entries must be positive")
            if any(j < 0 for j in self.jitter_grid):
                raise ConfigError("jitter_grid entries must be >= 0")
        except (InvalidArgumentError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @property
    def slots(self) -> int:
        return int(self.interferometer.get("slots", 4))

    @property
    def slots_grid(self) -> list[int]:
        return [int(s) for s in self.sweep.get("slots_grid", [self.slots])]

    @property
    def photon_grid(self) -> list[float]:
        return [float(p) for p in self.sweep.get("photon_grid", [1e4, 1e5, 1e6, 1e7, 1e8])]

    @property
    def jitter_grid(self) -> list[float]:
        if "jitter_grid_deg" in self.sweep:
            return [math.radians(float(j)) for j in self.sweep["jitter_grid_deg"]]
        return [float(j) for j in self.sweep.get("jitter_grid", [0.0, 0.001, 0.002, 0.005, 0.01, 0.02])]

    def polynomial(self, slots: int) -> GeneratorPolynomial:
        text = self.phase_set.get("poly")
        return GeneratorPolynomial.parse(text) if text else default_polynomial(slots)

    def _units_for(self, slots: int) -> int:
        if self.phase_set.get("mode", "designed") == "uniform-random" or slots < 2:
            return int(self.phase_set.get("phase_units", 1 if slots < 2 else 16))
        return 2 ** self.polynomial(slots).order

    def build_phases(self, slots: Optional[int] = None) -> PhaseSequenceSet:
        slots = self.slots if slots is None else int(slots)
        ps = self.phase_set
        if slots == 1:
            # ordinary interferometer: the closure of zero rows is a constant 2pi
            return PhaseSequenceSet(np.full((1, self._units_for(1)), TWO_PI), "designed")
        if ps.get("mode", "designed") == "uniform-random":
            return random_phase_set(slots, self._units_for(slots), ps.get("seed", self.seed))
        return build_phase_set(
            self.polynomial(slots),
            slots,
            ps.get("lfsr_seed", 1),
            allow_offset_terms=bool(ps.get("allow_offset_terms", False)),
        )

    def config(self, units: int, slots: Optional[int] = None, n_photons: Optional[float] = None) -> InterferometerConfig:
        d = dict(self.interferometer)
        d.setdefault("n_photons", 1e6)
        d["slots"] = self.slots if slots is None else int(slots)
        d["phase_units"] = int(units)
        if n_photons is not None:
            d["n_photons"] = float(n_photons)
        return InterferometerConfig(**{k: float(v) if k not in ("slots", "phase_units") else v for k, v in d.items()})

    def theta_signal(self, slots: int) -> PhaseSignal:
        if not self.signal:
            return PhaseSignal.constant(math.pi / (2 * slots))
        return PhaseSignal.from_dict(self.signal)

    def theta_grid(self, slots: int) -> np.ndarray:
        if "theta_grid" in self.sweep:
            return parse_grid(str(self.sweep["theta_grid"]))
        return np.linspace(0.0, TWO_PI, 4096, endpoint=False)

    def jitter_std(self) -> float:
        if "phase_jitter_deg" in self.noise:
            return math.radians(float(self.noise["phase_jitter_deg"]))
        if "phase_jitter_std" in self.noise:
            return float(self.noise["phase_jitter_std"])
        if self.opll is not None:
            return residual_phase_error(self.opll_config())
        return 0.0

    def opll_config(self) -> OpllConfig:
        # YAML 1.1 reads unsigned exponents such as 1.0e4 as strings
        return OpllConfig(**{k: float(v) for k, v in self.opll.items()})

    def noise_model(self, point: int) -> NoiseModel:
        return NoiseModel(
            bool(self.noise.get("shot_noise", False)),
            self.jitter_std(),
            derive_seed(self.seed, point),
        )


@dataclass
class Report:
    name: str
    scenario: dict
    records: list[dict]
    metrics: dict
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_csv(self) -> str:
        if not self.records:
            return ""
        cols = list(self.records[0])
        return table_to_csv(cols, ([r.get(c) for c in cols] for r in self.records))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _provenance(scenario: Scenario, started: float, expected_runtime: str) -> dict:
    return {
        "seed": scenario.seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "runtime_s": round(time.perf_counter() - started, 3),
        "expected_runtime": expected_runtime,
    }


def _std_ci(sample: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Chi-square confidence interval for a standard deviation."""
    k = sample.size - 1
    s2 = float(np.var(sample, ddof=1))
    lo = math.sqrt(k * s2 / stats.chi2.ppf(0.5 + level / 2, k))
    hi = math.sqrt(k * s2 / stats.chi2.ppf(0.5 - level / 2, k))
    return lo, hi


def paper_scenario() -> Scenario:
    return Scenario(
        interferometer={"n_photons": 1e6, "slots": 10, "upper_freq": 5e3},
        phase_set={"mode": "designed", "poly": str(PAPER_POLYNOMIAL), "allow_offset_terms": True},
        noise={"phase_jitter_deg": 0.3},
        sweep={"jitter_grid_deg": [0.0, 0.1, 0.2, 0.3, 0.5, 1.0]},
        trials=200,
    )


def run_paper_example(n_photons: float = 1e6, delta_phi_deg: float = 0.3) -> Report:
    """The 10-slot, order-8 worked example: timing, residual and error budget."""
    started = time.perf_counter()
    sc = paper_scenario()
    sc.interferometer["n_photons"] = n_photons
    sc.noise["phase_jitter_deg"] = delta_phi_deg
    phases = sc.build_phases()
    cfg = sc.config(phases.units)
    budget = error_budget(cfg, math.radians(delta_phi_deg))
    lead = leading_amplitude(cfg)
    probe = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    residual = cross_term_residual(phases, probe, cfg)
    try:
        offset = constant_offset(phases, cfg)
    except OutOfRangeError:
        offset = None
    opll_dphi = residual_phase_error(OpllConfig())
    metrics = {
        "sampling_period_s": cfg.sampling_period,
        "upper_freq_hz": cfg.upper_freq,
        "slots": cfg.slots,
        "polynomial": str(phases.poly),
        "order": phases.order,
        "msequence_count": 2**phases.order - 1,
        "msequence_length": 2**phases.order - 1,
        "phase_units": cfg.phase_units,
        "modulator_rate_hz": cfg.modulator_rate,
        "selected_shifts": list(phases.shifts),
        "exact_cancellation": bool(np.max(np.abs(residual)) <= 1e-12 * lead),
        "residual_max_abs_relative": float(np.max(np.abs(residual)) / lead),
        "residual_constant_offset_relative": None if offset is None else offset / lead,
        "closure_error_rad": phases.closure_error(),
        "delta_phi_deg": delta_phi_deg,
        "opll_default_delta_phi_deg": math.degrees(opll_dphi),
        "budget": budget.to_dict(),
    }
    return Report(
        "paper-example",
        sc.to_dict(),
        [{"theta": t, "residual_relative": r / lead} for t, r in zip(probe, residual)],
        metrics,
        _provenance(sc, started, "< 10 s"),
    )


def _fringe_one(sc: Scenario, slots: int) -> tuple[list[dict], dict]:
    phases = sc.build_phases(slots)
    cfg = sc.config(phases.units, slots)
    thetas = sc.theta_grid(slots)
    s = np.array([correlation_value(ideal_record(cfg, t, phases)) for t in thetas])
    expected = expected_sn(thetas, cfg)
    residual = s - expected
    lead_log = log_leading_amplitude(cfg)
    lead = math.exp(lead_log)
    try:
        offset = constant_offset(phases, cfg) if slots >= 2 else 0.0
    except OutOfRangeError:
        offset = None
    centred = s - (offset or 0.0)
    crossings = zero_crossings(thetas, centred)
    spacing = np.diff(crossings)
    target = math.pi / slots
    fit = fringe_fit(thetas, s / lead, slots)
    fitted = fit["cos"][slots] * lead
    metrics = {
        "slots": slots,
        "phase_units": cfg.phase_units,
        "polynomial": None if phases.poly is None else str(phases.poly),
        "shifts": None if phases.shifts is None else list(phases.shifts),
        "leading_amplitude": lead,
        "log_leading_amplitude": lead_log,
        "fitted_amplitude": fitted,
        "amplitude_log_error": abs(math.log(abs(fitted)) - lead_log) if fitted else math.inf,
        "zero_crossings": int(crossings.size),
        "crossing_spacing_mean": float(spacing.mean()) if spacing.size else None,
        "crossing_spacing_max_rel_dev": float(np.max(np.abs(spacing - target)) / target) if spacing.size else None,
        "fringe_period": 2.0 * float(spacing.mean()) if spacing.size else None,
        "constant_offset_relative": None if offset is None else offset / lead,
        "residual_max_abs_relative": float(np.max(np.abs(residual)) / lead),
        "other_harmonics_max_relative": float(
            max(np.max(np.abs(np.delete(fit["cos"][1:], slots - 1))) if slots > 1 else 0.0,
                np.max(np.abs(fit["sin"])))
        ),
    }
    records = [
        {"N": slots, "theta": t, "s_n": a, "expected": e, "residual": r}
        for t, a, e, r in zip(thetas, s, expected, residual)
    ]
    return records, metrics


def run_fringe_sweep(scenario: Scenario) -> Report:
    """Noiseless designed-set fringe for each N in the slots grid."""
    started = time.perf_counter()
    records, per_n = [], []
    for slots in scenario.slots_grid:
        r, m = _fringe_one(scenario, slots)
        records += r
        per_n.append(m)
    return Report(
        "fringe",
        scenario.to_dict(),
        records,
        {"per_slots": per_n},
        _provenance(scenario, started, "seconds"),
    )


def _estimate_trials(cfg, signal, phases, noise, theta0, trials, offset) -> tuple[np.ndarray, int]:
    est = np.full(trials, np.nan)
    failures = 0
    for t in range(trials):
        rec = simulate_sampling_period(cfg, signal, phases, noise, period_index=t)
        try:
            est[t] = estimate_theta(correlation_value(rec.values), cfg, offset=offset)
        except OutOfRangeError:
            failures += 1
    return est[np.isfinite(est)], failures


def _calibration_offset(phases, cfg) -> float:
    if phases.slots < 2:
        return 0.0
    try:
        return constant_offset(phases, cfg)
    except OutOfRangeError as exc:
        raise NumericalError(f"phase set has a theta-dependent residual: {exc}") from exc


def _shot_point(sc, phases, slots, n_photons, point, trials) -> dict:
    cfg = sc.config(phases.units, slots, n_photons)
    signal = sc.theta_signal(slots)
    theta0 = float(signal.at(0.0))
    noise = NoiseModel(True, 0.0, derive_seed(sc.seed, point))
    offset = _calibration_offset(phases, cfg)
    est, failures = _estimate_trials(cfg, signal, phases, noise, theta0, trials, offset)
    if est.size < 2:
        raise NumericalError(f"no usable estimates at N_p={n_photons}")
    sigma = float(np.std(est, ddof=1))
    lo, hi = _std_ci(est)
    return {
        "N": slots,
        "n_photons": n_photons,
        "theta": theta0,
        "sigma": sigma,
        "sigma_ci_low": lo,
        "sigma_ci_high": hi,
        "bias": float(np.mean(est) - theta0),
        "shot_limit": 1.0 / math.sqrt(slots * cfg.effective_photons),
        "linearized_sigma": linearized_shot_sigma(phases, theta0, cfg),
        "failures": failures,
    }


def run_shot_noise_scaling(scenario: Scenario) -> Report:
    """Spread of the theta estimate versus photon number, and across N at fixed N_p."""
    started = time.perf_counter()
    sc = scenario
    if sc.trials < 2:
        raise ConfigError("shot-noise scaling needs at least 2 trials")
    slots = sc.slots
    phases = sc.build_phases(slots)
    records = [
        _shot_point(sc, phases, slots, n_p, k, sc.trials) for k, n_p in enumerate(sc.photon_grid)
    ]
    x = np.log10([r["n_photons"] for r in records])
    y = np.log10([r["sigma"] for r in records])
    fit = stats.linregress(x, y) if len(records) >= 2 else None

    cross = []
    base = len(records)
    for k, n in enumerate(sc.slots_grid):
        if len(sc.slots_grid) < 2:
            break
        ps = sc.build_phases(n)
        cross.append(_shot_point(sc, ps, n, float(sc.interferometer.get("n_photons", 1e6)), base + k, sc.trials))

    control_cfg = sc.config(phases.units, slots)
    signal = sc.theta_signal(slots)
    control, _ = _estimate_trials(
        control_cfg, signal, phases, NoiseModel(), float(signal.at(0.0)), min(sc.trials, 10),
        _calibration_offset(phases, control_cfg),
    )
    metrics = {
        "slots": slots,
        "phase_units": phases.units,
        "slope": None if fit is None else fit.slope,
        "slope_stderr": None if fit is None else fit.stderr,
        "expected_slope": -0.5,
        "zero_noise_sigma": float(np.max(np.abs(control - float(signal.at(0.0))))),
        "cross_slots": cross,
        "decreasing_with_slots": bool(all(a["sigma"] > b["sigma"] for a, b in zip(cross, cross[1:]))) if cross else None,
    }
    return Report(
        "montecarlo",
        sc.to_dict(),
        records,
        metrics,
        _provenance(sc, started, f"~{0.002 * sc.trials * (len(records) + len(cross)):.0f} s"),
    )


def run_jitter_study(scenario: Scenario) -> Report:
    """Empirical phase error under modulator jitter alone, against the budget term."""
    started = time.perf_counter()
    sc = scenario
    slots = sc.slots
    phases = sc.build_phases(slots)
    cfg = sc.config(phases.units, slots)
    signal = sc.theta_signal(slots)
    theta0 = float(signal.at(0.0))
    offset = _calibration_offset(phases, cfg)
    records = []
    for k, dphi in enumerate(sc.jitter_grid):
        noise = NoiseModel(False, dphi, derive_seed(sc.seed, k))
        est, failures = _estimate_trials(cfg, signal, phases, noise, theta0, sc.trials, offset)
        err = est - theta0
        rms = float(np.sqrt(np.mean(err**2))) if est.size else math.nan
        lo, hi = _std_ci(err) if est.size > 1 and np.any(err != err[0]) else (rms, rms)
        records.append(
            {
                "delta_phi": dphi,
                "delta_phi_deg": math.degrees(dphi),
                "empirical_rms": rms,
                "empirical_rms_deg": math.degrees(rms),
                "empirical_std_ci_low": lo,
                "empirical_std_ci_high": hi,
                "bias": float(np.mean(err)) if est.size else math.nan,
                "budget_modulation_term": error_budget(cfg, dphi).modulation_term,
                "budget_modulation_term_deg": math.degrees(error_budget(cfg, dphi).modulation_term),
                "phase_sum_std_expected": math.sqrt(slots) * dphi,
                "phase_sum_bound": slots * dphi,
                "failures": failures,
            }
        )
    rms = [r["empirical_rms"] for r in records]
    order = np.argsort(sc.jitter_grid)
    metrics = {
        "slots": slots,
        "phase_units": cfg.phase_units,
        "theta": theta0,
        "calibration_offset_relative": offset / leading_amplitude(cfg),
        "monotonic": bool(np.all(np.diff(np.asarray(rms)[order]) > 0)),
    }
    return Report("jitter", sc.to_dict(), records, metrics, _provenance(sc, started, "seconds"))


def run_sequences(scenario: Scenario) -> tuple[PhaseSequenceSet, dict]:
    """Designed (or random) phase set for the scenario, plus its JSON form."""
    phases = scenario.build_phases()
    return phases, phase_set_to_dict(phases)
