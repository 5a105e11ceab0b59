"""N-fold correlation of intensity records, phase readout and error budget."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import (
    InvalidArgumentError,
    OracleMismatchError,
    OutOfRangeError,
    SingularOperatingPointError,
)
from .interferometer import InterferometerConfig, IntensityRecord
from .pnseq import TWO_PI, PhaseSequenceSet

__all__ = [
    "CorrelationResult",
    "ErrorBudget",
    "ClampWarning",
    "leading_amplitude",
    "log_leading_amplitude",
    "correlate",
    "correlation_value",
    "expected_sn",
    "direct_normalized",
    "expansion_normalized",
    "cross_term_residual",
    "constant_offset",
    "estimate_theta",
    "error_propagation",
    "error_budget",
    "fringe_fit",
    "zero_crossings",
    "linearized_shot_sigma",
]

MAX_EXPANSION_SLOTS = 24
ORACLE_RTOL = 1e-12


class ClampWarning(UserWarning):
    pass


def log_leading_amplitude(cfg: InterferometerConfig) -> float:
    """``log(2 (N_p/(2MN))^N)``; safe where the amplitude itself underflows."""
    return math.log(2.0) + cfg.slots * math.log(0.5 * cfg.unit_photons)


def leading_amplitude(cfg: InterferometerConfig) -> float:
    return math.exp(log_leading_amplitude(cfg))


@dataclass(frozen=True)
class CorrelationResult:
    s_n: float
    leading_amplitude: float
    n_fold_angle: Optional[float]
    residual: Optional[float] = None
    theta: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ErrorBudget:
    shot_term: float
    modulation_term: float
    total: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update({k + "_deg": math.degrees(v) for k, v in asdict(self).items()})
        return d


def correlation_value(values: np.ndarray) -> float:
    """``(1/M) sum_j prod_i values[i, j]`` with a fixed summation order."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise InvalidArgumentError("need a nonempty N x M matrix")
    products = values[0].copy()
    for row in values[1:]:
        products *= row
    # cumsum accumulates strictly left to right, unlike pairwise np.sum
    return float(np.cumsum(products)[-1] / values.shape[1])


def _ratio_to_amplitude(x, cfg: InterferometerConfig):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        mag = np.exp(np.log(np.abs(x)) - log_leading_amplitude(cfg))
    return np.sign(x) * mag


def correlate(record: IntensityRecord, theta: Optional[float] = None) -> CorrelationResult:
    """Correlation of one record; ``residual`` is filled in when ``theta`` is given."""
    if record.values.size == 0:
        raise InvalidArgumentError("empty intensity record")
    if record.slots < 1:
        raise InvalidArgumentError("record needs at least one row")
    cfg = record.config
    s = correlation_value(record.values)
    ratio = float(_ratio_to_amplitude(s, cfg))
    angle = math.acos(ratio) if abs(ratio) <= 1.0 else None
    residual = None if theta is None else s - float(expected_sn(theta, cfg))
    return CorrelationResult(s, leading_amplitude(cfg), angle, residual, theta)


def expected_sn(theta, cfg: InterferometerConfig):
    """Closed-form noiseless correlation ``2 (N_p/(2MN))^N cos(N theta)``."""
    return leading_amplitude(cfg) * np.cos(cfg.slots * np.asarray(theta, dtype=float))


def _args(phases: PhaseSequenceSet, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return theta[:, None, None] + np.mod(phases.phases, TWO_PI)[None, :, :]


def direct_normalized(phases: PhaseSequenceSet, theta):
    """Noiseless ``S_N / (N_p/(MN))^N`` by direct product of cosines."""
    prods = np.prod(np.cos(_args(phases, theta)), axis=1)
    out = prods.mean(axis=1)
    return out if np.ndim(theta) else float(out[0])


def expansion_normalized(phases: PhaseSequenceSet, theta):
    """Same quantity as :func:`direct_normalized` via the sign-pattern expansion.

    ``prod_i cos(a_i) = 2^-(N-1) sum_eps cos(sum_i eps_i a_i)`` over the
    ``2^(N-1)`` sign patterns with ``eps_1 = +1``. Independent of the direct
    product, so it can serve as its oracle.
    """
    n_slots = phases.slots
    if n_slots > MAX_EXPANSION_SLOTS:
        raise InvalidArgumentError(
            f"expansion over 2^{n_slots - 1} terms refused (N > {MAX_EXPANSION_SLOTS})"
        )
    a = _args(phases, theta)  # (T, N, M)
    total = np.zeros((a.shape[0], a.shape[2]))
    chunk = 4096
    patterns = itertools.product((1.0, -1.0), repeat=n_slots - 1)
    while True:
        block = list(itertools.islice(patterns, chunk))
        if not block:
            break
        signs = np.hstack([np.ones((len(block), 1)), np.array(block)])
        total += np.cos(np.einsum("pn,tnm->tpm", signs, a)).sum(axis=1)
    out = total.mean(axis=1) / 2.0 ** (n_slots - 1)
    return out if np.ndim(theta) else float(out[0])


def cross_term_residual(phases: PhaseSequenceSet, theta, cfg: InterferometerConfig, *, check: bool = True):
    """Noiseless ``S_N`` minus the leading ``2 (N_p/(2MN))^N cos(N theta)`` term.

    ``S_N`` comes from the sign-pattern expansion and is cross-checked
    against the direct product to ``1e-12`` of the scale ``(N_p/(MN))^N``.
    """
    if phases.slots != cfg.slots or phases.units != cfg.phase_units:
        raise InvalidArgumentError("phase set does not match the configuration")
    expanded = np.atleast_1d(expansion_normalized(phases, np.atleast_1d(theta)))
    if check:
        direct = np.atleast_1d(direct_normalized(phases, np.atleast_1d(theta)))
        err = float(np.max(np.abs(expanded - direct)))
        if err > ORACLE_RTOL:
            raise OracleMismatchError(f"expansion and direct product differ by {err:.3e}")
    lead = 2.0 ** (1 - cfg.slots) * np.cos(cfg.slots * np.atleast_1d(theta))
    scale = math.exp(cfg.slots * math.log(cfg.unit_photons))
    out = (expanded - lead) * scale
    return out if np.ndim(theta) else float(out[0])


def constant_offset(phases: PhaseSequenceSet, cfg: InterferometerConfig, *, n_probe: int = 7) -> float:
    """The cross-term residual when it does not depend on theta.

    Raises
    ------
    OutOfRangeError
        If the residual varies with theta (a competing fringe survives), so
        no constant calibration exists.
    """
    probe = np.linspace(0.0, TWO_PI, n_probe, endpoint=False) + 0.1
    res = cross_term_residual(phases, probe, cfg)
    tol = 1e-12 * leading_amplitude(cfg)
    if np.ptp(res) > tol:
        raise OutOfRangeError(
            f"residual varies with theta (spread {np.ptp(res):.3e}); not a constant offset"
        )
    return float(np.mean(res))


def estimate_theta(s_n, cfg: InterferometerConfig, *, offset: float = 0.0, tol: float = 1e-9):
    """Principal-branch inverse of the fringe: ``arccos((s_n - offset)/A) / N``.

    Unambiguous for theta in (0, pi/N). Ratios past +/-1 by no more than
    ``tol`` are clamped with a :class:`ClampWarning`; larger excursions raise
    :class:`OutOfRangeError`.
    """
    if not cfg.effective_photons > 0:
        raise InvalidArgumentError("zero fringe amplitude")
    ratio = _ratio_to_amplitude(np.asarray(s_n, dtype=float) - offset, cfg)
    excess = np.abs(ratio) - 1.0
    if np.any(excess > tol):
        raise OutOfRangeError(
            f"correlation exceeds the fringe amplitude by a factor {1 + float(np.max(excess)):.6g}"
        )
    if np.any(excess > 0):
        warnings.warn("correlation marginally beyond fringe amplitude; clamped", ClampWarning, stacklevel=2)
        ratio = np.clip(ratio, -1.0, 1.0)
    out = np.arccos(ratio) / cfg.slots
    return out if np.ndim(s_n) else float(out)


def error_propagation(delta_s, theta: float, cfg: InterferometerConfig):
    """Phase error ``dS / |dS/dtheta|`` at operating point ``theta``."""
    s = abs(math.sin(cfg.slots * theta))
    if s < 1e-9:
        raise SingularOperatingPointError(f"fringe turning point at N*theta = {cfg.slots * theta}")
    slope = cfg.slots * leading_amplitude(cfg) * s
    return np.asarray(delta_s, dtype=float) / slope if np.ndim(delta_s) else float(delta_s) / slope


def error_budget(cfg: InterferometerConfig, delta_phi: float) -> ErrorBudget:
    """Shot-noise floor plus modulation-error term, both in radians."""
    if not delta_phi >= 0:
        raise InvalidArgumentError("delta_phi must be >= 0")
    n, m = cfg.slots, cfg.phase_units
    shot = 1.0 / math.sqrt(n * cfg.effective_photons)
    mod = (math.sqrt(2 ** (n - 1) * (n - 1) / (m * n)) + 1.0) * delta_phi
    return ErrorBudget(shot, mod, shot + mod)


def fringe_fit(thetas, values, slots: int) -> dict:
    """Least-squares Fourier fit with harmonics 0..N on a theta grid.

    Returns the constant term, the cos/sin coefficient arrays (index k is
    harmonic k) and the rms fit residual.
    """
    thetas = np.asarray(thetas, dtype=float)
    values = np.asarray(values, dtype=float)
    cols = [np.ones_like(thetas)]
    for k in range(1, slots + 1):
        cols += [np.cos(k * thetas), np.sin(k * thetas)]
    basis = np.column_stack(cols)
    scale = np.max(np.abs(values)) or 1.0
    coef, *_ = np.linalg.lstsq(basis, values / scale, rcond=None)
    coef = coef * scale
    cos = np.concatenate([[coef[0]], coef[1::2]])
    sin = np.concatenate([[0.0], coef[2::2]])
    rms = float(np.sqrt(np.mean((basis @ coef - values) ** 2)))
    return {"constant": float(coef[0]), "cos": cos, "sin": sin, "rms": rms}


def zero_crossings(thetas, values) -> np.ndarray:
    """Linearly interpolated sign changes of ``values`` along ``thetas``."""
    thetas = np.asarray(thetas, dtype=float)
    values = np.asarray(values, dtype=float)
    # exact zeros are nudged to the positive side so each crossing counts once
    v = np.where(values == 0.0, np.finfo(float).tiny, values)
    idx = np.flatnonzero(np.signbit(v[:-1]) != np.signbit(v[1:]))
    t0, t1 = thetas[idx], thetas[idx + 1]
    v0, v1 = v[idx], v[idx + 1]
    return t0 - v0 * (t1 - t0) / (v1 - v0)


def linearized_shot_sigma(phases: PhaseSequenceSet, theta: float, cfg: InterferometerConfig) -> float:
    """First-order shot-noise spread of the theta estimate for a given phase set.

    Each reading carries variance ``N_p/(MN)``; propagating it through the
    product and the fringe slope gives
    ``sqrt(mu^(2N-1) sum_j sum_i prod_{k!=i} c_kj^2) / (M |dS/dtheta|)``
    with ``c = cos(theta + phi)`` and ``mu = N_p/(MN)``.
    """
    c2 = np.cos(theta + np.mod(phases.phases, TWO_PI)) ** 2
    n = phases.slots
    acc = 0.0
    for i in range(n):
        acc += float(np.sum(np.prod(np.delete(c2, i, axis=0), axis=0)))
    log_var = (2 * n - 1) * math.log(cfg.unit_photons) + math.log(acc) - 2 * math.log(phases.units)
    slope = cfg.slots * abs(math.sin(cfg.slots * theta))
    return math.exp(0.5 * log_var - log_leading_amplitude(cfg)) / slope
