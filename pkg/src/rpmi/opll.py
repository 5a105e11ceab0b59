"""Steady-state residual phase error of the modulator's optical phase-locked loop.

Only the locked-loop formula is modelled; units of ``noise_psd`` must be
consistent with the squared detector gain (the result is in radians).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import InvalidArgumentError

__all__ = ["OpllConfig", "detector_gain", "residual_phase_error", "DEFAULT_RESIDUAL_DEG"]

DEFAULT_RESIDUAL_DEG = 0.3

_R, _RESP, _P, _BL = 1e4, 0.8, 1e-6, 1e4
# N0 picked so the default loop sits at the 0.3 degree lock quoted for OPLLs
_N0 = (math.radians(DEFAULT_RESIDUAL_DEG) * 2 * _R * _RESP * _P) ** 2 / _BL


@dataclass(frozen=True)
class OpllConfig:
    noise_psd: float = _N0
    loop_bandwidth: float = _BL
    transimpedance: float = _R
    responsivity: float = _RESP
    received_power: float = _P

    def validate(self) -> None:
        for name, value in asdict(self).items():
            if not (value > 0 and math.isfinite(value)):
                raise InvalidArgumentError(f"{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


def detector_gain(cfg: OpllConfig) -> float:
    """Intensity-difference detector gain ``A = 2 r R P``."""
    cfg.validate()
    return 2.0 * cfg.transimpedance * cfg.responsivity * cfg.received_power


def residual_phase_error(cfg: OpllConfig) -> float:
    """Locked-loop phase error ``sqrt(N0 B_L) / A`` in radians."""
    gain = detector_gain(cfg)
    return math.sqrt(cfg.noise_psd * cfg.loop_bandwidth) / gain
