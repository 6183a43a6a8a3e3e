"""Spin-dependent reflection of a one-sided cavity coupled to a two-level emitter.

All rates are FWHM values in Hz and enter the response directly; there is no
hidden factor of 2*pi anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

PASSIVITY_TOL = 1e-9


@dataclass(frozen=True)
class CavityParams:
    g: float
    kappa_in: float
    kappa_tot: float
    gamma: float
    omega_c: float
    omega_siv_up: float
    omega_siv_down: float

    def __post_init__(self):
        if not 0 < self.kappa_in <= self.kappa_tot:
            raise ValueError("need 0 < kappa_in <= kappa_tot")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.g < 0:
            raise ValueError("g must be non-negative")

    def siv_frequency(self, spin: str) -> float:
        if spin == "up":
            return self.omega_siv_up
        if spin == "down":
            return self.omega_siv_down
        raise ValueError(f"spin must be 'up' or 'down', not {spin!r}")


@dataclass(frozen=True)
class SpinReflectivities:
    """Complex reflection amplitudes of the bright (high) and dark (low) spin state."""

    r_high: complex
    r_low: complex
    operating_frequency: float = 0.0

    def __post_init__(self):
        for name in ("r_high", "r_low"):
            if abs(getattr(self, name)) > 1 + PASSIVITY_TOL:
                raise ValueError(f"|{name}| exceeds 1")

    @property
    def contrast(self) -> float:
        """|r_high|^2 / |r_low|^2 (inf for a perfectly dark state)."""
        low = abs(self.r_low) ** 2
        return np.inf if low == 0 else abs(self.r_high) ** 2 / low

    @property
    def relative_low(self) -> complex:
        """r_low / r_high, the quantity that sets the contrast error."""
        return self.r_low / self.r_high

    @classmethod
    def from_contrast(
        cls, reflectance_high: float, contrast_error: float, low_phase: float = np.pi
    ) -> "SpinReflectivities":
        """Build from |r_high|^2, |r_low/r_high|^2 and arg(r_low/r_high)."""
        r_high = np.sqrt(reflectance_high)
        r_low = r_high * np.sqrt(contrast_error) * np.exp(1j * low_phase)
        return cls(complex(r_high), complex(r_low))


def reflection_amplitude(params: CavityParams, omega, spin: str):
    omega = np.asarray(omega, dtype=float)
    atom = params.g**2 / (1j * (omega - params.siv_frequency(spin)) + params.gamma / 2)
    r = 1 - params.kappa_in / (1j * (omega - params.omega_c) + params.kappa_tot / 2 + atom)
    return r if np.ndim(r) else complex(r)


def bare_cavity_amplitude(params: CavityParams, omega):
    omega = np.asarray(omega, dtype=float)
    r = 1 - params.kappa_in / (1j * (omega - params.omega_c) + params.kappa_tot / 2)
    return r if np.ndim(r) else complex(r)


def cooperativity(params: CavityParams) -> float:
    return 4 * params.g**2 / (params.kappa_tot * params.gamma)


def _log_contrast(params: CavityParams, omega):
    hi = np.abs(reflection_amplitude(params, omega, "up")) ** 2
    lo = np.abs(reflection_amplitude(params, omega, "down")) ** 2
    with np.errstate(divide="ignore"):
        return np.log(hi) - np.log(lo)


def max_contrast_frequency(
    params: CavityParams, omega_min: float, omega_max: float, points: int = 2001, refine: bool = True
) -> tuple[float, float]:
    """Frequency maximising |r_up|^2/|r_down|^2 over a scan window.

    A coarse grid picks the best sample (lowest frequency on ties), then a
    golden-section search refines inside the neighbouring grid cells.
    """
    if not omega_max > omega_min or points < 3:
        raise ValueError("empty scan range")
    grid = np.linspace(omega_min, omega_max, points)
    vals = _log_contrast(params, grid)
    i = int(np.argmax(vals))  # argmax returns the first (lowest-frequency) maximum
    best_w, best_v = grid[i], vals[i]
    if refine and 0 < i < points - 1 and np.isfinite(best_v):
        res = minimize_scalar(
            lambda w: -_log_contrast(params, w),
            bracket=(grid[i - 1], grid[i], grid[i + 1]),
            method="golden",
            options={"xtol": 1e-12},
        )
        if grid[i - 1] <= res.x <= grid[i + 1] and -res.fun >= best_v:
            best_w, best_v = float(res.x), float(-res.fun)
    return float(best_w), float(np.exp(best_v))


def spin_reflectivities(
    params: CavityParams, omega_min: float, omega_max: float, points: int = 2001
) -> SpinReflectivities:
    w, _ = max_contrast_frequency(params, omega_min, omega_max, points)
    return SpinReflectivities(
        reflection_amplitude(params, w, "up"), reflection_amplitude(params, w, "down"), w
    )


# Fitted (not measured) to the reported cooperativities 12.4 / 1.5, bright-state
# reflectance 70 % / 60 % and per-node contrast errors 4.3 % / 8.2 %. Units: Hz.
NODE_A = CavityParams(
    g=8.2958e9, kappa_in=23.0612e9, kappa_tot=37.0e9, gamma=0.60e9,
    omega_c=0.0, omega_siv_up=-21.4471e9, omega_siv_down=-11.7614e9,
)
NODE_B = CavityParams(
    g=2.5249e9, kappa_in=33.0880e9, kappa_tot=34.0e9, gamma=0.50e9,
    omega_c=0.0, omega_siv_up=-0.86696e9, omega_siv_down=-0.02222e9,
)
NAMED_CAVITIES = {"node_a": NODE_A, "node_b": NODE_B}
SCAN_WINDOW_HZ = (-60e9, 60e9)
