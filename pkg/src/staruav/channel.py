"""Free-space LOS channels through the surface-carrying UAV.

Links are BS -> UAV and UAV -> ground user, both modeled as a uniform linear
array response scaled by free-space path loss. The element coefficient applied
to the incident signal is sqrt(alpha_m) * exp(-1j * theta_m); the cascaded
channel for a user is the coefficient-weighted sum over elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Position2D, Scenario


@dataclass(frozen=True)
class LinkGeometry:
    """3-D distance and x-axis direction cosine of one UAV-ground link."""

    distance: float
    cos_angle: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"link distance must be positive, got {self.distance}")
        if abs(self.cos_angle) > 1 + 1e-12:
            raise ValueError(f"direction cosine out of range: {self.cos_angle}")


def link_geometry(q: Position2D, anchor: Position2D, altitude: float) -> LinkGeometry:
    """Geometry of the link between the UAV at `q` and a ground `anchor`.

    The direction cosine is measured along the x axis (array boresight),
    over the full 3-D distance, so |cos| <= 1 always holds.
    """
    if altitude <= 0:
        raise ValueError(f"altitude must be positive, got {altitude}")
    horizontal = q.distance_to(anchor)
    distance = math.hypot(horizontal, altitude)
    omega = (anchor.x - q.x) / distance
    return LinkGeometry(distance=distance, cos_angle=omega)


def steering_vector(omega: float, m_elements: int, sep: float, wavelength: float) -> np.ndarray:
    """Array response [1, e^{-j*2*pi*sep*omega/lam}, ...] of length M."""
    if abs(omega) > 1 + 1e-12:
        raise ValueError(f"direction cosine out of range: {omega}")
    idx = np.arange(m_elements)
    return np.exp(-1j * 2.0 * np.pi * sep * idx * omega / wavelength)


def path_gain(beta0: float, distance: float, alpha: float) -> float:
    """Amplitude gain sqrt(beta0 * d^-alpha) of one free-space hop."""
    return math.sqrt(beta0 * distance ** (-alpha))


def channel_bs_to_uav(scn: Scenario, q: Position2D) -> np.ndarray:
    """Channel vector from the BS to the UAV-mounted array at position q."""
    c = scn.consts
    geo = link_geometry(q, scn.bs, c.altitude)
    sv = steering_vector(geo.cos_angle, c.element_count, c.element_sep, c.wavelength)
    return path_gain(c.beta0, geo.distance, c.path_loss_exp) * sv


def channel_uav_to_user(scn: Scenario, q: Position2D, r_u: Position2D) -> np.ndarray:
    """Channel vector from the UAV-mounted array at q to a ground user at r_u."""
    c = scn.consts
    geo = link_geometry(q, r_u, c.altitude)
    sv = steering_vector(geo.cos_angle, c.element_count, c.element_sep, c.wavelength)
    return path_gain(c.beta0, geo.distance, c.path_loss_exp) * sv


def effective_channel(
    v_u: np.ndarray,
    amplitudes: np.ndarray,
    phases: np.ndarray,
    g_src: np.ndarray,
) -> complex:
    """Cascaded scalar channel source -> surface -> user for one mode.

    Element m contributes conj(v_u[m]) * sqrt(alpha_m) * e^{-j theta_m} * g_src[m].
    """
    if not (len(v_u) == len(amplitudes) == len(phases) == len(g_src)):
        raise ValueError(
            "dimension mismatch: "
            f"v={len(v_u)}, alpha={len(amplitudes)}, theta={len(phases)}, g={len(g_src)}"
        )
    coeffs = np.sqrt(np.asarray(amplitudes, dtype=float)) * np.exp(-1j * np.asarray(phases, dtype=float))
    return complex(np.sum(np.conj(v_u) * coeffs * g_src))


def power_gain_upper_bound(rho: float, d_a: float, d_b: float, alpha: float) -> float:
    """Closed-form cap rho / (d_a^alpha * d_b^alpha) on a cascaded channel power gain.

    rho = beta0^2 * (sum_m sqrt(alpha_m))^2 for the mode in question; the cap is
    attained when the element phases align the per-element contributions.
    """
    if d_a <= 0 or d_b <= 0:
        raise ValueError("distances must be positive")
    return rho / (d_a**alpha * d_b**alpha)


def amplitude_sum_power(beta0: float, amplitudes: np.ndarray) -> float:
    """rho = beta0^2 * (sum_m sqrt(alpha_m))^2 for one mode's amplitude row."""
    s = float(np.sum(np.sqrt(np.clip(np.asarray(amplitudes, dtype=float), 0.0, None))))
    return (beta0 * s) ** 2
