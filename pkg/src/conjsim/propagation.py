"""Pluggable analytic orbit propagation.

The baseline advances mean Keplerian elements: pure two-body motion,
optionally with first-order J2 secular drift of RAAN / argument of
perigee / mean anomaly, and optionally with a linear semi-major-axis
drag decay scaled by the object's bstar. Heavier propagators can be
slotted behind the same call signatures later.

Internals are vectorized over time offsets so screening and Monte Carlo
callers can evaluate dense grids cheaply.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .astro import Epoch, OrbitalElements, StateVector, solve_kepler
from .constants import J2, MU_EARTH, R_EARTH, TWO_PI

# Semi-major-axis decay is quoted at this reference bstar and scaled
# linearly with the object's actual bstar.
REFERENCE_BSTAR = 1e-4
DEFAULT_DRAG_DECAY_KM_PER_DAY = 0.05


class ReentryError(RuntimeError):
    """Drag decay drove the semi-major axis at or below the Earth radius."""

    def __init__(self, message: str, epoch: Epoch):
        super().__init__(message)
        self.epoch = epoch


class PropagatorKind(enum.Enum):
    TWO_BODY = "two_body"
    TWO_BODY_J2 = "two_body_j2"
    TWO_BODY_J2_DRAG = "two_body_j2_drag"


@dataclass(frozen=True)
class PropagatorSpec:
    """Selects the force model and its drag-decay rate."""

    kind: PropagatorKind = PropagatorKind.TWO_BODY_J2_DRAG
    drag_decay_km_per_day: float = DEFAULT_DRAG_DECAY_KM_PER_DAY

    def __post_init__(self):
        if self.drag_decay_km_per_day < 0.0:
            raise ValueError("drag_decay_km_per_day must be >= 0")

    @property
    def uses_j2(self) -> bool:
        return self.kind in (PropagatorKind.TWO_BODY_J2, PropagatorKind.TWO_BODY_J2_DRAG)

    @property
    def uses_drag(self) -> bool:
        return self.kind is PropagatorKind.TWO_BODY_J2_DRAG


def j2_secular_rates(a_km: float, eccentricity: float, inclination_rad: float):
    """First-order J2 secular rates (raan, arg perigee, mean anomaly), rad/s."""
    n = math.sqrt(MU_EARTH / a_km**3)
    p = a_km * (1.0 - eccentricity**2)
    k = 1.5 * J2 * n * (R_EARTH / p) ** 2
    cos_i = math.cos(inclination_rad)
    sin2_i = math.sin(inclination_rad) ** 2
    raan_rate = -k * cos_i
    argp_rate = k * (2.0 - 2.5 * sin2_i)
    mean_anomaly_rate = k * math.sqrt(1.0 - eccentricity**2) * (1.0 - 1.5 * sin2_i)
    return raan_rate, argp_rate, mean_anomaly_rate


def _advance_mean_elements(el: OrbitalElements, dt_s, spec: PropagatorSpec):
    """Advance mean elements by dt seconds (scalar or array).

    Returns (a, raan, argp, mean_anomaly) with the same shape as dt_s;
    eccentricity and inclination are constant in this model.
    """
    dt = np.asarray(dt_s, dtype=float)
    a0 = el.semi_major_axis_km
    n0 = el.mean_motion_rad_s

    decay_km_s = 0.0
    if spec.uses_drag and el.bstar != 0.0 and spec.drag_decay_km_per_day != 0.0:
        decay_km_s = (el.bstar / REFERENCE_BSTAR) * spec.drag_decay_km_per_day / 86400.0

    if decay_km_s != 0.0:
        a = a0 - decay_km_s * dt
        # Closed form of the accumulated mean anomaly over a linearly
        # decaying semi-major axis: integral of sqrt(mu) * a(s)^-3/2 ds.
        with np.errstate(invalid="ignore"):
            delta_m = (2.0 * math.sqrt(MU_EARTH) / decay_km_s) * (
                1.0 / np.sqrt(a) - 1.0 / math.sqrt(a0)
            )
    else:
        a = np.broadcast_to(np.asarray(a0), dt.shape).copy() if dt.shape else np.asarray(a0)
        delta_m = n0 * dt

    raan = el.raan_rad
    argp = el.arg_perigee_rad
    mean_anomaly = el.mean_anomaly_rad + delta_m
    if spec.uses_j2:
        raan_rate, argp_rate, m_rate = j2_secular_rates(
            a0, el.eccentricity, el.inclination_rad
        )
        raan = raan + raan_rate * dt
        argp = argp + argp_rate * dt
        mean_anomaly = mean_anomaly + m_rate * dt
    else:
        raan = raan + 0.0 * dt
        argp = argp + 0.0 * dt
    return a, raan, argp, mean_anomaly


def _states_from_mean_elements(a, e: float, inc: float, raan, argp, mean_anomaly):
    """Vectorized conversion of advanced mean elements to (pos, vel) arrays."""
    ecc_anom = solve_kepler(mean_anomaly, e)
    ce, se = np.cos(ecc_anom), np.sin(ecc_anom)
    sqrt_1me2 = math.sqrt(1.0 - e * e)
    x = a * (ce - e)
    y = a * sqrt_1me2 * se
    edf = np.sqrt(MU_EARTH / a**3) * a / (1.0 - e * ce)
    vx = -edf * se
    vy = edf * sqrt_1me2 * ce

    co, so = np.cos(raan), np.sin(raan)
    cw, sw = np.cos(argp), np.sin(argp)
    ci, si = math.cos(inc), math.sin(inc)
    r11 = co * cw - so * sw * ci
    r12 = -co * sw - so * cw * ci
    r21 = so * cw + co * sw * ci
    r22 = -so * sw + co * cw * ci
    r31 = sw * si
    r32 = cw * si

    pos = np.stack([r11 * x + r12 * y, r21 * x + r22 * y, r31 * x + r32 * y], axis=-1)
    vel = np.stack([r11 * vx + r12 * vy, r21 * vx + r22 * vy, r31 * vx + r32 * vy], axis=-1)
    return pos, vel


def propagate_arrays(el: OrbitalElements, dt_s: np.ndarray, spec: PropagatorSpec):
    """Positions/velocities at el.epoch + dt for an array of offsets.

    Returns (positions, velocities) with shape (len(dt_s), 3). Raises
    ReentryError naming the first offending epoch if drag decay drops
    the semi-major axis to or below the Earth radius.
    """
    dt = np.asarray(dt_s, dtype=float)
    a, raan, argp, mean_anomaly = _advance_mean_elements(el, dt, spec)
    bad = np.asarray(a) <= R_EARTH
    if np.any(bad):
        first = float(np.atleast_1d(dt)[np.argmax(np.atleast_1d(bad))])
        raise ReentryError(
            f"semi-major axis decayed below the Earth radius at t = "
            f"{el.epoch.seconds + first:.3f} s",
            el.epoch + first,
        )
    return _states_from_mean_elements(
        a, el.eccentricity, el.inclination_rad, raan, argp, mean_anomaly
    )


def propagate(el: OrbitalElements, to: Epoch, spec: PropagatorSpec) -> StateVector:
    """State of the object at epoch ``to`` under the selected model."""
    pos, vel = propagate_arrays(el, np.asarray(to - el.epoch), spec)
    return StateVector(pos, vel, to)


def propagate_elements(el: OrbitalElements, to: Epoch, spec: PropagatorSpec) -> OrbitalElements:
    """Mean elements advanced to epoch ``to`` (same model as propagate)."""
    dt = to - el.epoch
    a, raan, argp, mean_anomaly = _advance_mean_elements(el, dt, spec)
    a = float(a)
    if a <= R_EARTH:
        raise ReentryError(
            f"semi-major axis decayed below the Earth radius at t = {to.seconds:.3f} s",
            to,
        )
    return OrbitalElements(
        semi_major_axis_km=a,
        eccentricity=el.eccentricity,
        inclination_rad=el.inclination_rad,
        raan_rad=float(raan) % TWO_PI,
        arg_perigee_rad=float(argp) % TWO_PI,
        mean_anomaly_rad=float(mean_anomaly) % TWO_PI,
        epoch=to,
        bstar=el.bstar,
    )


def propagate_ephemeris(
    el: OrbitalElements,
    start: Epoch,
    end: Epoch,
    step_s: float,
    spec: PropagatorSpec,
) -> list[StateVector]:
    """States on the grid start, start+step, ... covering [start, end].

    Entry k equals propagate(el, start + k*step, spec); the grid has
    floor((end - start)/step) + 1 entries.
    """
    if end < start:
        raise ValueError("ephemeris window must satisfy start <= end")
    if step_s <= 0.0:
        raise ValueError("ephemeris step must be positive")
    count = int(math.floor((end - start) / step_s)) + 1
    offsets = (start - el.epoch) + np.arange(count) * step_s
    pos, vel = propagate_arrays(el, offsets, spec)
    return [
        StateVector(pos[k], vel[k], el.epoch + float(offsets[k]))
        for k in range(count)
    ]
