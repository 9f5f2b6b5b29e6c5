"""Foundational astrodynamics: epochs, orbital elements, state vectors,
Kepler's equation, element/state conversions and the RTN local frame.

All operations are pure functions; angles are radians, lengths km,
velocities km/s. A single inertial frame is assumed throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import MU_EARTH, R_EARTH, TWO_PI


class KeplerConvergenceError(RuntimeError):
    """Kepler's equation failed to converge (pathological input)."""


class StateConversionError(ValueError):
    """State cannot be expressed as bound Keplerian elements."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [0, 2*pi)."""
    out = math.fmod(theta, TWO_PI)
    return out + TWO_PI if out < 0.0 else out


def angle_distance(a: float, b: float) -> float:
    """Shortest circular distance |a - b| on the circle, in [0, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d < -math.pi:
        d += TWO_PI
    elif d > math.pi:
        d -= TWO_PI
    return abs(d)


@dataclass(frozen=True, order=True)
class Epoch:
    """An instant, as seconds relative to the scenario reference (t=0)."""

    seconds: float

    def __post_init__(self):
        if not math.isfinite(self.seconds):
            raise ValueError(f"non-finite epoch: {self.seconds}")

    def __add__(self, dt_s: float) -> "Epoch":
        return Epoch(self.seconds + dt_s)

    def __sub__(self, other):
        """Epoch - Epoch gives seconds; Epoch - seconds gives an Epoch."""
        if isinstance(other, Epoch):
            return self.seconds - other.seconds
        return Epoch(self.seconds - other)


@dataclass(frozen=True)
class OrbitalElements:
    """Keplerian state of one object at an epoch.

    Angles are stored normalized to [0, 2*pi); inclination must lie in
    [0, pi]. Only bound, non-suborbital elements are representable.
    bstar is the TLE-style drag coefficient (1/earth-radii).
    """

    semi_major_axis_km: float
    eccentricity: float
    inclination_rad: float
    raan_rad: float
    arg_perigee_rad: float
    mean_anomaly_rad: float
    epoch: Epoch
    bstar: float = 0.0

    def __post_init__(self):
        if not self.semi_major_axis_km > R_EARTH:
            raise ValueError(
                f"semi-major axis {self.semi_major_axis_km} km must exceed "
                f"the Earth radius {R_EARTH} km"
            )
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError(f"eccentricity {self.eccentricity} outside [0, 1)")
        if not 0.0 <= self.inclination_rad <= math.pi:
            raise ValueError(f"inclination {self.inclination_rad} outside [0, pi]")
        for field in ("raan_rad", "arg_perigee_rad", "mean_anomaly_rad"):
            object.__setattr__(self, field, wrap_angle(getattr(self, field)))

    @property
    def mean_motion_rad_s(self) -> float:
        return mean_motion_rad_s(self.semi_major_axis_km)

    @property
    def mean_motion_rev_day(self) -> float:
        return rad_s_to_rev_day(self.mean_motion_rad_s)

    @property
    def period_s(self) -> float:
        return TWO_PI / self.mean_motion_rad_s

    def at_epoch(self, epoch: Epoch) -> "OrbitalElements":
        return replace(self, epoch=epoch)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Inertial position (km) and velocity (km/s) at an epoch."""

    position: np.ndarray
    velocity: np.ndarray
    epoch: Epoch

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        vel = np.asarray(self.velocity, dtype=float)
        if pos.shape != (3,) or vel.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise ValueError("non-finite state vector components")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)

    @property
    def radius_km(self) -> float:
        return float(np.linalg.norm(self.position))

    @property
    def speed_km_s(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def specific_energy(self) -> float:
        """v^2/2 - mu/r (km^2/s^2); negative for bound orbits."""
        return 0.5 * self.speed_km_s**2 - MU_EARTH / self.radius_km


def mean_motion_rad_s(semi_major_axis_km: float) -> float:
    """Mean motion n = sqrt(mu/a^3)."""
    return math.sqrt(MU_EARTH / semi_major_axis_km**3)


def semi_major_axis_from_mean_motion(n_rad_s: float) -> float:
    """Invert n = sqrt(mu/a^3); exact round trip with mean_motion_rad_s."""
    return (MU_EARTH / n_rad_s**2) ** (1.0 / 3.0)


def rev_day_to_rad_s(n_rev_day: float) -> float:
    return n_rev_day * TWO_PI / 86400.0


def rad_s_to_rev_day(n_rad_s: float) -> float:
    return n_rad_s * 86400.0 / TWO_PI


def solve_kepler(mean_anomaly, eccentricity: float, tol: float = 1e-13, max_iter: int = 50):
    """Solve E - e*sin(E) = M for the eccentric anomaly E.

    Newton iteration seeded with E0 = M (E0 = pi for e > 0.8), falling
    back to bisection on [0, 2*pi] for entries that have not converged
    after ``max_iter`` steps. Accepts scalars or numpy arrays; E is
    returned on the same 2*pi branch as M.
    """
    if not 0.0 <= eccentricity < 1.0:
        raise ValueError(f"eccentricity {eccentricity} outside [0, 1)")
    scalar = np.isscalar(mean_anomaly)
    m = np.atleast_1d(np.asarray(mean_anomaly, dtype=float))
    if not np.isfinite(m).all():
        raise ValueError("non-finite mean anomaly")
    e = eccentricity

    branch = np.floor(m / TWO_PI)
    mr = m - branch * TWO_PI

    ecc_anom = mr.copy() if e <= 0.8 else np.full_like(mr, math.pi)
    converged = np.zeros(mr.shape, dtype=bool)
    for _ in range(max_iter):
        f = ecc_anom - e * np.sin(ecc_anom) - mr
        converged = np.abs(f) <= tol
        if converged.all():
            break
        step = f / (1.0 - e * np.cos(ecc_anom))
        ecc_anom = np.where(converged, ecc_anom, ecc_anom - step)

    if not converged.all():
        # Bisection rescue: f(0) = -M <= 0 and f(2*pi) = 2*pi - M > 0.
        todo = ~converged
        lo = np.zeros(int(todo.sum()))
        hi = np.full_like(lo, TWO_PI)
        sub_m = mr[todo]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = mid - e * np.sin(mid) - sub_m
            hi = np.where(fm > 0.0, mid, hi)
            lo = np.where(fm > 0.0, lo, mid)
            if np.all(hi - lo < 1e-15):
                break
        mid = 0.5 * (lo + hi)
        if np.any(np.abs(mid - e * np.sin(mid) - sub_m) > 1e-12):
            raise KeplerConvergenceError(
                f"Kepler solve did not converge for e={e}"
            )
        ecc_anom[todo] = mid

    out = ecc_anom + branch * TWO_PI
    return float(out[0]) if scalar else out.reshape(np.shape(mean_anomaly))


def perifocal_to_inertial(inclination_rad: float, raan_rad: float,
                          arg_perigee_rad: float) -> np.ndarray:
    """Rotation matrix from the perifocal (PQW) frame to inertial."""
    co, so = math.cos(raan_rad), math.sin(raan_rad)
    cw, sw = math.cos(arg_perigee_rad), math.sin(arg_perigee_rad)
    ci, si = math.cos(inclination_rad), math.sin(inclination_rad)
    return np.array([
        [co * cw - so * sw * ci, -co * sw - so * cw * ci, so * si],
        [so * cw + co * sw * ci, -so * sw + co * cw * ci, -co * si],
        [sw * si, cw * si, ci],
    ])


def elements_to_state(el: OrbitalElements) -> StateVector:
    """Keplerian elements to the inertial state at el.epoch."""
    a, e = el.semi_major_axis_km, el.eccentricity
    ecc_anom = solve_kepler(el.mean_anomaly_rad, e)
    ce, se = math.cos(ecc_anom), math.sin(ecc_anom)
    sqrt_1me2 = math.sqrt(1.0 - e * e)
    pos_pqw = np.array([a * (ce - e), a * sqrt_1me2 * se, 0.0])
    # a * dE/dt, with dE/dt = n / (1 - e cos E)
    edot_factor = mean_motion_rad_s(a) * a / (1.0 - e * ce)
    vel_pqw = np.array([-edot_factor * se, edot_factor * sqrt_1me2 * ce, 0.0])
    rot = perifocal_to_inertial(el.inclination_rad, el.raan_rad, el.arg_perigee_rad)
    return StateVector(rot @ pos_pqw, rot @ vel_pqw, el.epoch)


_DEGENERACY_EPS = 1e-11


def state_to_elements(sv: StateVector) -> OrbitalElements:
    """Inertial state to Keplerian elements (bound orbits only).

    Degenerate geometries are resolved deterministically: for e below
    1e-11 the argument of perigee is zeroed and folded into the mean
    anomaly; for inclination below 1e-11 the RAAN is zeroed and folded
    into the argument of perigee. bstar cannot be recovered from a
    single state and is returned as 0.
    """
    r = np.asarray(sv.position, dtype=float)
    v = np.asarray(sv.velocity, dtype=float)
    rmag = float(np.linalg.norm(r))
    if rmag <= 0.0:
        raise StateConversionError("zero position vector")

    h = np.cross(r, v)
    hmag = float(np.linalg.norm(h))
    if hmag < 1e-9 * rmag:
        raise StateConversionError("rectilinear state (|r x v| ~ 0)")

    energy = 0.5 * float(v @ v) - MU_EARTH / rmag
    if energy >= 0.0:
        raise StateConversionError(f"unbound state (specific energy {energy:.6g} >= 0)")
    a = -MU_EARTH / (2.0 * energy)

    evec = ((float(v @ v) - MU_EARTH / rmag) * r - float(r @ v) * v) / MU_EARTH
    e = float(np.linalg.norm(evec))

    inc = math.acos(max(-1.0, min(1.0, h[2] / hmag)))
    node = np.array([-h[1], h[0], 0.0])
    nmag = float(np.linalg.norm(node))

    equatorial = inc < _DEGENERACY_EPS or math.pi - inc < _DEGENERACY_EPS
    circular = e < _DEGENERACY_EPS

    if equatorial:
        raan = 0.0
        if circular:
            argp = 0.0
            true_anom = math.atan2(r[1], r[0])
            if inc > math.pi / 2:  # retrograde: longitude runs backwards
                true_anom = -true_anom
        else:
            argp = math.atan2(evec[1], evec[0])
            if inc > math.pi / 2:
                argp = -argp
            true_anom = _angle_between(evec, r, np.sign(float(r @ v)))
    elif circular:
        raan = math.atan2(node[1], node[0])
        argp = 0.0
        true_anom = _angle_between(node, r, np.sign(r[2]))
    else:
        raan = math.atan2(node[1], node[0])
        argp = _angle_between(node, evec, np.sign(evec[2]))
        true_anom = _angle_between(evec, r, np.sign(float(r @ v)))

    if circular:
        mean_anom = true_anom
    else:
        ecc_anom = math.atan2(
            math.sqrt(1.0 - e * e) * math.sin(true_anom), e + math.cos(true_anom)
        )
        mean_anom = ecc_anom - e * math.sin(ecc_anom)

    return OrbitalElements(
        semi_major_axis_km=a,
        eccentricity=e if not circular else 0.0,
        inclination_rad=min(max(inc, 0.0), math.pi),
        raan_rad=wrap_angle(raan),
        arg_perigee_rad=wrap_angle(argp),
        mean_anomaly_rad=wrap_angle(mean_anom),
        epoch=sv.epoch,
        bstar=0.0,
    )


def _angle_between(a: np.ndarray, b: np.ndarray, sign: float) -> float:
    """Angle from a to b in [0, 2*pi), oriented by the sign hint."""
    amag = float(np.linalg.norm(a))
    bmag = float(np.linalg.norm(b))
    cosang = float(a @ b) / (amag * bmag)
    ang = math.acos(max(-1.0, min(1.0, cosang)))
    return TWO_PI - ang if sign < 0.0 else ang


def rtn_frame(sv: StateVector) -> np.ndarray:
    """Rotation matrix whose rows are the radial, transverse and normal
    unit axes of the state. Maps inertial vectors into RTN.
    """
    r = np.asarray(sv.position, dtype=float)
    rmag = float(np.linalg.norm(r))
    if rmag <= 0.0:
        raise StateConversionError("zero position vector")
    h = np.cross(r, sv.velocity)
    hmag = float(np.linalg.norm(h))
    if hmag < 1e-9 * rmag:
        raise StateConversionError("rectilinear state (|r x v| ~ 0)")
    radial = r / rmag
    normal = h / hmag
    transverse = np.cross(normal, radial)
    return np.vstack([radial, transverse, normal])
