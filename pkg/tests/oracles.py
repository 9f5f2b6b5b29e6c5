"""Independent oracles used to derive expected values for the suite.

These deliberately avoid the production code paths they check: RK4
integration of the point-mass equation, quadrant-checked vector-formula
element extraction, and a dense-grid closest-approach search with
parabolic refinement.
"""

from __future__ import annotations

import math

import numpy as np

from conjsim.astro import Epoch, OrbitalElements
from conjsim.constants import MU_EARTH, TWO_PI
from conjsim.propagation import PropagatorSpec, propagate_arrays


def rk4_two_body_positions(r0, v0, duration_s: float, h_s: float, record_every: int):
    """Integrate d2r/dt2 = -mu r / |r|^3 with fixed-step RK4.

    Returns positions at steps 0, record_every, 2*record_every, ...
    including the initial state.
    """
    def accel(r):
        rn = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
        return -MU_EARTH / rn**3 * r

    y_r = np.asarray(r0, dtype=float).copy()
    y_v = np.asarray(v0, dtype=float).copy()
    n_steps = int(round(duration_s / h_s))
    out = [y_r.copy()]
    for k in range(1, n_steps + 1):
        k1r, k1v = y_v, accel(y_r)
        k2r, k2v = y_v + 0.5 * h_s * k1v, accel(y_r + 0.5 * h_s * k1r)
        k3r, k3v = y_v + 0.5 * h_s * k2v, accel(y_r + 0.5 * h_s * k2r)
        k4r, k4v = y_v + h_s * k3v, accel(y_r + h_s * k3r)
        y_r = y_r + (h_s / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        y_v = y_v + (h_s / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if k % record_every == 0:
            out.append(y_r.copy())
    return np.array(out)


def elements_by_vector_formulas(position, velocity):
    """Textbook element extraction with explicit quadrant checks.

    Returns (a, e, i, raan, argp, true_anomaly); independent of the
    production conversion (arccos plus sign tests instead of atan2).
    """
    r = np.asarray(position, dtype=float)
    v = np.asarray(velocity, dtype=float)
    rmag = float(np.linalg.norm(r))
    vmag2 = float(v @ v)

    h = np.cross(r, v)
    hmag = float(np.linalg.norm(h))
    n = np.cross(np.array([0.0, 0.0, 1.0]), h)
    nmag = float(np.linalg.norm(n))

    evec = ((vmag2 - MU_EARTH / rmag) * r - float(r @ v) * v) / MU_EARTH
    e = float(np.linalg.norm(evec))
    energy = 0.5 * vmag2 - MU_EARTH / rmag
    a = -MU_EARTH / (2.0 * energy)

    inc = math.acos(np.clip(h[2] / hmag, -1.0, 1.0))

    raan = math.acos(np.clip(n[0] / nmag, -1.0, 1.0))
    if n[1] < 0.0:
        raan = TWO_PI - raan

    argp = math.acos(np.clip(float(n @ evec) / (nmag * e), -1.0, 1.0))
    if evec[2] < 0.0:
        argp = TWO_PI - argp

    nu = math.acos(np.clip(float(evec @ r) / (e * rmag), -1.0, 1.0))
    if float(r @ v) < 0.0:
        nu = TWO_PI - nu

    return a, e, inc, raan, argp, nu


def max_relative_speed_bound(el1: OrbitalElements, el2: OrbitalElements) -> float:
    """Analytic bound: vis-viva perigee speed of each object, summed."""
    def vmax(el):
        rp = el.semi_major_axis_km * (1.0 - el.eccentricity)
        return math.sqrt(MU_EARTH * (2.0 / rp - 1.0 / el.semi_major_axis_km))
    return vmax(el1) + vmax(el2)


def brute_force_conjunctions(
    target: OrbitalElements,
    chaser: OrbitalElements,
    window: tuple[Epoch, Epoch],
    spec: PropagatorSpec,
    threshold_km: float,
    fine_step_s: float = 0.1,
    coarse_step_s: float = 2.0,
):
    """Local minima of the fine-grid distance below the threshold.

    Mathematically equal to scanning the whole window at fine_step_s:
    coarse cells are skipped only when the analytic relative-speed bound
    proves no fine sample inside them can fall below the threshold.
    Each surviving grid minimum is polished by fitting a parabola to the
    squared distance through its three neighbouring samples. Returns a
    list of (tca_seconds, miss_km) sorted by time.
    """
    start, end = window
    vbound = max_relative_speed_bound(target, chaser)

    n_coarse = int(math.floor((end - start) / coarse_step_s)) + 1
    t_coarse = start.seconds + np.arange(n_coarse) * coarse_step_s
    d_coarse = _distance_on(target, chaser, t_coarse, spec)

    # A fine sample inside cell [i, i+1] is within coarse_step of both
    # ends, so it is at least min(d_i, d_i+1) - vbound * coarse_step.
    reach = vbound * coarse_step_s
    cell_floor = np.minimum(d_coarse[:-1], d_coarse[1:]) - reach
    hot = np.flatnonzero(cell_floor < threshold_km)
    if hot.size == 0:
        return []

    # Expand hot cells into fine-grid index ranges (plus one-sample
    # margins so minima at cell borders keep their neighbours).
    per_cell = int(round(coarse_step_s / fine_step_s))
    n_fine = int(math.floor((end - start) / fine_step_s)) + 1
    mask = np.zeros(n_fine, dtype=bool)
    for i in hot:
        lo = max(i * per_cell - 1, 0)
        hi = min((i + 1) * per_cell + 1, n_fine - 1)
        mask[lo:hi + 1] = True

    idx_fine = np.flatnonzero(mask)
    t_fine = start.seconds + idx_fine * fine_step_s
    d_fine = _distance_on(target, chaser, t_fine, spec)

    minima = []
    for j in range(len(idx_fine)):
        left_gap = j == 0 or idx_fine[j - 1] != idx_fine[j] - 1
        right_gap = j == len(idx_fine) - 1 or idx_fine[j + 1] != idx_fine[j] + 1
        interior_min = (
            not left_gap and not right_gap
            and d_fine[j] <= d_fine[j - 1] and d_fine[j] <= d_fine[j + 1]
        )
        edge_min = (
            (idx_fine[j] == 0 and not right_gap and d_fine[j] <= d_fine[j + 1])
            or (idx_fine[j] == n_fine - 1 and not left_gap and d_fine[j] <= d_fine[j - 1])
        )
        if not (interior_min or edge_min):
            continue
        if d_fine[j] >= threshold_km:
            continue
        if interior_min:
            tca, miss = _parabolic_vertex(
                t_fine[j - 1:j + 2], d_fine[j - 1:j + 2] ** 2
            )
        else:
            tca, miss = float(t_fine[j]), float(d_fine[j])
        if minima and abs(tca - minima[-1][0]) < fine_step_s:
            if miss < minima[-1][1]:
                minima[-1] = (tca, miss)
            continue
        minima.append((tca, miss))
    return sorted(minima)


def merge_minima_like_screen(minima, gap_s: float):
    """Apply the screen-side merge rule (keep deeper of minima closer
    than gap_s) so oracle and screen event lists are comparable."""
    merged = []
    for tca, miss in sorted(minima):
        if merged and tca - merged[-1][0] < gap_s:
            if miss < merged[-1][1]:
                merged[-1] = (tca, miss)
        else:
            merged.append((tca, miss))
    return merged


def _distance_on(target, chaser, times_s, spec):
    pt, _ = propagate_arrays(target, times_s - target.epoch.seconds, spec)
    pc, _ = propagate_arrays(chaser, times_s - chaser.epoch.seconds, spec)
    return np.linalg.norm(pt - pc, axis=1)


def _parabolic_vertex(ts, f2s):
    """Vertex of the parabola through three (t, squared-distance) samples."""
    t0, t1, t2 = ts
    f0, f1, f2 = f2s
    denom = f0 - 2.0 * f1 + f2
    if denom <= 0.0:
        return float(t1), math.sqrt(max(f1, 0.0))
    h = t1 - t0
    tca = t1 + 0.5 * h * (f0 - f2) / denom
    fmin = f1 - (f0 - f2) ** 2 / (8.0 * denom)
    return float(tca), math.sqrt(max(fmin, 0.0))


def build_crossing_pair(
    rng: np.random.Generator,
    window_s: float,
    a_km: float | None = None,
    radial_offset_km: float | None = None,
    along_track_offset_km: float | None = None,
    t_star_s: float | None = None,
):
    """Two near-circular orbits phased to pass through the intersection
    line of their planes at the same instant.

    Returns (target, chaser, t_star_s). Miss distance at the crossing is
    roughly the root-sum-square of the two offsets.
    """
    a = a_km if a_km is not None else rng.uniform(6900.0, 7400.0)
    t_star = t_star_s if t_star_s is not None else rng.uniform(0.15, 0.85) * window_s
    if radial_offset_km is None:
        radial_offset_km = rng.uniform(0.2, 3.0)
    if along_track_offset_km is None:
        along_track_offset_km = rng.uniform(0.2, 3.0)

    inc1, inc2 = rng.uniform(0.3, math.pi - 0.3, size=2)
    raan1, raan2 = rng.uniform(0.0, TWO_PI, size=2)

    def plane_axes(inc, raan):
        node = np.array([math.cos(raan), math.sin(raan), 0.0])
        m = np.array([
            -math.sin(raan) * math.cos(inc),
            math.cos(raan) * math.cos(inc),
            math.sin(inc),
        ])
        return node, m

    n1, m1 = plane_axes(inc1, raan1)
    n2, m2 = plane_axes(inc2, raan2)
    h1, h2 = np.cross(n1, m1), np.cross(n2, m2)
    shared = np.cross(h1, h2)
    shared_norm = np.linalg.norm(shared)
    if shared_norm < 1e-6:  # nearly coplanar draw; nudge the second plane
        raan2 = raan2 + 0.3
        n2, m2 = plane_axes(inc2, raan2)
        h2 = np.cross(n2, m2)
        shared = np.cross(h1, h2)
        shared_norm = np.linalg.norm(shared)
    shared = shared / shared_norm

    u1 = math.atan2(float(shared @ m1), float(shared @ n1))
    u2 = math.atan2(float(shared @ m2), float(shared @ n2))

    def mean_motion(a_val):
        return math.sqrt(MU_EARTH / a_val**3)

    target = OrbitalElements(
        semi_major_axis_km=a,
        eccentricity=0.0,
        inclination_rad=inc1,
        raan_rad=raan1,
        arg_perigee_rad=0.0,
        mean_anomaly_rad=(u1 - mean_motion(a) * t_star) % TWO_PI,
        epoch=Epoch(0.0),
    )
    a2 = a + radial_offset_km
    phase = along_track_offset_km / a2
    chaser = OrbitalElements(
        semi_major_axis_km=a2,
        eccentricity=0.0,
        inclination_rad=inc2,
        raan_rad=raan2,
        arg_perigee_rad=0.0,
        mean_anomaly_rad=(u2 + phase - mean_motion(a2) * t_star) % TWO_PI,
        epoch=Epoch(0.0),
    )
    return target, chaser, t_star
