"""Close-approach screening for a target/chaser pair.

Coarse-grid search over the scenario window, conservative margin so no
sub-threshold minimum can hide between grid points, then golden-section
refinement of each candidate to millisecond resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .astro import Epoch, OrbitalElements, StateVector, rtn_frame
from .propagation import PropagatorSpec, propagate, propagate_arrays

DEFAULT_THRESHOLD_KM = 5.0
DEFAULT_STEP_S = 10.0

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

PropagateFn = Callable[[OrbitalElements, Epoch], StateVector]


class BracketError(RuntimeError):
    """refine_tca detected a non-unimodal bracket."""


@dataclass(frozen=True)
class ConjunctionEvent:
    """A screened close approach below the screening threshold."""

    target_elements: OrbitalElements
    chaser_elements: OrbitalElements
    tca: Epoch
    miss_distance_km: float
    relative_speed_km_s: float
    target_state_at_tca: StateVector
    chaser_state_at_tca: StateVector
    screening_threshold_km: float

    def __post_init__(self):
        recomputed = float(np.linalg.norm(
            self.target_state_at_tca.position - self.chaser_state_at_tca.position
        ))
        if recomputed != self.miss_distance_km:
            raise ValueError(
                f"miss distance {self.miss_distance_km} differs from the value "
                f"recomputed from the stored states ({recomputed})"
            )
        if not self.miss_distance_km < self.screening_threshold_km:
            raise ValueError("miss distance must lie below the screening threshold")


def event_from_states(
    target_elements: OrbitalElements,
    chaser_elements: OrbitalElements,
    target_state: StateVector,
    chaser_state: StateVector,
    threshold_km: float,
) -> ConjunctionEvent:
    """Assemble an event so the stored miss distance is recomputable."""
    return ConjunctionEvent(
        target_elements=target_elements,
        chaser_elements=chaser_elements,
        tca=target_state.epoch,
        miss_distance_km=float(np.linalg.norm(target_state.position - chaser_state.position)),
        relative_speed_km_s=float(np.linalg.norm(target_state.velocity - chaser_state.velocity)),
        target_state_at_tca=target_state,
        chaser_state_at_tca=chaser_state,
        screening_threshold_km=threshold_km,
    )


def _pair_distance(
    target: OrbitalElements,
    chaser: OrbitalElements,
    spec: PropagatorSpec,
    propagate_fn: PropagateFn | None,
):
    """Scalar squared-distance function of the epoch."""
    if propagate_fn is None:
        def f(epoch: Epoch) -> float:
            pt, _ = propagate_arrays(target, np.asarray(epoch - target.epoch), spec)
            pc, _ = propagate_arrays(chaser, np.asarray(epoch - chaser.epoch), spec)
            d = pt - pc
            return float(d @ d)
    else:
        def f(epoch: Epoch) -> float:
            d = propagate_fn(target, epoch).position - propagate_fn(chaser, epoch).position
            return float(d @ d)
    return f


def refine_tca(
    target: OrbitalElements,
    chaser: OrbitalElements,
    bracket: tuple[Epoch, Epoch],
    spec: PropagatorSpec,
    time_tol_s: float = 1e-3,
    propagate_fn: PropagateFn | None = None,
) -> tuple[Epoch, float]:
    """Golden-section minimization of the squared inter-object distance.

    The bracket must contain a single local minimum (guaranteed when it
    was placed around a grid minimum by screen_pair). Returns the epoch
    of closest approach and the miss distance there.
    """
    lo, hi = bracket
    if hi < lo:
        lo, hi = hi, lo
    f = _pair_distance(target, chaser, spec, propagate_fn)

    f_lo = f(lo)
    best_t, best_f = lo.seconds, f_lo
    if hi.seconds != lo.seconds:
        f_hi = f(hi)
        if f_hi < best_f:
            best_t, best_f = hi.seconds, f_hi

        a, b = lo.seconds, hi.seconds
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc, fd = f(Epoch(c)), f(Epoch(d))
        while b - a > time_tol_s:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = f(Epoch(c))
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = f(Epoch(d))
        for t, ft in ((c, fc), (d, fd)):
            if ft < best_f:
                best_t, best_f = t, ft

        if best_f > f_lo and best_f > f_hi:
            raise BracketError("minimum exceeds both bracket endpoints")
    return Epoch(best_t), math.sqrt(best_f)


def screen_pair(
    target: OrbitalElements,
    chaser: OrbitalElements,
    window: tuple[Epoch, Epoch],
    spec: PropagatorSpec,
    threshold_km: float = DEFAULT_THRESHOLD_KM,
    step_s: float = DEFAULT_STEP_S,
    propagate_fn: PropagateFn | None = None,
) -> list[ConjunctionEvent]:
    """All sub-threshold closest approaches of the pair in the window.

    One event per refined local minimum of the inter-object distance
    that falls below the threshold; minima closer than two grid steps
    are merged into the deeper one. Events are sorted by TCA.
    """
    start, end = window
    if end < start:
        raise ValueError("screening window must satisfy start <= end")
    if threshold_km <= 0.0 or step_s <= 0.0:
        raise ValueError("threshold and step must be positive")

    count = int(math.floor((end - start) / step_s)) + 1
    times = start.seconds + np.arange(count) * step_s

    if propagate_fn is None:
        pt, vt = propagate_arrays(target, times - target.epoch.seconds, spec)
        pc, vc = propagate_arrays(chaser, times - chaser.epoch.seconds, spec)
    else:
        st = [propagate_fn(target, Epoch(t)) for t in times]
        sc = [propagate_fn(chaser, Epoch(t)) for t in times]
        pt = np.array([s.position for s in st])
        vt = np.array([s.velocity for s in st])
        pc = np.array([s.position for s in sc])
        vc = np.array([s.velocity for s in sc])
    pt = np.atleast_2d(pt)
    pc = np.atleast_2d(pc)
    vt = np.atleast_2d(vt)
    vc = np.atleast_2d(vc)

    dist = np.linalg.norm(pt - pc, axis=1)
    rel_speed = np.linalg.norm(vt - vc, axis=1)

    candidates = _grid_minima(dist)
    refined: list[tuple[float, float]] = []
    for idx in candidates:
        lo_i, hi_i = max(idx - 1, 0), min(idx + 1, count - 1)
        # The true minimum can undercut the grid sample by at most the
        # local relative speed times one step; skip clearly-clear minima.
        v_local = float(rel_speed[lo_i:hi_i + 1].max())
        if dist[idx] - 1.2 * v_local * step_s > threshold_km:
            continue
        tca, _ = refine_tca(
            target, chaser,
            (Epoch(times[lo_i]), Epoch(times[hi_i])),
            spec, propagate_fn=propagate_fn,
        )
        if propagate_fn is None:
            p1, _v1 = propagate_arrays(target, np.asarray(tca - target.epoch), spec)
            p2, _v2 = propagate_arrays(chaser, np.asarray(tca - chaser.epoch), spec)
            miss = float(np.linalg.norm(p1 - p2))
        else:
            miss = float(np.linalg.norm(
                propagate_fn(target, tca).position - propagate_fn(chaser, tca).position
            ))
        if miss < threshold_km:
            refined.append((tca.seconds, miss))

    merged = _merge_minima(refined, 2.0 * step_s)

    events = []
    for tca_s, _miss in merged:
        tca = Epoch(tca_s)
        if propagate_fn is None:
            target_state = propagate(target, tca, spec)
            chaser_state = propagate(chaser, tca, spec)
        else:
            target_state = propagate_fn(target, tca)
            chaser_state = propagate_fn(chaser, tca)
        events.append(event_from_states(
            target, chaser, target_state, chaser_state, threshold_km
        ))
    return events


def _grid_minima(dist: np.ndarray) -> list[int]:
    """Indices of grid local minima, plateau runs collapsed to their
    first index; both window endpoints are eligible."""
    n = len(dist)
    if n == 1:
        return [0]
    is_min = np.empty(n, dtype=bool)
    is_min[0] = dist[0] <= dist[1]
    is_min[-1] = dist[-1] <= dist[-2]
    if n > 2:
        interior = (dist[1:-1] <= dist[:-2]) & (dist[1:-1] <= dist[2:])
        is_min[1:-1] = interior
    idx = np.flatnonzero(is_min)
    out: list[int] = []
    prev = -2
    for i in idx:
        # consecutive flagged indices form a plateau; keep its first sample
        if i != prev + 1:
            out.append(int(i))
        prev = int(i)
    return out


def _merge_minima(found: list[tuple[float, float]], gap_s: float) -> list[tuple[float, float]]:
    """Merge refined minima closer than gap_s into the deeper one."""
    if not found:
        return []
    found = sorted(found)
    merged = [found[0]]
    for tca_s, miss in found[1:]:
        last_tca, last_miss = merged[-1]
        if tca_s - last_tca < gap_s:
            if miss < last_miss:
                merged[-1] = (tca_s, miss)
        else:
            merged.append((tca_s, miss))
    return merged


def relative_geometry(event: ConjunctionEvent) -> tuple[np.ndarray, np.ndarray]:
    """Chaser-minus-target separation and velocity in the target's RTN
    frame at TCA. The separation norm equals the miss distance."""
    rot = rtn_frame(event.target_state_at_tca)
    dr = event.chaser_state_at_tca.position - event.target_state_at_tca.position
    dv = event.chaser_state_at_tca.velocity - event.target_state_at_tca.velocity
    return rot @ dr, rot @ dv
