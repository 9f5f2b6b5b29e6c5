"""Observation model and CDM issuing pipeline.

States are observed with per-axis RTN Gaussian noise (asymmetric
target/chaser sensor quality), observation uncertainty is pushed to TCA
with a sample-based Monte Carlo cloud, and a time series of conjunction
data messages is emitted over the lead-up to the event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import dblquad

from .astro import Epoch, OrbitalElements, StateVector, rtn_frame, state_to_elements
from .conjunction import ConjunctionEvent, refine_tca
from .propagation import PropagatorSpec, propagate, propagate_arrays

DEFAULT_HARD_BODY_RADIUS_KM = 0.01
PC_METHOD_2D = "ENCOUNTER_PLANE_2D"
PC_METHOD_2D_REGULARIZED = "ENCOUNTER_PLANE_2D_REGULARIZED"

_RESCREEN_BRACKET_S = 1800.0
_RESCREEN_STEP_S = 10.0


class CovarianceSamplingError(RuntimeError):
    """Monte Carlo covariance propagation exhausted its redraw budget."""


@dataclass(frozen=True)
class SensorModel:
    """Per-axis RTN observation noise and the chance an issuing epoch
    carries a fresh observation of the object."""

    position_sigma_rtn_km: tuple[float, float, float]
    velocity_sigma_rtn_km_s: tuple[float, float, float]
    update_probability: float

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position_sigma_rtn_km)
        vel = tuple(float(v) for v in self.velocity_sigma_rtn_km_s)
        if len(pos) != 3 or len(vel) != 3:
            raise ValueError("sigmas must be 3-vectors")
        if any(v <= 0.0 for v in pos + vel):
            raise ValueError("all sigmas must be positive")
        if not 0.0 <= self.update_probability <= 1.0:
            raise ValueError("update_probability must lie in [0, 1]")
        object.__setattr__(self, "position_sigma_rtn_km", pos)
        object.__setattr__(self, "velocity_sigma_rtn_km_s", vel)

    def scaled(self, factor: float) -> "SensorModel":
        return SensorModel(
            tuple(factor * v for v in self.position_sigma_rtn_km),
            tuple(factor * v for v in self.velocity_sigma_rtn_km_s),
            self.update_probability,
        )

    def to_dict(self) -> dict:
        return {
            "position_sigma_rtn_km": list(self.position_sigma_rtn_km),
            "velocity_sigma_rtn_km_s": list(self.velocity_sigma_rtn_km_s),
            "update_probability": self.update_probability,
        }


def sensor_from_dict(spec: dict, where: str = "sensor") -> SensorModel:
    expected = {"position_sigma_rtn_km", "velocity_sigma_rtn_km_s", "update_probability"}
    if set(spec) != expected:
        raise ValueError(f"{where}: keys must be exactly {sorted(expected)}")
    return SensorModel(
        tuple(spec["position_sigma_rtn_km"]),
        tuple(spec["velocity_sigma_rtn_km_s"]),
        float(spec["update_probability"]),
    )


def default_target_sensor() -> SensorModel:
    """GPS-grade, continuously observed operational satellite."""
    return SensorModel((0.01, 0.04, 0.01), (1e-5, 4e-5, 1e-5), 1.0)


def default_chaser_sensor() -> SensorModel:
    """Radar-grade debris tracking with intermittent updates."""
    return SensorModel((0.1, 1.0, 0.3), (1e-4, 1e-3, 3e-4), 0.6)


@dataclass(frozen=True)
class CdmObjectData:
    """Per-object payload of one CDM record."""

    state_at_tca: StateVector
    covariance_rtn: np.ndarray
    observation_age_s: float
    freshly_observed: bool

    def __post_init__(self):
        cov = np.asarray(self.covariance_rtn, dtype=float)
        if cov.shape != (6, 6):
            raise ValueError("covariance must be 6x6")
        cov = 0.5 * (cov + cov.T)
        eigmin = float(np.linalg.eigvalsh(cov).min())
        if eigmin < -1e-12:
            raise ValueError(f"covariance not PSD (min eigenvalue {eigmin:.3e})")
        object.__setattr__(self, "covariance_rtn", cov)
        if self.observation_age_s < 0.0:
            raise ValueError("observation age cannot be negative")


@dataclass(frozen=True)
class CdmRecord:
    """One issued conjunction data message."""

    creation_epoch: Epoch
    tca_estimate: Epoch
    miss_distance_km: float
    relative_speed_km_s: float
    object1: CdmObjectData
    object2: CdmObjectData
    collision_probability: float | None = None
    collision_probability_method: str | None = None

    def __post_init__(self):
        if self.miss_distance_km < 0.0:
            raise ValueError("miss distance estimate cannot be negative")
        if self.collision_probability is not None and not (
            0.0 <= self.collision_probability <= 1.0
        ):
            raise ValueError("collision probability must lie in [0, 1]")


@dataclass(frozen=True)
class CdmSeries:
    """Time-ordered CDM records for one event; ground truth is carried
    for synthetic data and absent for ingested external files."""

    event_id: str
    records: tuple[CdmRecord, ...]
    ground_truth: ConjunctionEvent | None = None

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        for a, b in zip(records, records[1:]):
            if not a.creation_epoch < b.creation_epoch:
                raise ValueError("records must be strictly increasing in creation epoch")
        if self.ground_truth is not None:
            for rec in records:
                if not rec.creation_epoch < self.ground_truth.tca:
                    raise ValueError("no record may be created at or after the true TCA")


def observe_state(
    truth: StateVector, sensor: SensorModel, rng: np.random.Generator
) -> StateVector:
    """Gaussian per-axis perturbation in the truth state's RTN frame."""
    rot = rtn_frame(truth)
    dp = rot.T @ (np.asarray(sensor.position_sigma_rtn_km) * rng.standard_normal(3))
    dv = rot.T @ (np.asarray(sensor.velocity_sigma_rtn_km_s) * rng.standard_normal(3))
    return StateVector(truth.position + dp, truth.velocity + dv, truth.epoch)


def propagate_uncertainty_mc(
    observed: StateVector,
    sensor: SensorModel,
    tca: Epoch,
    spec: PropagatorSpec,
    n_samples: int,
    rng: np.random.Generator,
    bstar: float = 0.0,
) -> tuple[StateVector, np.ndarray]:
    """Monte Carlo push of the observation uncertainty to TCA.

    Perturbs the observed state n_samples times with the sensor noise,
    propagates each sample to TCA, and returns the cloud mean plus the
    6x6 sample covariance (1/(n-1) normalization) expressed in the RTN
    frame of the mean state. Samples whose elements decay below the
    Earth radius are redrawn, up to 10*n_samples attempts in total.
    """
    if n_samples < 10:
        raise ValueError("n_samples must be at least 10")
    rot = rtn_frame(observed)
    pos_sigma = np.asarray(sensor.position_sigma_rtn_km)
    vel_sigma = np.asarray(sensor.velocity_sigma_rtn_km_s)

    states = np.empty((n_samples, 6))
    collected = 0
    attempts = 0
    while collected < n_samples:
        if attempts >= 10 * n_samples:
            raise CovarianceSamplingError(
                f"only {collected}/{n_samples} samples survived after "
                f"{attempts} attempts (persistent decay rejections)"
            )
        attempts += 1
        dp = rot.T @ (pos_sigma * rng.standard_normal(3))
        dv = rot.T @ (vel_sigma * rng.standard_normal(3))
        try:
            el = state_to_elements(StateVector(
                observed.position + dp, observed.velocity + dv, observed.epoch))
            sample = propagate(replace(el, bstar=bstar), tca, spec)
        except (ValueError, RuntimeError):
            continue
        states[collected, :3] = sample.position
        states[collected, 3:] = sample.velocity
        collected += 1

    mean = states.mean(axis=0)
    mean_state = StateVector(mean[:3], mean[3:], tca)
    rot_mean = rtn_frame(mean_state)
    deviations = states - mean
    dev_rtn = np.hstack([
        deviations[:, :3] @ rot_mean.T,
        deviations[:, 3:] @ rot_mean.T,
    ])
    cov = dev_rtn.T @ dev_rtn / (n_samples - 1)
    return mean_state, 0.5 * (cov + cov.T)


def _collision_probability_2d(
    relative_position_rtn,
    relative_velocity_rtn,
    combined_covariance,
    hard_body_radius_km: float,
    abs_tol: float = 1e-6,
) -> tuple[float, bool]:
    rel_pos = np.asarray(relative_position_rtn, dtype=float)
    rel_vel = np.asarray(relative_velocity_rtn, dtype=float)
    vmag = float(np.linalg.norm(rel_vel))
    if vmag <= 0.0:
        raise ValueError("relative velocity must be nonzero for the encounter plane")
    if hard_body_radius_km <= 0.0:
        return 0.0, False

    vhat = rel_vel / vmag
    # In-plane orthonormal basis: both axes perpendicular to vhat.
    helper = np.eye(3)[int(np.argmin(np.abs(vhat)))]
    e1 = np.cross(vhat, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(vhat, e1)
    basis = np.vstack([e1, e2])

    cov = np.asarray(combined_covariance, dtype=float)
    pos_cov = 0.5 * (cov[:3, :3] + cov[:3, :3].T)
    proj = basis @ pos_cov @ basis.T
    proj = 0.5 * (proj + proj.T)
    regularized = False
    if float(np.linalg.eigvalsh(proj).min()) <= 0.0:
        proj = proj + 1e-12 * np.eye(2)
        regularized = True

    miss_2d = basis @ rel_pos
    inv = np.linalg.inv(proj)
    norm_const = 1.0 / (2.0 * math.pi * math.sqrt(float(np.linalg.det(proj))))

    def integrand(r, theta):
        x = r * math.cos(theta) - miss_2d[0]
        y = r * math.sin(theta) - miss_2d[1]
        quad_form = inv[0, 0] * x * x + 2.0 * inv[0, 1] * x * y + inv[1, 1] * y * y
        return r * norm_const * math.exp(-0.5 * quad_form)

    # The quadrature is run well below the contract tolerance so the
    # closed-form checks hold to 1e-9.
    eps = min(abs_tol, 1e-10)
    prob, _err = dblquad(integrand, 0.0, 2.0 * math.pi, 0.0, hard_body_radius_km,
                         epsabs=eps, epsrel=1e-10)
    return float(min(max(prob, 0.0), 1.0)), regularized


def collision_probability_2d(
    relative_position_rtn,
    relative_velocity_rtn,
    combined_covariance,
    hard_body_radius_km: float,
    abs_tol: float = 1e-6,
) -> float:
    """Encounter-plane collision probability.

    Projects the combined position covariance onto the plane orthogonal
    to the relative velocity and integrates the 2D Gaussian centered at
    the projected miss vector over the hard-body disc. A singular
    projected covariance is regularized with 1e-12 km^2 on the diagonal.
    """
    prob, _ = _collision_probability_2d(
        relative_position_rtn, relative_velocity_rtn, combined_covariance,
        hard_body_radius_km, abs_tol,
    )
    return prob


@dataclass
class _ObjectTrack:
    """Mutable bookkeeping for one object across issuing epochs."""

    truth_elements: OrbitalElements
    sensor: SensorModel
    observed_elements: OrbitalElements | None = None
    observed_state: StateVector | None = None
    observation_epoch: Epoch | None = None
    covariance: np.ndarray | None = None


def _estimate_encounter(
    el_target: OrbitalElements,
    el_chaser: OrbitalElements,
    around: Epoch,
    spec: PropagatorSpec,
) -> tuple[Epoch, StateVector, StateVector]:
    """Re-screen the observed-mean trajectories near the true TCA."""
    times = np.arange(
        around.seconds - _RESCREEN_BRACKET_S,
        around.seconds + _RESCREEN_BRACKET_S + _RESCREEN_STEP_S,
        _RESCREEN_STEP_S,
    )
    pt, _ = propagate_arrays(el_target, times - el_target.epoch.seconds, spec)
    pc, _ = propagate_arrays(el_chaser, times - el_chaser.epoch.seconds, spec)
    dist = np.linalg.norm(pt - pc, axis=1)
    best = int(np.argmin(dist))
    lo = max(best - 1, 0)
    hi = min(best + 1, len(times) - 1)
    tca_est, _ = refine_tca(
        el_target, el_chaser, (Epoch(times[lo]), Epoch(times[hi])), spec
    )
    return (
        tca_est,
        propagate(el_target, tca_est, spec),
        propagate(el_chaser, tca_est, spec),
    )


def _combined_covariance_in_target_rtn(
    cov_target: np.ndarray,
    cov_chaser: np.ndarray,
    target_state: StateVector,
    chaser_state: StateVector,
) -> np.ndarray:
    """Rotate the chaser covariance into the target RTN frame and add."""
    rot_t = rtn_frame(target_state)
    rot_c = rtn_frame(chaser_state)
    align = rot_t @ rot_c.T  # chaser RTN -> target RTN
    block = np.zeros((6, 6))
    block[:3, :3] = align
    block[3:, 3:] = align
    return cov_target + block @ cov_chaser @ block.T


def issue_cdm_series(
    event: ConjunctionEvent,
    target_sensor: SensorModel,
    chaser_sensor: SensorModel,
    cadence_s: float,
    lead_s: float,
    jitter_s: float,
    spec: PropagatorSpec,
    n_mc: int,
    rng: np.random.Generator,
    event_id: str = "event-000000",
    hard_body_radius_km: float = DEFAULT_HARD_BODY_RADIUS_KM,
) -> CdmSeries:
    """Emit the CDM time series covering the lead-up to an event.

    Issuing epochs run from TCA - lead on the given cadence with uniform
    jitter, truncated to [scenario start, TCA). Each epoch freshly
    observes an object with its sensor's update probability (the first
    epoch always observes both); stale objects keep their last
    observation and its covariance. Every record re-screens the
    observed-mean trajectories within +-30 minutes of the true TCA, so a
    noisy observation pair that loses the encounter simply yields a
    larger miss estimate.
    """
    if cadence_s <= 0.0:
        raise ValueError("cadence must be positive")
    if jitter_s < 0.0:
        raise ValueError("jitter cannot be negative")
    window_start = event.target_elements.epoch
    tca_true = event.tca

    n_nominal = int(math.ceil(lead_s / cadence_s))
    epochs = []
    for k in range(n_nominal):
        t = tca_true.seconds - lead_s + k * cadence_s
        if jitter_s > 0.0:
            t += rng.uniform(-jitter_s, jitter_s)
        epochs.append(t)
    epochs = [t for t in sorted(epochs) if window_start.seconds <= t < tca_true.seconds]
    epochs = [t for i, t in enumerate(epochs) if i == 0 or t > epochs[i - 1]]

    tracks = {
        "target": _ObjectTrack(event.target_elements, target_sensor),
        "chaser": _ObjectTrack(event.chaser_elements, chaser_sensor),
    }

    records = []
    for i, t in enumerate(epochs):
        creation = Epoch(t)
        fresh: dict[str, bool] = {}
        for name, track in tracks.items():
            draw = rng.uniform()
            fresh[name] = i == 0 or draw < track.sensor.update_probability
            if fresh[name]:
                truth_state = propagate(track.truth_elements, creation, spec)
                track.observed_state = observe_state(truth_state, track.sensor, rng)
                track.observed_elements = replace(
                    state_to_elements(track.observed_state),
                    bstar=track.truth_elements.bstar,
                )
                track.observation_epoch = creation

        tca_est, state_t, state_c = _estimate_encounter(
            tracks["target"].observed_elements,
            tracks["chaser"].observed_elements,
            tca_true, spec,
        )
        for name, track in tracks.items():
            if fresh[name]:
                _mean, cov = propagate_uncertainty_mc(
                    track.observed_state, track.sensor, tca_est, spec, n_mc, rng,
                    bstar=track.truth_elements.bstar,
                )
                track.covariance = cov

        miss = float(np.linalg.norm(state_t.position - state_c.position))
        rel_speed = float(np.linalg.norm(state_t.velocity - state_c.velocity))

        rot_t = rtn_frame(state_t)
        rel_pos_rtn = rot_t @ (state_c.position - state_t.position)
        rel_vel_rtn = rot_t @ (state_c.velocity - state_t.velocity)
        combined = _combined_covariance_in_target_rtn(
            tracks["target"].covariance, tracks["chaser"].covariance, state_t, state_c
        )
        pc, regularized = _collision_probability_2d(
            rel_pos_rtn, rel_vel_rtn, combined, hard_body_radius_km
        )

        records.append(CdmRecord(
            creation_epoch=creation,
            tca_estimate=tca_est,
            miss_distance_km=miss,
            relative_speed_km_s=rel_speed,
            object1=CdmObjectData(
                state_at_tca=state_t,
                covariance_rtn=tracks["target"].covariance,
                observation_age_s=creation - tracks["target"].observation_epoch,
                freshly_observed=fresh["target"],
            ),
            object2=CdmObjectData(
                state_at_tca=state_c,
                covariance_rtn=tracks["chaser"].covariance,
                observation_age_s=creation - tracks["chaser"].observation_epoch,
                freshly_observed=fresh["chaser"],
            ),
            collision_probability=pc,
            collision_probability_method=(
                PC_METHOD_2D_REGULARIZED if regularized else PC_METHOD_2D
            ),
        ))

    return CdmSeries(event_id=event_id, records=tuple(records), ground_truth=event)
