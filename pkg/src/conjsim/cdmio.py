"""File formats: CDM series, flat CDM table, ground-truth sidecars and
covariance reference samples.

All formats are line-delimited text with a version header; numbers are
printed with 17 significant digits so parse(write(x)) == x.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .astro import Epoch, OrbitalElements, StateVector
from .cdm import CdmObjectData, CdmRecord, CdmSeries
from .conjunction import ConjunctionEvent
from .lineformat import (
    LineFormatError,
    check_header,
    format_float,
    header_line,
    kv_line,
    parse_kv_line,
    take_float,
    take_optional_float,
    take_str,
)

CDM_KIND = "CDM"
TABLE_KIND = "CDMTABLE"
TRUTH_KIND = "TRUTH"
COVREF_KIND = "COVREF"

_RTN_LABELS = ("R", "T", "N", "RDOT", "TDOT", "NDOT")
_LOWER_TRI = [(i, j) for i in range(6) for j in range(i + 1)]
_STATE_SUFFIXES = ("X_KM", "Y_KM", "Z_KM", "VX_KM_S", "VY_KM_S", "VZ_KM_S")


def covariance_field_names(prefix: str) -> list[str]:
    return [f"{prefix}_C{_RTN_LABELS[i]}_{_RTN_LABELS[j]}" for i, j in _LOWER_TRI]


def pack_lower_triangular(cov: np.ndarray) -> list[float]:
    return [float(cov[i, j]) for i, j in _LOWER_TRI]


def unpack_lower_triangular(values) -> np.ndarray:
    cov = np.zeros((6, 6))
    for (i, j), v in zip(_LOWER_TRI, values):
        cov[i, j] = v
        cov[j, i] = v
    return cov


def cdm_field_names() -> list[str]:
    names = ["EVENT_ID", "CREATION_EPOCH_S", "TCA_S", "MISS_DISTANCE_KM",
             "RELATIVE_SPEED_KM_S"]
    for prefix in ("OBJ1", "OBJ2"):
        names += [f"{prefix}_{sfx}" for sfx in _STATE_SUFFIXES]
        names += covariance_field_names(prefix)
        names.append(f"{prefix}_OBS_AGE_S")
    names += ["PC", "PC_METHOD"]
    return names


def _record_pairs(event_id: str, record: CdmRecord) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = [
        ("EVENT_ID", event_id),
        ("CREATION_EPOCH_S", record.creation_epoch.seconds),
        ("TCA_S", record.tca_estimate.seconds),
        ("MISS_DISTANCE_KM", record.miss_distance_km),
        ("RELATIVE_SPEED_KM_S", record.relative_speed_km_s),
    ]
    for prefix, obj in (("OBJ1", record.object1), ("OBJ2", record.object2)):
        state = np.concatenate([obj.state_at_tca.position, obj.state_at_tca.velocity])
        pairs += [
            (f"{prefix}_{sfx}", float(v)) for sfx, v in zip(_STATE_SUFFIXES, state)
        ]
        pairs += list(zip(covariance_field_names(prefix),
                          pack_lower_triangular(obj.covariance_rtn)))
        pairs.append((f"{prefix}_OBS_AGE_S", obj.observation_age_s))
    pairs.append(("PC", record.collision_probability))
    pairs.append(("PC_METHOD", record.collision_probability_method))
    return pairs


def _object_from_fields(fields: dict, prefix: str, tca: Epoch, n: int) -> CdmObjectData:
    state = [take_float(fields, f"{prefix}_{sfx}", n) for sfx in _STATE_SUFFIXES]
    cov = unpack_lower_triangular(
        [take_float(fields, name, n) for name in covariance_field_names(prefix)]
    )
    age = take_float(fields, f"{prefix}_OBS_AGE_S", n)
    return CdmObjectData(
        state_at_tca=StateVector(state[:3], state[3:], tca),
        covariance_rtn=cov,
        observation_age_s=age,
        freshly_observed=age == 0.0,
    )


def _record_from_fields(fields: dict, n: int) -> tuple[str, CdmRecord]:
    event_id = take_str(fields, "EVENT_ID", n)
    creation = Epoch(take_float(fields, "CREATION_EPOCH_S", n))
    tca = Epoch(take_float(fields, "TCA_S", n))
    miss = take_float(fields, "MISS_DISTANCE_KM", n)
    rel_speed = take_float(fields, "RELATIVE_SPEED_KM_S", n)
    obj1 = _object_from_fields(fields, "OBJ1", tca, n)
    obj2 = _object_from_fields(fields, "OBJ2", tca, n)
    pc = take_optional_float(fields, "PC", n)
    method = take_str(fields, "PC_METHOD", n)
    if fields:
        raise LineFormatError(f"unknown fields {sorted(fields)}", n)
    return event_id, CdmRecord(
        creation_epoch=creation,
        tca_estimate=tca,
        miss_distance_km=miss,
        relative_speed_km_s=rel_speed,
        object1=obj1,
        object2=obj2,
        collision_probability=pc,
        collision_probability_method=None if method == "NA" else method,
    )


def write_cdm_series(series: CdmSeries, path) -> None:
    lines = [header_line(CDM_KIND)]
    lines += [kv_line(_record_pairs(series.event_id, rec)) for rec in series.records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_cdm_series(path) -> CdmSeries:
    """Ingest a CDM file back into a series (ground truth absent)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise LineFormatError("empty file", 1)
    check_header(lines[0], CDM_KIND)
    event_id = None
    records = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = parse_kv_line(line, n)
        eid, record = _record_from_fields(fields, n)
        if event_id is None:
            event_id = eid
        elif eid != event_id:
            raise LineFormatError(
                f"mixed event ids in one file ({eid!r} vs {event_id!r})", n)
        records.append(record)
    if event_id is None:
        raise LineFormatError("no records in file", 1)
    return CdmSeries(event_id=event_id, records=tuple(records), ground_truth=None)


def write_cdm_table(series_list, path) -> None:
    """Flat tabular export: same columns as the KV format, CSV encoded."""
    names = cdm_field_names()
    lines = [header_line(TABLE_KIND), ",".join(names)]
    for series in series_list:
        for record in series.records:
            values = dict(_record_pairs(series.event_id, record))
            row = []
            for name in names:
                v = values[name]
                if v is None:
                    row.append("NA")
                elif isinstance(v, float):
                    row.append(format_float(v))
                else:
                    row.append(str(v))
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


# --- Ground truth sidecar -------------------------------------------------

def _element_pairs(prefix: str, el: OrbitalElements) -> list[tuple[str, float]]:
    return [
        (f"{prefix}_A_KM", el.semi_major_axis_km),
        (f"{prefix}_ECC", el.eccentricity),
        (f"{prefix}_INC_RAD", el.inclination_rad),
        (f"{prefix}_RAAN_RAD", el.raan_rad),
        (f"{prefix}_ARGP_RAD", el.arg_perigee_rad),
        (f"{prefix}_M_RAD", el.mean_anomaly_rad),
        (f"{prefix}_EPOCH_S", el.epoch.seconds),
        (f"{prefix}_BSTAR", el.bstar),
    ]


def _elements_from_fields(fields: dict, prefix: str, n: int) -> OrbitalElements:
    return OrbitalElements(
        semi_major_axis_km=take_float(fields, f"{prefix}_A_KM", n),
        eccentricity=take_float(fields, f"{prefix}_ECC", n),
        inclination_rad=take_float(fields, f"{prefix}_INC_RAD", n),
        raan_rad=take_float(fields, f"{prefix}_RAAN_RAD", n),
        arg_perigee_rad=take_float(fields, f"{prefix}_ARGP_RAD", n),
        mean_anomaly_rad=take_float(fields, f"{prefix}_M_RAD", n),
        epoch=Epoch(take_float(fields, f"{prefix}_EPOCH_S", n)),
        bstar=take_float(fields, f"{prefix}_BSTAR", n),
    )


def write_ground_truth(event_id: str, event: ConjunctionEvent, path) -> None:
    pairs: list[tuple[str, object]] = [
        ("EVENT_ID", event_id),
        ("TCA_S", event.tca.seconds),
        ("MISS_DISTANCE_KM", event.miss_distance_km),
        ("RELATIVE_SPEED_KM_S", event.relative_speed_km_s),
        ("SCREENING_THRESHOLD_KM", event.screening_threshold_km),
    ]
    pairs += _element_pairs("TARGET", event.target_elements)
    pairs += _element_pairs("CHASER", event.chaser_elements)
    for prefix, state in (("TARGET", event.target_state_at_tca),
                          ("CHASER", event.chaser_state_at_tca)):
        flat = np.concatenate([state.position, state.velocity])
        pairs += [(f"{prefix}_{sfx}", float(v))
                  for sfx, v in zip(_STATE_SUFFIXES, flat)]
    Path(path).write_text(header_line(TRUTH_KIND) + "\n" + kv_line(pairs) + "\n")


def read_ground_truth(path) -> tuple[str, ConjunctionEvent]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise LineFormatError("empty file", 1)
    check_header(lines[0], TRUTH_KIND)
    fields = parse_kv_line(lines[1], 2)
    event_id = take_str(fields, "EVENT_ID", 2)
    tca = Epoch(take_float(fields, "TCA_S", 2))
    miss = take_float(fields, "MISS_DISTANCE_KM", 2)
    rel_speed = take_float(fields, "RELATIVE_SPEED_KM_S", 2)
    threshold = take_float(fields, "SCREENING_THRESHOLD_KM", 2)
    target_el = _elements_from_fields(fields, "TARGET", 2)
    chaser_el = _elements_from_fields(fields, "CHASER", 2)
    states = {}
    for prefix in ("TARGET", "CHASER"):
        flat = [take_float(fields, f"{prefix}_{sfx}", 2) for sfx in _STATE_SUFFIXES]
        states[prefix] = StateVector(flat[:3], flat[3:], tca)
    event = ConjunctionEvent(
        target_elements=target_el,
        chaser_elements=chaser_el,
        tca=tca,
        miss_distance_km=miss,
        relative_speed_km_s=rel_speed,
        target_state_at_tca=states["TARGET"],
        chaser_state_at_tca=states["CHASER"],
        screening_threshold_km=threshold,
    )
    return event_id, event


# --- Covariance reference samples ----------------------------------------

@dataclass(frozen=True)
class CovarianceReference:
    """Sampled 6x6 RTN covariances at TCA, one pair per event row."""

    target: list[np.ndarray]
    chaser: list[np.ndarray]


def write_covariance_reference(pairs, path) -> None:
    """Rows of 42 numbers: 21 lower-triangular entries per object."""
    lines = [header_line(COVREF_KIND)]
    for cov_t, cov_c in pairs:
        row = pack_lower_triangular(np.asarray(cov_t)) + \
            pack_lower_triangular(np.asarray(cov_c))
        lines.append(" ".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_covariance_reference(path) -> CovarianceReference:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise LineFormatError("empty file", 1)
    check_header(lines[0], COVREF_KIND)
    target, chaser = [], []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 42:
            raise LineFormatError(
                f"expected 42 covariance entries, got {len(tokens)}", n)
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise LineFormatError("non-numeric covariance entry", n) from None
        target.append(unpack_lower_triangular(values[:21]))
        chaser.append(unpack_lower_triangular(values[21:]))
    if not target:
        raise LineFormatError("no covariance rows in file", 1)
    return CovarianceReference(target=target, chaser=chaser)
