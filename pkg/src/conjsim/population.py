"""LEO population priors and two-line-element catalog ingestion.

A PopulationPrior holds one marginal distribution per orbital element
(plus bstar) and can be built three ways: the bundled parametric
default, a declarative config dict, or fitted from a parsed TLE
catalog. Elements are sampled independently; that choice is recorded in
dataset metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .astro import Epoch, OrbitalElements, rev_day_to_rad_s, semi_major_axis_from_mean_motion
from .constants import TWO_PI
from .distributions import (
    Distribution,
    DistributionConfigError,
    Histogram,
    LogUniform,
    MixtureOfTruncatedNormals,
    TruncatedNormal,
    Uniform,
    distribution_from_dict,
    distribution_to_dict,
)

# Conventional LEO boundary: period under ~128 minutes.
LEO_MIN_MEAN_MOTION_REV_DAY = 11.25

# Above this mean motion the implied semi-major axis is at or below the
# Earth radius and the elements are not representable.
MAX_MEAN_MOTION_REV_DAY = 16.95

SIZE_KEYS = ("mean_motion", "semi_major_axis")
SHAPE_KEYS = ("eccentricity", "inclination", "raan", "arg_perigee", "mean_anomaly")
ANGLE_KEYS = ("raan", "arg_perigee", "mean_anomaly")


class PriorConfigError(ValueError):
    """Population prior specification is inconsistent."""


class PriorSupportError(RuntimeError):
    """Could not draw invariant-satisfying elements from the prior."""


@dataclass(frozen=True)
class PopulationPrior:
    """Independent per-element marginals.

    Keys: one of {mean_motion [rev/day], semi_major_axis [km]}, plus
    eccentricity, inclination [rad], raan, arg_perigee, mean_anomaly
    [rad] and bstar [1/earth-radii].
    """

    marginals: dict[str, Distribution] = field(default_factory=dict)

    def __post_init__(self):
        keys = set(self.marginals)
        size = [k for k in SIZE_KEYS if k in keys]
        if len(size) != 1:
            raise PriorConfigError(
                f"prior needs exactly one of {SIZE_KEYS}, got {size or 'neither'}"
            )
        expected = set(SHAPE_KEYS) | {"bstar", size[0]}
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise PriorConfigError(
                f"prior keys mismatch: missing {missing}, unknown {extra}"
            )

    @property
    def size_key(self) -> str:
        return "mean_motion" if "mean_motion" in self.marginals else "semi_major_axis"

    @property
    def element_names(self) -> tuple[str, ...]:
        """Sampling order of the six orbital-element sites."""
        return (self.size_key,) + SHAPE_KEYS

    def log_density(self, name: str, value: float) -> float:
        return self.marginals[name].log_density(value)

    def to_dict(self) -> dict:
        return {k: distribution_to_dict(d) for k, d in self.marginals.items()}


def prior_from_dict(spec: dict) -> PopulationPrior:
    if not isinstance(spec, dict):
        raise PriorConfigError("prior config must be a mapping")
    marginals = {}
    for key, sub in spec.items():
        try:
            marginals[str(key)] = distribution_from_dict(sub, where=f"prior.{key}")
        except DistributionConfigError as exc:
            raise PriorConfigError(str(exc)) from exc
    return PopulationPrior(marginals)


def default_population_prior() -> PopulationPrior:
    """Bundled parametric prior shaped like the cataloged LEO population:
    inclination bands near sun-synchronous, 53 and 74 degrees, mean
    motion concentrated in the densest shells, near-circular orbits.
    """
    deg = math.radians
    return PopulationPrior({
        "mean_motion": MixtureOfTruncatedNormals(
            weights=(0.50, 0.30, 0.20),
            components=(
                TruncatedNormal(15.05, 0.35, LEO_MIN_MEAN_MOTION_REV_DAY, 16.5),
                TruncatedNormal(14.10, 0.45, LEO_MIN_MEAN_MOTION_REV_DAY, 16.5),
                TruncatedNormal(12.90, 0.80, LEO_MIN_MEAN_MOTION_REV_DAY, 16.5),
            ),
        ),
        "eccentricity": LogUniform(1e-4, 2e-2),
        "inclination": MixtureOfTruncatedNormals(
            weights=(0.45, 0.35, 0.20),
            components=(
                TruncatedNormal(deg(98.0), deg(3.0), 0.0, math.pi),
                TruncatedNormal(deg(53.0), deg(2.0), 0.0, math.pi),
                TruncatedNormal(deg(74.0), deg(3.0), 0.0, math.pi),
            ),
        ),
        "raan": Uniform(0.0, TWO_PI),
        "arg_perigee": Uniform(0.0, TWO_PI),
        "mean_anomaly": Uniform(0.0, TWO_PI),
        "bstar": LogUniform(1e-6, 1e-3),
    })


def elements_from_values(values: dict[str, float], epoch: Epoch) -> OrbitalElements:
    """Build OrbitalElements from per-element sampled values.

    ``values`` uses prior keys; mean motion (rev/day) is converted to a
    semi-major axis. Raises ValueError when the combination violates the
    element invariants.
    """
    if "mean_motion" in values:
        a = semi_major_axis_from_mean_motion(rev_day_to_rad_s(values["mean_motion"]))
    else:
        a = values["semi_major_axis"]
    return OrbitalElements(
        semi_major_axis_km=a,
        eccentricity=values["eccentricity"],
        inclination_rad=values["inclination"],
        raan_rad=values["raan"],
        arg_perigee_rad=values["arg_perigee"],
        mean_anomaly_rad=values["mean_anomaly"],
        epoch=epoch,
        bstar=values.get("bstar", 0.0),
    )


def sample_object(
    prior: PopulationPrior,
    rng: np.random.Generator,
    epoch: Epoch = Epoch(0.0),
    max_tries: int = 1000,
) -> OrbitalElements:
    """Draw one object's elements from the prior.

    Draws each marginal in a fixed order; combinations that violate the
    element invariants (possible when a user prior strays outside them)
    are redrawn up to ``max_tries`` times.
    """
    names = prior.element_names + ("bstar",)
    for _ in range(max_tries):
        values = {name: prior.marginals[name].sample(rng) for name in names}
        try:
            return elements_from_values(values, epoch)
        except ValueError:
            continue
    raise PriorSupportError(
        f"no invariant-satisfying draw in {max_tries} tries; "
        "prior support barely intersects the valid element region"
    )


# --- TLE catalog ingestion ---------------------------------------------

_TLE_LINE_LENGTH = 69
_CATALOG_REFERENCE = datetime(2000, 1, 1)


class TleParseError(ValueError):
    """Base class for TLE format violations; carries line context."""

    def __init__(self, message: str, line_number: int | None = None):
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)
        self.line_number = line_number


class TleLineLengthError(TleParseError):
    pass


class TleLineNumberError(TleParseError):
    pass


class TleChecksumError(TleParseError):
    pass


class TleFieldError(TleParseError):
    pass


@dataclass(frozen=True)
class TleRecord:
    """Decoded two-line element set.

    The epoch is expressed as seconds since 2000-01-01T00:00:00 (the
    catalog reference instant); angles are kept in the TLE's native
    degrees, mean motion in rev/day.
    """

    catalog_number: int
    epoch: Epoch
    mean_motion_rev_day: float
    eccentricity: float
    inclination_deg: float
    raan_deg: float
    arg_perigee_deg: float
    mean_anomaly_deg: float
    bstar: float
    line1_checksum_ok: bool = True
    line2_checksum_ok: bool = True


def tle_checksum(line: str) -> int:
    """Modulo-10 checksum of the first 68 columns ('-' counts as 1)."""
    total = 0
    for ch in line[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


def _field(line: str, start: int, end: int, kind, line_number: int, name: str):
    """Decode columns [start, end] (1-indexed, inclusive)."""
    raw = line[start - 1:end]
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise TleFieldError(
            f"cannot decode {name} from columns {start}-{end} ({raw!r})",
            line_number,
        ) from exc


def _implied_decimal_exp(raw: str, line_number: int, name: str) -> float:
    """Decode the TLE ±NNNNN±E implied-decimal exponent notation."""
    text = raw.strip().replace(" ", "0")
    if not text:
        return 0.0
    sign = 1.0
    if text[0] in "+-":
        sign = -1.0 if text[0] == "-" else 1.0
        text = text[1:]
    if len(text) < 2 or text[-2] not in "+-":
        raise TleFieldError(f"malformed {name} field {raw!r}", line_number)
    try:
        mantissa = int(text[:-2])
        exponent = int(text[-2:])
    except ValueError as exc:
        raise TleFieldError(f"malformed {name} field {raw!r}", line_number) from exc
    return sign * mantissa * 10.0 ** (exponent - (len(text) - 2))


def _epoch_from_tle(year_2digit: int, day_of_year: float) -> Epoch:
    year = year_2digit + (1900 if year_2digit >= 57 else 2000)
    instant = datetime(year, 1, 1) + timedelta(days=day_of_year - 1.0)
    return Epoch((instant - _CATALOG_REFERENCE).total_seconds())


def parse_tle(line1: str, line2: str, strict: bool = True) -> TleRecord:
    """Decode a line-1/line-2 pair per the standard TLE column layout.

    With strict=True a checksum mismatch raises TleChecksumError naming
    the line; otherwise the record is returned with the corresponding
    checksum flag cleared.
    """
    line1 = line1.rstrip("\r\n")
    line2 = line2.rstrip("\r\n")
    for number, line in ((1, line1), (2, line2)):
        if len(line) != _TLE_LINE_LENGTH:
            raise TleLineLengthError(
                f"expected {_TLE_LINE_LENGTH} characters, got {len(line)}", number
            )
    if not line1.startswith("1 "):
        raise TleLineNumberError(f"line-number marker {line1[:1]!r} is not '1'", 1)
    if not line2.startswith("2 "):
        raise TleLineNumberError(f"line-number marker {line2[:1]!r} is not '2'", 2)

    catalog1 = _field(line1, 3, 7, int, 1, "catalog number")
    catalog2 = _field(line2, 3, 7, int, 2, "catalog number")
    if catalog1 != catalog2:
        raise TleLineNumberError(
            f"catalog numbers disagree between lines ({catalog1} vs {catalog2})", 2
        )

    checks = []
    for number, line in ((1, line1), (2, line2)):
        if not line[68].isdigit():
            raise TleChecksumError("checksum column is not a digit", number)
        ok = tle_checksum(line) == int(line[68])
        if strict and not ok:
            raise TleChecksumError(
                f"checksum mismatch (expected {tle_checksum(line)}, found {line[68]})",
                number,
            )
        checks.append(ok)

    epoch_year = _field(line1, 19, 20, int, 1, "epoch year")
    epoch_day = _field(line1, 21, 32, float, 1, "epoch day")
    bstar = _implied_decimal_exp(line1[53:61], 1, "bstar")

    ecc_raw = line2[26:33]
    try:
        eccentricity = int(ecc_raw) / 1e7
    except ValueError as exc:
        raise TleFieldError(
            f"cannot decode eccentricity from columns 27-33 ({ecc_raw!r})", 2
        ) from exc

    return TleRecord(
        catalog_number=catalog1,
        epoch=_epoch_from_tle(epoch_year, epoch_day),
        mean_motion_rev_day=_field(line2, 53, 63, float, 2, "mean motion"),
        eccentricity=eccentricity,
        inclination_deg=_field(line2, 9, 16, float, 2, "inclination"),
        raan_deg=_field(line2, 18, 25, float, 2, "raan"),
        arg_perigee_deg=_field(line2, 35, 42, float, 2, "argument of perigee"),
        mean_anomaly_deg=_field(line2, 44, 51, float, 2, "mean anomaly"),
        bstar=bstar,
        line1_checksum_ok=checks[0],
        line2_checksum_ok=checks[1],
    )


def _format_implied_decimal_exp(value: float) -> str:
    """Inverse of _implied_decimal_exp: ±NNNNN±E, 8 characters."""
    if value == 0.0:
        return " 00000+0"
    sign = "-" if value < 0.0 else " "
    mag = abs(value)
    exponent = math.floor(math.log10(mag)) + 1
    mantissa = int(round(mag / 10.0 ** (exponent - 5)))
    if mantissa >= 100000:  # rounding rolled over, e.g. 0.999995
        mantissa //= 10
        exponent += 1
    exp_sign = "+" if exponent >= 0 else "-"
    return f"{sign}{mantissa:05d}{exp_sign}{abs(exponent)}"


def format_tle(record: TleRecord) -> tuple[str, str]:
    """Emit a checksum-valid line pair for a record (dataset export).

    Fields that TleRecord does not carry (designators, mean-motion
    derivatives, element-set and revolution numbers) are written as
    zeros/blanks.
    """
    instant = _CATALOG_REFERENCE + timedelta(seconds=record.epoch.seconds)
    year_start = datetime(instant.year, 1, 1)
    day_of_year = 1.0 + (instant - year_start).total_seconds() / 86400.0
    yy = instant.year % 100

    line1 = (
        f"1 {record.catalog_number:05d}U 00000A   "
        f"{yy:02d}{day_of_year:012.8f}  .00000000  00000+0 "
        f"{_format_implied_decimal_exp(record.bstar)} 0 0000"
    )
    line2 = (
        f"2 {record.catalog_number:05d} "
        f"{record.inclination_deg:8.4f} {record.raan_deg:8.4f} "
        f"{round(record.eccentricity * 1e7):07d} "
        f"{record.arg_perigee_deg:8.4f} {record.mean_anomaly_deg:8.4f} "
        f"{record.mean_motion_rev_day:11.8f} 0000"
    )
    line1 += str(tle_checksum(line1 + "0"))
    line2 += str(tle_checksum(line2 + "0"))
    return line1, line2


def parse_tle_text(text: str, strict: bool = True) -> tuple[list[TleRecord], list[str]]:
    """Parse a catalog: consecutive line-1/line-2 pairs with optional
    preceding name lines, detected by the leading "1 " / "2 " markers.

    Strict mode raises on the first malformed record; lenient mode skips
    it and reports the reason with its file line number.
    """
    lines = text.splitlines()
    records: list[TleRecord] = []
    issues: list[str] = []
    i = 0
    while i < len(lines):
        line = lines[i].rstrip("\r\n")
        if not line.startswith("1 "):
            i += 1  # name line or junk
            continue
        if i + 1 >= len(lines) or not lines[i + 1].startswith("2 "):
            message = f"line {i + 1}: line 1 without a following line 2"
            if strict:
                raise TleParseError("dangling line 1", i + 1)
            issues.append(message)
            i += 1
            continue
        try:
            record = parse_tle(line, lines[i + 1], strict=strict)
            if record.line1_checksum_ok and record.line2_checksum_ok:
                records.append(record)
            else:
                bad = i + (1 if not record.line1_checksum_ok else 2)
                issues.append(f"line {bad}: checksum mismatch, record skipped")
        except TleParseError as exc:
            if strict:
                file_line = i + 1 if exc.line_number in (None, 1) else i + 2
                raise type(exc)(str(exc), file_line) from exc
            issues.append(f"line {i + 1 if exc.line_number in (None, 1) else i + 2}: {exc}")
        i += 2
    return records, issues


def read_tle_file(path, strict: bool = True) -> tuple[list[TleRecord], list[str]]:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        return parse_tle_text(fh.read(), strict=strict)


# --- Prior fitting ------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Binning policy for histogram priors fitted from a catalog."""

    n_bins: int = 40

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")


def _histogram_with_guards(values: np.ndarray, n_bins: int) -> Histogram:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        pad = max(1e-9, abs(lo) * 1e-9)
        lo, hi = lo - pad, hi + pad
    counts, edges = np.histogram(values, bins=n_bins, range=(lo, hi))
    width = edges[1] - edges[0]
    # One empty guard bin each side marks the support boundary explicitly.
    edges = np.concatenate([[edges[0] - width], edges, [edges[-1] + width]])
    masses = np.concatenate([[0.0], counts.astype(float), [0.0]])
    return Histogram(tuple(edges), tuple(masses))


def fit_prior(records: list[TleRecord], config: FitConfig = FitConfig()) -> PopulationPrior:
    """Empirical histogram prior from a catalog snapshot.

    Records are filtered to LEO (mean motion above 11.25 rev/day) and to
    the representable element range. The three orientation angles get
    Uniform(0, 2*pi) regardless of the data: a catalog snapshot's raan,
    argument of perigee and mean anomaly are epoch artifacts.
    """
    kept = [
        r for r in records
        if LEO_MIN_MEAN_MOTION_REV_DAY < r.mean_motion_rev_day < MAX_MEAN_MOTION_REV_DAY
        and 0.0 <= r.eccentricity < 1.0
    ]
    if not kept:
        raise PriorConfigError("no records left after the LEO filter")

    mean_motion = np.array([r.mean_motion_rev_day for r in kept])
    eccentricity = np.array([r.eccentricity for r in kept])
    inclination = np.radians([r.inclination_deg for r in kept])
    bstar = np.array([r.bstar for r in kept])

    angle = Uniform(0.0, TWO_PI)
    return PopulationPrior({
        "mean_motion": _histogram_with_guards(mean_motion, config.n_bins),
        "eccentricity": _histogram_with_guards(eccentricity, config.n_bins),
        "inclination": _histogram_with_guards(inclination, config.n_bins),
        "raan": angle,
        "arg_perigee": angle,
        "mean_anomaly": angle,
        "bstar": _histogram_with_guards(bstar, config.n_bins),
    })
