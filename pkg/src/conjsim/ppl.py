"""Minimal trace-based probabilistic-program runtime.

A model is a callable taking a ModelContext and using its ``sample`` /
``observe`` primitives for all randomness. Each execution yields a
Trace: latent draws keyed by (lexical address, instance counter) with
their log prior terms, plus observation log likelihood terms. Inference
is importance sampling with the prior as proposal (likelihood
weighting): a trace's log weight is exactly its log likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from .distributions import Distribution
from .lineformat import (
    LineFormatError,
    check_header,
    format_float,
    header_line,
)

POSTERIOR_KIND = "POSTERIOR"

NEG_INF = float("-inf")


class StructuralMismatchError(RuntimeError):
    """Observation names emitted by the model and the conditioning set
    do not agree."""


class DegeneratePosteriorError(RuntimeError):
    """Every proposal received weight -inf."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SiteNotFoundError(KeyError):
    """No finite-weight trace contains the requested sample site."""


class _TraceRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Address:
    """Identity of one draw: the sample statement's lexical label plus
    how many times that statement had already run in this execution."""

    lexical_id: str
    instance: int


@dataclass(frozen=True)
class TraceEntry:
    address: Address
    value: float
    log_prior_term: float


@dataclass(frozen=True)
class ObservationRecord:
    name: str
    value: float
    log_likelihood_term: float


@dataclass(frozen=True)
class Trace:
    """One execution of a generative program."""

    entries: tuple[TraceEntry, ...]
    observations: tuple[ObservationRecord, ...]
    result: Any = None
    rejected: bool = False
    reject_reason: str | None = None

    @property
    def log_prior(self) -> float:
        return sum(e.log_prior_term for e in self.entries)

    @property
    def log_likelihood(self) -> float:
        if self.rejected:
            return NEG_INF
        return sum(o.log_likelihood_term for o in self.observations)

    def value_at(self, lexical_id: str, instance: int = 0) -> float:
        for entry in self.entries:
            if entry.address.lexical_id == lexical_id and \
                    entry.address.instance == instance:
                return entry.value
        raise SiteNotFoundError(f"{lexical_id}[{instance}]")

    def has_site(self, lexical_id: str, instance: int = 0) -> bool:
        return any(
            e.address.lexical_id == lexical_id and e.address.instance == instance
            for e in self.entries
        )


class ModelContext:
    """Handle a model uses to draw latents and score observations."""

    def __init__(self, rng: np.random.Generator,
                 observations: Mapping[str, float] | None = None):
        self.rng = rng
        self._observations = dict(observations) if observations is not None else None
        self._pending = set(self._observations) if observations is not None else set()
        self._instances: dict[str, int] = {}
        self._entries: list[TraceEntry] = []
        self._obs_records: list[ObservationRecord] = []

    @property
    def conditioned(self) -> bool:
        return self._observations is not None

    def sample(self, lexical_id: str, dist: Distribution) -> float:
        instance = self._instances.get(lexical_id, 0)
        self._instances[lexical_id] = instance + 1
        value = dist.sample(self.rng)
        self._entries.append(TraceEntry(
            Address(lexical_id, instance), value, dist.log_density(value)))
        return value

    def observe(self, name: str, dist: Distribution) -> float:
        """Score an observable; returns the value in effect.

        Conditioned runs score the externally supplied value; prior runs
        draw the observable from its own distribution (forward data
        generation) and score that.
        """
        if self._observations is None:
            value = dist.sample(self.rng)
        else:
            if name not in self._observations:
                raise StructuralMismatchError(
                    f"model observed {name!r} which is not in the conditioning set")
            value = self._observations[name]
            self._pending.discard(name)
        self._obs_records.append(ObservationRecord(name, value, dist.log_density(value)))
        return value

    def reject(self, reason: str):
        """Abort this execution with weight -inf (not a structural error)."""
        raise _TraceRejected(reason)


def run_model(
    model: Callable[[ModelContext], Any],
    rng: np.random.Generator,
    observations: Mapping[str, float] | None = None,
) -> Trace:
    """Execute the model once: prior mode when observations is None,
    conditioned mode otherwise.

    In conditioned mode every conditioning name must be observed exactly
    once by the model or a StructuralMismatchError is raised (rejected
    executions are exempt: they carry weight -inf anyway).
    """
    ctx = ModelContext(rng, observations)
    try:
        result = model(ctx)
    except _TraceRejected as stop:
        return Trace(
            entries=tuple(ctx._entries),
            observations=tuple(ctx._obs_records),
            result=None,
            rejected=True,
            reject_reason=stop.reason,
        )
    if observations is not None and ctx._pending:
        raise StructuralMismatchError(
            f"conditioning names never observed by the model: {sorted(ctx._pending)}")
    return Trace(
        entries=tuple(ctx._entries),
        observations=tuple(ctx._obs_records),
        result=result,
    )


@dataclass(frozen=True)
class WeightedPosterior:
    """Importance-weighted traces plus the log normalizer."""

    samples: tuple[tuple[Trace, float], ...]
    log_normalizer: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        weights = [w for _, w in self.samples]
        finite = [w for w in weights if w > NEG_INF]
        if not finite:
            raise DegeneratePosteriorError(
                "all importance weights are -inf",
                diagnostics={
                    "n_samples": len(weights),
                    "n_rejected": sum(1 for t, _ in self.samples if t.rejected),
                },
            )
        peak = max(finite)
        object.__setattr__(
            self, "log_normalizer",
            peak + math.log(sum(math.exp(w - peak) for w in finite)))

    def normalized_weights(self) -> np.ndarray:
        out = np.array([
            math.exp(w - self.log_normalizer) if w > NEG_INF else 0.0
            for _, w in self.samples
        ])
        return out

    def site_values(self, lexical_id: str, instance: int = 0):
        """(values, normalized weights) over traces containing the site."""
        values, weights = [], []
        for (trace, _), w in zip(self.samples, self.normalized_weights()):
            if trace.has_site(lexical_id, instance):
                values.append(trace.value_at(lexical_id, instance))
                weights.append(w)
        if not values:
            raise SiteNotFoundError(f"{lexical_id}[{instance}]")
        return np.asarray(values), np.asarray(weights)


def importance_sample(
    model: Callable[[ModelContext], Any],
    observations: Mapping[str, float] | None,
    n: int,
    rng: np.random.Generator,
) -> WeightedPosterior:
    """Likelihood weighting: n prior-proposal traces, each scored by its
    observation log likelihood.

    Per-trace random streams are spawned from the parent generator, so
    the result is reproducible and independent of evaluation order.
    """
    if n < 1:
        raise ValueError("need at least one proposal")
    streams = rng.spawn(n)
    samples = []
    for stream in streams:
        trace = run_model(model, stream, observations)
        samples.append((trace, trace.log_likelihood))
    return WeightedPosterior(tuple(samples))


def posterior_expectation(
    posterior: WeightedPosterior, f: Callable[[Trace], float]
) -> float:
    """Self-normalized importance estimate of E[f] under the posterior."""
    weights = posterior.normalized_weights()
    total = 0.0
    for (trace, _), w in zip(posterior.samples, weights):
        if w > 0.0:
            total += w * f(trace)
    return total


def effective_sample_size(posterior: WeightedPosterior) -> float:
    """(sum w)^2 / sum w^2 on the normalized weights."""
    w = posterior.normalized_weights()
    return float(w.sum() ** 2 / (w ** 2).sum())


@dataclass(frozen=True)
class MarginalHistogram:
    """Weighted histogram of one latent site.

    Masses sum to the fraction of normalized posterior weight carried by
    traces containing the site.
    """

    bin_edges: np.ndarray
    masses: np.ndarray

    def mean(self) -> float:
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        return float((centers * self.masses).sum() / self.masses.sum())

    def total_variation_from(self, other_masses) -> float:
        mine = self.masses / self.masses.sum()
        theirs = np.asarray(other_masses, dtype=float)
        theirs = theirs / theirs.sum()
        return float(0.5 * np.abs(mine - theirs).sum())


def posterior_marginal(
    posterior: WeightedPosterior,
    lexical_id: str,
    instance: int = 0,
    bins: int = 40,
    bin_range: tuple[float, float] | None = None,
) -> MarginalHistogram:
    values, weights = posterior.site_values(lexical_id, instance)
    if bin_range is None:
        lo, hi = float(values.min()), float(values.max())
        if hi <= lo:
            pad = max(1e-12, abs(lo) * 1e-12)
            lo, hi = lo - pad, hi + pad
        bin_range = (lo, hi)
    masses, edges = np.histogram(values, bins=bins, range=bin_range, weights=weights)
    return MarginalHistogram(bin_edges=edges, masses=masses)


def weighted_mean_and_variance(values: np.ndarray, weights: np.ndarray):
    w = weights / weights.sum()
    mean = float((w * values).sum())
    var = float((w * (values - mean) ** 2).sum())
    return mean, var


# --- Posterior dump -------------------------------------------------------

def write_posterior_dump(
    posterior: WeightedPosterior, sites: Iterable[str], path, metadata: Mapping | None = None
) -> None:
    """Weighted samples of the named latent sites, one line per trace,
    in the same KEY=VALUE line format as the CDM export.

    Traces missing a site (rejected proposals) are skipped; weights are
    written as log weights relative to the normalizer.
    """
    sites = list(sites)
    lines = [header_line(POSTERIOR_KIND)]
    if metadata:
        for key, value in metadata.items():
            lines.append(f"#META {key}={value}")
    lines.append("#SITES " + ",".join(sites))
    for trace, log_w in posterior.samples:
        if log_w == NEG_INF:
            continue
        tokens = [f"LOG_WEIGHT={format_float(log_w - posterior.log_normalizer)}"]
        try:
            for site in sites:
                tokens.append(f"{_site_key(site)}={format_float(trace.value_at(site))}")
        except SiteNotFoundError:
            continue
        lines.append(" ".join(tokens))
    Path(path).write_text("\n".join(lines) + "\n")


def read_posterior_dump(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Returns (site names, value matrix [n, n_sites], log weights)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise LineFormatError("empty file", 1)
    check_header(lines[0], POSTERIOR_KIND)
    sites: list[str] | None = None
    rows, log_weights = [], []
    for n, line in enumerate(lines[1:], start=2):
        if line.startswith("#SITES "):
            sites = line[len("#SITES "):].split(",")
            continue
        if line.startswith("#") or not line.strip():
            continue
        if sites is None:
            raise LineFormatError("data before #SITES line", n)
        fields = dict(token.split("=", 1) for token in line.split())
        try:
            log_weights.append(float(fields["LOG_WEIGHT"]))
            rows.append([float(fields[_site_key(site)]) for site in sites])
        except (KeyError, ValueError):
            raise LineFormatError("malformed posterior sample line", n) from None
    if sites is None or not rows:
        raise LineFormatError("no posterior samples in file", 1)
    return sites, np.asarray(rows), np.asarray(log_weights)


def _site_key(site: str) -> str:
    return site.upper().replace("/", "_")
