"""Scalar distribution kinds used for population priors, observation
models and likelihood terms.

Every kind supports ``sample(rng)`` and ``log_density(x)``; log density
is -inf outside the support. Instances are immutable and serializable
to/from plain dicts for the declarative config files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
NEG_INF = float("-inf")


@dataclass(frozen=True)
class Normal:
    mean: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")

    def sample(self, rng: np.random.Generator) -> float:
        return self.mean + self.sigma * rng.standard_normal()

    def log_density(self, x: float) -> float:
        z = (x - self.mean) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI


@dataclass(frozen=True)
class TruncatedNormal:
    mean: float
    sigma: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if not self.lo < self.hi:
            raise ValueError("truncation bounds must satisfy lo < hi")

    def _cdf_bounds(self) -> tuple[float, float]:
        a = ndtr((self.lo - self.mean) / self.sigma)
        b = ndtr((self.hi - self.mean) / self.sigma)
        return float(a), float(b)

    def sample(self, rng: np.random.Generator) -> float:
        a, b = self._cdf_bounds()
        u = rng.uniform(a, b)
        x = self.mean + self.sigma * float(ndtri(u))
        return min(max(x, self.lo), self.hi)

    def log_density(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return NEG_INF
        a, b = self._cdf_bounds()
        z = (x - self.mean) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI - math.log(b - a)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("bounds must satisfy lo < hi")

    def sample(self, rng: np.random.Generator) -> float:
        return rng.uniform(self.lo, self.hi)

    def log_density(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return NEG_INF
        return -math.log(self.hi - self.lo)


@dataclass(frozen=True)
class LogUniform:
    """Density proportional to 1/x on [lo, hi]; requires lo > 0."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi:
            raise ValueError("bounds must satisfy 0 < lo < hi")

    def sample(self, rng: np.random.Generator) -> float:
        return math.exp(rng.uniform(math.log(self.lo), math.log(self.hi)))

    def log_density(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return NEG_INF
        return -math.log(x) - math.log(math.log(self.hi / self.lo))


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    def sample(self, rng: np.random.Generator) -> float:
        return 1.0 if rng.uniform() < self.p else 0.0

    def log_density(self, x: float) -> float:
        if x == 1.0:
            return math.log(self.p) if self.p > 0.0 else NEG_INF
        if x == 0.0:
            return math.log(1.0 - self.p) if self.p < 1.0 else NEG_INF
        return NEG_INF


@dataclass(frozen=True)
class Histogram:
    """Piecewise-constant density from bin edges and bin masses."""

    bin_edges: tuple[float, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(v) for v in self.bin_edges)
        masses = tuple(float(v) for v in self.masses)
        if len(edges) != len(masses) + 1:
            raise ValueError("need len(bin_edges) == len(masses) + 1")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly increasing")
        if any(m < 0.0 for m in masses):
            raise ValueError("bin masses must be nonnegative")
        total = sum(masses)
        if not total > 0.0:
            raise ValueError("bin masses must have positive total")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "masses", tuple(m / total for m in masses))

    def sample(self, rng: np.random.Generator) -> float:
        idx = int(rng.choice(len(self.masses), p=self.masses))
        return rng.uniform(self.bin_edges[idx], self.bin_edges[idx + 1])

    def log_density(self, x: float) -> float:
        edges = self.bin_edges
        if x < edges[0] or x > edges[-1]:
            return NEG_INF
        idx = min(int(np.searchsorted(edges, x, side="right")) - 1, len(self.masses) - 1)
        idx = max(idx, 0)
        mass = self.masses[idx]
        if mass <= 0.0:
            return NEG_INF
        return math.log(mass) - math.log(edges[idx + 1] - edges[idx])


@dataclass(frozen=True)
class MixtureOfTruncatedNormals:
    """Weighted mixture of TruncatedNormal components."""

    weights: tuple[float, ...]
    components: tuple[TruncatedNormal, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.components) or not self.components:
            raise ValueError("need one weight per component and at least one component")
        if any(w < 0.0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        total = sum(self.weights)
        if not total > 0.0:
            raise ValueError("weights must have positive total")
        object.__setattr__(self, "weights", tuple(w / total for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))

    def sample(self, rng: np.random.Generator) -> float:
        idx = int(rng.choice(len(self.components), p=self.weights))
        return self.components[idx].sample(rng)

    def log_density(self, x: float) -> float:
        terms = [
            math.log(w) + c.log_density(x)
            for w, c in zip(self.weights, self.components)
            if w > 0.0
        ]
        finite = [t for t in terms if t > NEG_INF]
        if not finite:
            return NEG_INF
        peak = max(finite)
        return peak + math.log(sum(math.exp(t - peak) for t in finite))


Distribution = (
    Normal
    | TruncatedNormal
    | Uniform
    | LogUniform
    | Bernoulli
    | Histogram
    | MixtureOfTruncatedNormals
)

_KIND_NAMES = {
    Normal: "normal",
    TruncatedNormal: "truncated_normal",
    Uniform: "uniform",
    LogUniform: "log_uniform",
    Bernoulli: "bernoulli",
    Histogram: "histogram",
    MixtureOfTruncatedNormals: "mixture_truncated_normals",
}


class DistributionConfigError(ValueError):
    """A distribution dict in a config file is malformed."""


def distribution_to_dict(dist: Distribution) -> dict:
    kind = _KIND_NAMES[type(dist)]
    if isinstance(dist, Normal):
        return {"kind": kind, "mean": dist.mean, "sigma": dist.sigma}
    if isinstance(dist, TruncatedNormal):
        return {"kind": kind, "mean": dist.mean, "sigma": dist.sigma,
                "lo": dist.lo, "hi": dist.hi}
    if isinstance(dist, (Uniform, LogUniform)):
        return {"kind": kind, "lo": dist.lo, "hi": dist.hi}
    if isinstance(dist, Bernoulli):
        return {"kind": kind, "p": dist.p}
    if isinstance(dist, Histogram):
        return {"kind": kind, "bin_edges": list(dist.bin_edges),
                "masses": list(dist.masses)}
    return {
        "kind": kind,
        "components": [
            {"weight": w, "mean": c.mean, "sigma": c.sigma, "lo": c.lo, "hi": c.hi}
            for w, c in zip(dist.weights, dist.components)
        ],
    }


def _take(spec: dict, keys: tuple[str, ...], where: str) -> list:
    missing = [k for k in keys if k not in spec]
    extra = [k for k in spec if k != "kind" and k not in keys]
    if missing:
        raise DistributionConfigError(f"{where}: missing keys {missing}")
    if extra:
        raise DistributionConfigError(f"{where}: unknown keys {extra}")
    return [spec[k] for k in keys]


def distribution_from_dict(spec: dict, where: str = "distribution") -> Distribution:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DistributionConfigError(f"{where}: expected a mapping with a 'kind' key")
    kind = spec["kind"]
    try:
        if kind == "normal":
            mean, sigma = _take(spec, ("mean", "sigma"), where)
            return Normal(float(mean), float(sigma))
        if kind == "truncated_normal":
            mean, sigma, lo, hi = _take(spec, ("mean", "sigma", "lo", "hi"), where)
            return TruncatedNormal(float(mean), float(sigma), float(lo), float(hi))
        if kind == "uniform":
            lo, hi = _take(spec, ("lo", "hi"), where)
            return Uniform(float(lo), float(hi))
        if kind == "log_uniform":
            lo, hi = _take(spec, ("lo", "hi"), where)
            return LogUniform(float(lo), float(hi))
        if kind == "bernoulli":
            (p,) = _take(spec, ("p",), where)
            return Bernoulli(float(p))
        if kind == "histogram":
            edges, masses = _take(spec, ("bin_edges", "masses"), where)
            return Histogram(tuple(float(v) for v in edges),
                             tuple(float(v) for v in masses))
        if kind == "mixture_truncated_normals":
            (components,) = _take(spec, ("components",), where)
            weights, comps = [], []
            for i, comp in enumerate(components):
                w, mean, sigma, lo, hi = _take(
                    dict(comp), ("weight", "mean", "sigma", "lo", "hi"),
                    f"{where}.components[{i}]",
                )
                weights.append(float(w))
                comps.append(TruncatedNormal(float(mean), float(sigma),
                                             float(lo), float(hi)))
            return MixtureOfTruncatedNormals(tuple(weights), tuple(comps))
    except DistributionConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise DistributionConfigError(f"{where}: {exc}") from exc
    raise DistributionConfigError(f"{where}: unknown distribution kind {kind!r}")
