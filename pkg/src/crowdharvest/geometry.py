"""Spatial deployments of RF transmitters and nearest-distance statistics.

Transmitter positions are sampled on a rectangular region either as a
homogeneous Poisson point process or as a Thomas cluster process
(Poisson parents, Poisson-many Gaussian-displaced offspring). Distances
are measured either on the torus (default, keeps the statistics
stationary right up to the border) or as plain Euclidean distances with
an optional guard margin for probe placement.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import digamma, gammainc, gammaln, polygamma

from .errors import (
    FitFailureError,
    InsufficientPointsError,
    InvalidParameterError,
)
from .rng import substream

__all__ = [
    "Region",
    "PoissonProcess",
    "ClusteredProcess",
    "Deployment",
    "DistanceFit",
    "sample_ppp",
    "sample_clustered",
    "sample_process",
    "nth_nearest_distance_pdf",
    "nth_nearest_distance_cdf",
    "rayleigh_scale_for_density",
    "distances_to_probe",
    "nearest_distances",
    "nearest_distance_batch",
    "fit_nearest_distance",
    "ks_statistic",
    "deployment_to_csv",
    "deployment_from_csv",
    "deployment_to_json",
    "deployment_from_json",
]

M2_PER_KM2 = 1e6


@dataclass(frozen=True)
class Region:
    """Rectangular study area, e.g. the 60 km^2 central-London window."""

    width_m: float
    height_m: float
    boundary: str = "toroidal"  # "toroidal" or "guard"
    guard_margin_m: float = 0.0

    def __post_init__(self) -> None:
        if not (self.width_m > 0 and self.height_m > 0):
            raise InvalidParameterError("region dimensions must be positive")
        if self.boundary not in ("toroidal", "guard"):
            raise InvalidParameterError(f"unknown boundary mode {self.boundary!r}")
        if self.boundary == "guard":
            if not 0 <= self.guard_margin_m < min(self.width_m, self.height_m) / 2:
                raise InvalidParameterError(
                    "guard margin must lie in [0, min(width, height)/2)"
                )

    @property
    def area_m2(self) -> float:
        return self.width_m * self.height_m

    @property
    def area_km2(self) -> float:
        return self.area_m2 / M2_PER_KM2

    def probe_bounds(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) where probes may be placed."""
        if self.boundary == "guard":
            m = self.guard_margin_m
            return m, self.width_m - m, m, self.height_m - m
        return 0.0, self.width_m, 0.0, self.height_m

    def sample_probe(self, rng: np.random.Generator) -> tuple[float, float]:
        x0, x1, y0, y1 = self.probe_bounds()
        return float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return (xs >= 0) & (xs <= self.width_m) & (ys >= 0) & (ys <= self.height_m)


@dataclass(frozen=True)
class PoissonProcess:
    """Homogeneous PPP; density is supplied at sampling time."""

    kind: str = field(default="ppp", init=False)


@dataclass(frozen=True)
class ClusteredProcess:
    """Thomas cluster process: PPP parents, Gaussian-scattered offspring."""

    parent_density_per_km2: float
    mean_offspring: float
    spread_m: float
    kind: str = field(default="clustered", init=False)

    def __post_init__(self) -> None:
        if self.parent_density_per_km2 <= 0:
            raise InvalidParameterError("parent density must be positive")
        if self.mean_offspring <= 0:
            raise InvalidParameterError("mean offspring must be positive")
        if self.spread_m <= 0:
            raise InvalidParameterError("offspring spread must be positive")

    @property
    def density_per_km2(self) -> float:
        return self.parent_density_per_km2 * self.mean_offspring


SpatialProcess = PoissonProcess | ClusteredProcess


@dataclass(frozen=True)
class Deployment:
    """A realisation of transmitter positions inside a region."""

    xs: np.ndarray
    ys: np.ndarray
    density_per_km2: float
    region: Region
    process: SpatialProcess
    seed: int | None = None

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise InvalidParameterError("xs and ys must be 1-D arrays of equal length")
        if self.density_per_km2 < 0:
            raise InvalidParameterError("density must be non-negative")
        if xs.size and not np.all(self.region.contains(xs, ys)):
            raise InvalidParameterError("deployment points must lie inside the region")
        xs.flags.writeable = False
        ys.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def count(self) -> int:
        return int(self.xs.size)


def sample_ppp(density_per_km2: float, region: Region, seed: int) -> Deployment:
    """Sample a homogeneous PPP with the given density (nodes per km^2)."""
    if density_per_km2 < 0:
        raise InvalidParameterError("density must be non-negative")
    rng = substream(seed, "ppp")
    mean_count = density_per_km2 * region.area_km2
    n = int(rng.poisson(mean_count))
    xs = rng.uniform(0.0, region.width_m, n)
    ys = rng.uniform(0.0, region.height_m, n)
    return Deployment(xs, ys, density_per_km2, region, PoissonProcess(), seed)


def sample_clustered(spec: ClusteredProcess, region: Region, seed: int) -> Deployment:
    """Sample a Thomas cluster process.

    Under toroidal boundaries the offspring wrap around, which keeps the
    process stationary on the torus. Under a guard boundary the parents
    are drawn on an enlarged window (4 spreads of margin) and offspring
    falling outside the region are dropped, so interior statistics are
    unbiased by the border.
    """
    rng = substream(seed, "clustered")
    if region.boundary == "toroidal":
        pad = 0.0
    else:
        pad = 4.0 * spec.spread_m
    w = region.width_m + 2 * pad
    h = region.height_m + 2 * pad
    lam_parent = spec.parent_density_per_km2 / M2_PER_KM2
    n_parents = int(rng.poisson(lam_parent * w * h))
    pxs = rng.uniform(-pad, region.width_m + pad, n_parents)
    pys = rng.uniform(-pad, region.height_m + pad, n_parents)
    n_children = rng.poisson(spec.mean_offspring, n_parents)
    total = int(n_children.sum())
    xs = np.repeat(pxs, n_children) + rng.normal(0.0, spec.spread_m, total)
    ys = np.repeat(pys, n_children) + rng.normal(0.0, spec.spread_m, total)
    if region.boundary == "toroidal":
        xs = np.mod(xs, region.width_m)
        ys = np.mod(ys, region.height_m)
    else:
        keep = region.contains(xs, ys)
        xs, ys = xs[keep], ys[keep]
    return Deployment(xs, ys, spec.density_per_km2, region, spec, seed)


def sample_process(
    process: SpatialProcess, density_per_km2: float, region: Region, seed: int
) -> Deployment:
    """Sample whichever process is configured, rescaled to a target density.

    Clustered processes are rescaled through the parent density so the
    per-cluster structure (mean offspring, spread) is preserved.
    """
    if isinstance(process, PoissonProcess):
        return sample_ppp(density_per_km2, region, seed)
    scale = density_per_km2 / process.density_per_km2
    spec = ClusteredProcess(
        parent_density_per_km2=process.parent_density_per_km2 * scale,
        mean_offspring=process.mean_offspring,
        spread_m=process.spread_m,
    )
    return sample_clustered(spec, region, seed)


def rayleigh_scale_for_density(density_per_m2: float) -> float:
    """Scale of the Rayleigh nearest-distance law for a PPP of this density."""
    if density_per_m2 <= 0:
        raise InvalidParameterError("density must be positive")
    return 1.0 / math.sqrt(2.0 * math.pi * density_per_m2)


def nth_nearest_distance_pdf(
    r: float | np.ndarray, n: int, density_per_m2: float
) -> float | np.ndarray:
    """Density of the distance to the n-th nearest point of a planar PPP.

    f(r) = 2 (pi L)^n r^(2n-1) exp(-pi L r^2) / (n-1)!  for r >= 0,
    which is the generalised-Gamma law whose n=1 case is Rayleigh with
    scale 1/sqrt(2 pi L).
    """
    if n < 1 or int(n) != n:
        raise InvalidParameterError("neighbour order n must be a positive integer")
    if density_per_m2 <= 0:
        raise InvalidParameterError("density must be positive")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidParameterError("distances must be non-negative")
    lam_pi = math.pi * density_per_m2
    with np.errstate(divide="ignore"):
        log_r = np.where(r_arr > 0, np.log(r_arr), -np.inf)
    log_f = (
        math.log(2.0)
        + n * math.log(lam_pi)
        + (2 * n - 1) * log_r
        - lam_pi * r_arr**2
        - gammaln(n)
    )
    out = np.where(r_arr > 0, np.exp(log_f), 0.0)
    # r = 0 has density 0 except for the n=1 slope limit, which is still 0.
    if out.ndim == 0:
        return float(out)
    return out


def nth_nearest_distance_cdf(
    r: float | np.ndarray, n: int, density_per_m2: float
) -> float | np.ndarray:
    """CDF companion of :func:`nth_nearest_distance_pdf` (regularised Gamma)."""
    if n < 1 or int(n) != n:
        raise InvalidParameterError("neighbour order n must be a positive integer")
    if density_per_m2 <= 0:
        raise InvalidParameterError("density must be positive")
    r_arr = np.asarray(r, dtype=float)
    out = gammainc(n, math.pi * density_per_m2 * np.square(r_arr))
    if out.ndim == 0:
        return float(out)
    return out


def distances_to_probe(
    region: Region, probe: tuple[float, float], xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """Distances from a probe point to all positions, honouring the boundary."""
    dx = np.abs(xs - probe[0])
    dy = np.abs(ys - probe[1])
    if region.boundary == "toroidal":
        dx = np.minimum(dx, region.width_m - dx)
        dy = np.minimum(dy, region.height_m - dy)
    return np.hypot(dx, dy)


def nearest_distances(
    deployment: Deployment, probe: tuple[float, float], count: int
) -> np.ndarray:
    """Ascending distances from the probe to the ``count`` nearest transmitters."""
    if count < 1:
        raise InvalidParameterError("count must be at least 1")
    if count > deployment.count:
        raise InsufficientPointsError(
            f"requested {count} nearest transmitters, deployment has {deployment.count}"
        )
    d = distances_to_probe(deployment.region, probe, deployment.xs, deployment.ys)
    if count < d.size:
        d = np.partition(d, count - 1)[:count]
    return np.sort(d)


def nearest_distance_batch(
    density_per_km2: float,
    region: Region,
    trials: int,
    seed: int,
    order: int = 1,
) -> np.ndarray:
    """Distance to the order-th nearest transmitter over many fresh deployments.

    Each trial draws an independent PPP realisation and probes the region
    centre (the process is stationary on the torus, so a fixed probe is a
    uniform probe). Trials with fewer than ``order`` points are returned
    as ``inf`` so callers can drop or count them. Fully vectorised, single
    stream, bit-reproducible for a fixed seed.
    """
    if density_per_km2 <= 0:
        raise InvalidParameterError("density must be positive")
    if order < 1:
        raise InvalidParameterError("neighbour order must be at least 1")
    rng = substream(seed, "nearest-batch")
    lam = density_per_km2 * region.area_km2
    counts = rng.poisson(lam, trials)
    total = int(counts.sum())
    xs = rng.uniform(0.0, region.width_m, total)
    ys = rng.uniform(0.0, region.height_m, total)
    probe = (region.width_m / 2.0, region.height_m / 2.0)
    d = distances_to_probe(region, probe, xs, ys)

    starts = np.zeros(trials, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    out = np.full(trials, np.inf)
    nonempty = counts >= order
    if total == 0 or not np.any(nonempty):
        return out
    if order == 1:
        mins = np.minimum.reduceat(d, np.minimum(starts, total - 1))
        out[nonempty] = mins[nonempty]
        return out
    # Sort once with a per-trial offset so each trial's block stays contiguous.
    seg = np.repeat(np.arange(trials), counts)
    shift = (d.max() + 1.0) if total else 1.0
    d_sorted = np.sort(d + seg * shift)
    idx = starts[nonempty] + order - 1
    out[nonempty] = d_sorted[idx] - np.flatnonzero(nonempty) * shift
    return out


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a cdf callable."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise InvalidParameterError("KS statistic needs at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    grid = np.arange(1, n + 1) / n
    d_plus = np.max(grid - f)
    d_minus = np.max(f - (grid - 1.0 / n))
    return float(max(d_plus, d_minus, 0.0))


@dataclass(frozen=True)
class DistanceFit:
    """Maximum-likelihood fit of a nearest-distance sample."""

    family: str  # "rayleigh" or "gamma"
    scale: float
    shape: float | None
    ks_statistic: float

    def cdf(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.family == "rayleigh":
            return 1.0 - np.exp(-np.square(r) / (2.0 * self.scale**2))
        return gammainc(self.shape, np.maximum(r, 0.0) / self.scale)

    def pdf(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.family == "rayleigh":
            return (r / self.scale**2) * np.exp(-np.square(r) / (2.0 * self.scale**2))
        k, th = self.shape, self.scale
        with np.errstate(divide="ignore"):
            log_r = np.where(r > 0, np.log(r), -np.inf)
        log_f = (k - 1) * log_r - r / th - gammaln(k) - k * math.log(th)
        return np.where(r > 0, np.exp(log_f), 0.0)


def _fit_gamma_shape(mean: float, mean_log: float, init: float) -> float:
    """Newton iteration on ln(k) - psi(k) = ln(mean) - mean(ln x)."""
    target = math.log(mean) - mean_log
    if target <= 0:
        raise FitFailureError("gamma fit failed: non-positive log-moment gap")
    k = max(init, 1e-6)
    for _ in range(200):
        g = math.log(k) - digamma(k) - target
        if abs(g) < 1e-9:  # tolerance on the profile log-likelihood gradient
            return k
        dg = 1.0 / k - polygamma(1, k)
        step = g / dg
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        k = k_new
    raise FitFailureError("gamma fit failed: shape iteration did not converge")


def fit_nearest_distance(samples: np.ndarray, family: str) -> DistanceFit:
    """Fit a Rayleigh or Gamma law by maximum likelihood and score it with KS.

    The KS statistic is computed against the fitted cdf; no p-value is
    reported because fitted-parameter KS p-values are biased.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 100:
        raise FitFailureError(f"need at least 100 samples, got {x.size}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise FitFailureError("samples must be finite and non-negative")
    if np.var(x) == 0:
        raise FitFailureError("degenerate sample: zero variance")
    if family == "rayleigh":
        scale = math.sqrt(float(np.mean(np.square(x))) / 2.0)
        if scale <= 0:
            raise FitFailureError("rayleigh fit failed: zero scale")
        fit = DistanceFit("rayleigh", scale, None, 0.0)
    elif family == "gamma":
        if np.any(x <= 0):
            raise FitFailureError("gamma fit requires strictly positive samples")
        mean = float(np.mean(x))
        var = float(np.var(x))
        k0 = mean * mean / var  # method-of-moments start
        k = _fit_gamma_shape(mean, float(np.mean(np.log(x))), k0)
        fit = DistanceFit("gamma", mean / k, k, 0.0)
    else:
        raise InvalidParameterError(f"unknown fit family {family!r}")
    ks = ks_statistic(x, fit.cdf)
    return DistanceFit(fit.family, fit.scale, fit.shape, ks)


# ---------------------------------------------------------------------------
# Serialisation: point CSV (x_m,y_m) and a JSON document for full deployments.

CSV_HEADER = ["x_m", "y_m"]


def deployment_to_csv(deployment: Deployment) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for x, y in zip(deployment.xs, deployment.ys):
        writer.writerow([f"{x:.6f}", f"{y:.6f}"])
    return buf.getvalue()


def deployment_from_csv(
    text: str, region: Region, density_per_km2: float | None = None
) -> Deployment:
    """Parse an ``x_m,y_m`` document into a deployment on the given region."""
    from .errors import IngestionError

    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
        raise IngestionError("expected header 'x_m,y_m'")
    xs, ys, bad = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            x, y = float(row[0]), float(row[1])
        except (ValueError, IndexError):
            bad.append((lineno, ",".join(row)))
            continue
        xs.append(x)
        ys.append(y)
    if bad:
        raise IngestionError(
            f"{len(bad)} malformed rows (first at line {bad[0][0]})", bad_rows=bad
        )
    xs_arr = np.asarray(xs, dtype=float)
    ys_arr = np.asarray(ys, dtype=float)
    if density_per_km2 is None:
        density_per_km2 = xs_arr.size / region.area_km2
    return Deployment(xs_arr, ys_arr, density_per_km2, region, PoissonProcess())


def _process_to_dict(process: SpatialProcess) -> dict:
    if isinstance(process, PoissonProcess):
        return {"kind": "ppp"}
    return {
        "kind": "clustered",
        "parent_density_per_km2": process.parent_density_per_km2,
        "mean_offspring": process.mean_offspring,
        "spread_m": process.spread_m,
    }


def _process_from_dict(d: dict) -> SpatialProcess:
    if d.get("kind") == "ppp":
        return PoissonProcess()
    if d.get("kind") == "clustered":
        return ClusteredProcess(
            parent_density_per_km2=float(d["parent_density_per_km2"]),
            mean_offspring=float(d["mean_offspring"]),
            spread_m=float(d["spread_m"]),
        )
    raise InvalidParameterError(f"unknown spatial process kind {d.get('kind')!r}")


def deployment_to_json(deployment: Deployment) -> str:
    doc = {
        "region": {
            "width_m": deployment.region.width_m,
            "height_m": deployment.region.height_m,
            "boundary": deployment.region.boundary,
            "guard_margin_m": deployment.region.guard_margin_m,
        },
        "process": _process_to_dict(deployment.process),
        "density_per_km2": deployment.density_per_km2,
        "seed": deployment.seed,
        "points": [[float(x), float(y)] for x, y in zip(deployment.xs, deployment.ys)],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def deployment_from_json(text: str) -> Deployment:
    doc = json.loads(text)
    region = Region(
        width_m=float(doc["region"]["width_m"]),
        height_m=float(doc["region"]["height_m"]),
        boundary=doc["region"].get("boundary", "toroidal"),
        guard_margin_m=float(doc["region"].get("guard_margin_m", 0.0)),
    )
    pts = np.asarray(doc["points"], dtype=float).reshape(-1, 2)
    return Deployment(
        pts[:, 0].copy(),
        pts[:, 1].copy(),
        float(doc["density_per_km2"]),
        region,
        _process_from_dict(doc["process"]),
        doc.get("seed"),
    )


def save_deployment(deployment: Deployment, path: str | Path) -> None:
    Path(path).write_text(deployment_to_json(deployment))


def load_deployment(path: str | Path) -> Deployment:
    return deployment_from_json(Path(path).read_text())
