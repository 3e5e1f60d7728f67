"""Scenario configuration, case-study orchestration, and report emission.

A scenario document (YAML, comment-friendly) pins everything a run
needs: the study region, the radio-technology profiles, both pathloss
scenarios, link and scheduling defaults, seeds, and trial counts. Every
run is reproducible from (config, seed) alone; reports embed the config
hash and the seed, and the deterministic artifacts never contain wall
clocks, so a rerun is byte-identical.

The bundled default models a 60 km^2 central-London-like area with four
technologies: cellular macro downlink (20 MHz, 40 W, up to 5/km^2),
home femto downlink (20 MHz, 1 W, up to 200/km^2, clustered), Wi-Fi
(60 MHz, 100 mW, up to 1000/km^2), and TV broadcast (100 MHz, 1 MW,
sparse real sites). Peak-power table rows are evaluated at each
technology's representative deployment density: the range top for the
crowd technologies, the real-site density for TV (about one high-power
site per study area; evaluating TV at the top of its generic density
range would model a dozen megawatt towers inside the window and lands
milliwatts, far above any published field value).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, FitFailureError, InvalidParameterError
from .geometry import (
    ClusteredProcess,
    Deployment,
    PoissonProcess,
    Region,
    SpatialProcess,
    deployment_from_csv,
)
from .harvest import (
    RatProfile,
    SweepCurve,
    nearest_share_study,
    scaling_exponent,
    sweep_to_csv,
    upper_bound_sweep,
)
from .propagation import (
    PathlossModel,
    ShadowingSpec,
    free_space_model,
    winner_extrapolated,
    winner_urban_nlos_model,
)
from .swipt import LinkState, RelayMode

__all__ = [
    "PathlossScenarioConfig",
    "RatConfig",
    "SwiptDefaults",
    "SchedulingDefaults",
    "CollabDefaults",
    "CaseStudyDefaults",
    "ScenarioConfig",
    "default_config",
    "load_config",
    "save_config",
    "config_hash",
    "ingest_locations_csv",
    "CaseStudyReport",
    "run_case_study",
    "emit_report",
    "build_pathloss_model",
    "build_rat_profile",
]


# ---------------------------------------------------------------------------
# Configuration dataclasses.


@dataclass(frozen=True)
class PathlossScenarioConfig:
    """One propagation scenario: exponent, anchoring, and shadowing."""

    exponent: float
    anchor: str = "friis"  # "friis" or "winner"
    intercept_db: float = 25.0
    frequency_coeff_db: float = 20.0
    shadowing_sigma_db: float = 0.0
    reference_distance_m: float = 1.0

    def __post_init__(self) -> None:
        if self.anchor not in ("friis", "winner"):
            raise ConfigError(f"unknown pathloss anchor {self.anchor!r}")


@dataclass(frozen=True)
class RatConfig:
    name: str
    bandwidth_hz: float
    transmit_power_w: float
    density_range_per_km2: tuple[float, float]
    carrier_frequency_hz: float
    spatial_process: SpatialProcess
    min_link_distance_m: float = 1.0
    table_density_per_km2: float | None = None  # defaults to the range top


@dataclass(frozen=True)
class SwiptDefaults:
    frame_duration_s: float = 1.0
    source_relay_gain: float = 1e-3
    relay_destination_gain: float = 1e-3
    source_power_w: float = 1.0
    noise_power_w: float = 1e-9
    ambient_power_at_relay_w: float = 0.0
    ambient_power_at_source_w: float = 0.0
    efficiency: float = 0.5
    relay_mode: str = "df"

    def link(self) -> LinkState:
        return LinkState(
            source_relay_gain=self.source_relay_gain,
            relay_destination_gain=self.relay_destination_gain,
            noise_power_w=self.noise_power_w,
            source_power_w=self.source_power_w,
            ambient_power_at_relay_w=self.ambient_power_at_relay_w,
            ambient_power_at_source_w=self.ambient_power_at_source_w,
        )

    def mode(self) -> RelayMode:
        return RelayMode.AMPLIFY_FORWARD if self.relay_mode == "af" else RelayMode.DECODE_FORWARD


@dataclass(frozen=True)
class SchedulingDefaults:
    slot_count: int = 4  # the exact solver enumerates states; keep it small
    slot_duration_s: float = 1.0
    power_levels: int = 8
    battery_buckets: int = 16
    noise_power_w: float = 1e-9
    source_gain: float = 1e-3
    relay_gain: float = 1e-3
    source_capacity_j: float | None = None  # None = unbounded
    relay_capacity_j: float | None = None
    rx_energy_cost_j: float = 0.0


@dataclass(frozen=True)
class CollabDefaults:
    xi: float = 0.5
    deadline_slots: int = 4
    horizon_slots: int = 48
    decode_snr_threshold: float = 8.0
    noise_power_w: float = 1.0
    frame_duration_s: float = 1.0
    node_capacity_j: float = 10.0
    node_gain: float = 1.0
    arrival_prob: float = 0.3
    arrival_energy_j: float = 2.0
    node_distance_m: float = 120.0


@dataclass(frozen=True)
class CaseStudyDefaults:
    grid_points: int = 5
    trials: int = 600
    scaling_trials: int = 600
    scaling_k_nearest: int = 20
    nearest_share_draws: int = 4000
    nearest_share_rat: str = "macro"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    region: Region
    rats: tuple[RatConfig, ...]
    los: PathlossScenarioConfig
    nlos: PathlossScenarioConfig
    swipt: SwiptDefaults
    scheduling: SchedulingDefaults
    collab: CollabDefaults
    case_study: CaseStudyDefaults

    def rat(self, name: str) -> RatConfig:
        for rat in self.rats:
            if rat.name == name:
                return rat
        raise ConfigError(f"unknown RAT {name!r}; have {[r.name for r in self.rats]}")


def default_config(seed: int = 20260808) -> ScenarioConfig:
    side = math.sqrt(60e6)  # 60 km^2 study window
    return ScenarioConfig(
        seed=seed,
        region=Region(width_m=side, height_m=side),
        rats=(
            RatConfig(
                name="macro",
                bandwidth_hz=20e6,
                transmit_power_w=40.0,
                density_range_per_km2=(0.5, 5.0),
                carrier_frequency_hz=2.1e9,
                spatial_process=PoissonProcess(),
                min_link_distance_m=50.0,  # urban-NLoS validity floor (elevated masts)
            ),
            RatConfig(
                name="femto",
                bandwidth_hz=20e6,
                transmit_power_w=1.0,
                density_range_per_km2=(15.0, 200.0),
                carrier_frequency_hz=2.1e9,
                spatial_process=ClusteredProcess(
                    parent_density_per_km2=20.0, mean_offspring=10.0, spread_m=50.0
                ),
                min_link_distance_m=5.0,
            ),
            RatConfig(
                name="wifi",
                bandwidth_hz=60e6,
                transmit_power_w=0.1,
                density_range_per_km2=(50.0, 1000.0),
                carrier_frequency_hz=2.4e9,
                spatial_process=PoissonProcess(),
                min_link_distance_m=2.0,
            ),
            RatConfig(
                name="tv",
                bandwidth_hz=100e6,
                transmit_power_w=1e6,
                density_range_per_km2=(0.01, 0.2),
                carrier_frequency_hz=600e6,
                spatial_process=PoissonProcess(),
                min_link_distance_m=100.0,  # broadcast masts are ~100 m structures
                table_density_per_km2=1.0 / 60.0,  # one real site per study window
            ),
        ),
        los=PathlossScenarioConfig(exponent=2.0, anchor="friis", shadowing_sigma_db=0.0),
        nlos=PathlossScenarioConfig(
            exponent=4.3, anchor="winner", shadowing_sigma_db=8.0
        ),
        swipt=SwiptDefaults(),
        scheduling=SchedulingDefaults(),
        collab=CollabDefaults(),
        case_study=CaseStudyDefaults(),
    )


def build_pathloss_model(
    scenario: PathlossScenarioConfig, carrier_frequency_hz: float
) -> PathlossModel:
    if scenario.anchor == "friis":
        model = free_space_model(carrier_frequency_hz, scenario.reference_distance_m)
        if scenario.exponent != 2.0:
            model = PathlossModel(
                exponent=scenario.exponent,
                reference_distance_m=model.reference_distance_m,
                reference_loss_db=model.reference_loss_db,
                carrier_frequency_hz=carrier_frequency_hz,
            )
        return model
    return winner_urban_nlos_model(
        carrier_frequency_hz,
        slope_db_per_decade=10.0 * scenario.exponent,
        intercept_db=scenario.intercept_db,
        frequency_coeff_db=scenario.frequency_coeff_db,
        reference_distance_m=scenario.reference_distance_m,
    )


def build_rat_profile(rat: RatConfig) -> RatProfile:
    return RatProfile(
        name=rat.name,
        bandwidth_hz=rat.bandwidth_hz,
        transmit_power_w=rat.transmit_power_w,
        density_range_per_km2=rat.density_range_per_km2,
        spatial_process=rat.spatial_process,
        carrier_frequency_hz=rat.carrier_frequency_hz,
        min_link_distance_m=rat.min_link_distance_m,
    )


# ---------------------------------------------------------------------------
# YAML serialisation with strict validation.


_SENTINEL = object()


def _require_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) at {path}: {sorted(unknown)}")


def _get(d: dict, key: str, path: str, cast, default=_SENTINEL):
    if key not in d:
        if default is _SENTINEL:
            raise ConfigError(f"missing required key {path}.{key}")
        return default
    try:
        return cast(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value at {path}.{key}: {exc}") from exc


def _process_from_cfg(d: dict, path: str) -> SpatialProcess:
    kind = _get(d, "kind", path, str)
    if kind == "ppp":
        _require_keys(d, {"kind"}, path)
        return PoissonProcess()
    if kind == "clustered":
        _require_keys(
            d, {"kind", "parent_density_per_km2", "mean_offspring", "spread_m"}, path
        )
        try:
            return ClusteredProcess(
                parent_density_per_km2=_get(d, "parent_density_per_km2", path, float),
                mean_offspring=_get(d, "mean_offspring", path, float),
                spread_m=_get(d, "spread_m", path, float),
            )
        except InvalidParameterError as exc:
            raise ConfigError(f"invalid spatial process at {path}: {exc}") from exc
    raise ConfigError(f"unknown spatial process kind {kind!r} at {path}")


def _pathloss_from_cfg(d: dict, path: str) -> PathlossScenarioConfig:
    _require_keys(
        d,
        {
            "exponent",
            "anchor",
            "intercept_db",
            "frequency_coeff_db",
            "shadowing_sigma_db",
            "reference_distance_m",
        },
        path,
    )
    return PathlossScenarioConfig(
        exponent=_get(d, "exponent", path, float),
        anchor=_get(d, "anchor", path, str, "friis"),
        intercept_db=_get(d, "intercept_db", path, float, 25.0),
        frequency_coeff_db=_get(d, "frequency_coeff_db", path, float, 20.0),
        shadowing_sigma_db=_get(d, "shadowing_sigma_db", path, float, 0.0),
        reference_distance_m=_get(d, "reference_distance_m", path, float, 1.0),
    )


def _dataclass_from_cfg(cls, d: dict, path: str):
    import dataclasses

    names = {f.name for f in dataclasses.fields(cls)}
    _require_keys(d, names, path)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in d:
            value = d[f.name]
            if value is not None and f.type in ("float", "int", "float | None"):
                value = (int if f.type == "int" else float)(value)
            kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, InvalidParameterError) as exc:
        raise ConfigError(f"invalid section {path}: {exc}") from exc


def config_to_dict(config: ScenarioConfig) -> dict:
    doc = {
        "seed": config.seed,
        "region": {
            "width_m": config.region.width_m,
            "height_m": config.region.height_m,
            "boundary": config.region.boundary,
            "guard_margin_m": config.region.guard_margin_m,
        },
        "rats": [
            {
                "name": r.name,
                "bandwidth_hz": r.bandwidth_hz,
                "transmit_power_w": r.transmit_power_w,
                "density_range_per_km2": list(r.density_range_per_km2),
                "carrier_frequency_hz": r.carrier_frequency_hz,
                "min_link_distance_m": r.min_link_distance_m,
                "table_density_per_km2": r.table_density_per_km2,
                "spatial_process": (
                    {"kind": "ppp"}
                    if isinstance(r.spatial_process, PoissonProcess)
                    else {
                        "kind": "clustered",
                        "parent_density_per_km2": r.spatial_process.parent_density_per_km2,
                        "mean_offspring": r.spatial_process.mean_offspring,
                        "spread_m": r.spatial_process.spread_m,
                    }
                ),
            }
            for r in config.rats
        ],
        "pathloss": {"los": asdict(config.los), "nlos": asdict(config.nlos)},
        "swipt": asdict(config.swipt),
        "scheduling": asdict(config.scheduling),
        "collab": asdict(config.collab),
        "case_study": asdict(config.case_study),
    }
    return doc


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    _require_keys(
        doc,
        {"seed", "region", "rats", "pathloss", "swipt", "scheduling", "collab", "case_study"},
        "<root>",
    )
    if "seed" not in doc:
        raise ConfigError("missing required key seed (no implicit entropy)")
    region_d = doc.get("region", {})
    _require_keys(region_d, {"width_m", "height_m", "boundary", "guard_margin_m"}, "region")
    try:
        region = Region(
            width_m=_get(region_d, "width_m", "region", float),
            height_m=_get(region_d, "height_m", "region", float),
            boundary=_get(region_d, "boundary", "region", str, "toroidal"),
            guard_margin_m=_get(region_d, "guard_margin_m", "region", float, 0.0),
        )
    except InvalidParameterError as exc:
        raise ConfigError(f"invalid region: {exc}") from exc
    rats = []
    for i, rd in enumerate(doc.get("rats", [])):
        path = f"rats[{i}]"
        _require_keys(

            rd,
            {
                "name",
                "bandwidth_hz",
                "transmit_power_w",
                "density_range_per_km2",
                "carrier_frequency_hz",
                "min_link_distance_m",
                "table_density_per_km2",
                "spatial_process",
            },
            path,
        )
        rng_pair = rd.get("density_range_per_km2")
        if not isinstance(rng_pair, (list, tuple)) or len(rng_pair) != 2:
            raise ConfigError(f"{path}.density_range_per_km2 must be a [lo, hi] pair")
        table_density = rd.get("table_density_per_km2")
        rats.append(
            RatConfig(
                name=_get(rd, "name", path, str),
                bandwidth_hz=_get(rd, "bandwidth_hz", path, float),
                transmit_power_w=_get(rd, "transmit_power_w", path, float),
                density_range_per_km2=(float(rng_pair[0]), float(rng_pair[1])),
                carrier_frequency_hz=_get(rd, "carrier_frequency_hz", path, float),
                spatial_process=_process_from_cfg(
                    rd.get("spatial_process", {"kind": "ppp"}), f"{path}.spatial_process"
                ),
                min_link_distance_m=_get(rd, "min_link_distance_m", path, float, 1.0),
                table_density_per_km2=None if table_density is None else float(table_density),
            )
        )
    if not rats:
        raise ConfigError("at least one RAT profile is required")
    pathloss_d = doc.get("pathloss", {})
    _require_keys(pathloss_d, {"los", "nlos"}, "pathloss")
    config = ScenarioConfig(
        seed=int(doc["seed"]),
        region=region,
        rats=tuple(rats),
        los=_pathloss_from_cfg(pathloss_d.get("los", {}), "pathloss.los"),
        nlos=_pathloss_from_cfg(pathloss_d.get("nlos", {}), "pathloss.nlos"),
        swipt=_dataclass_from_cfg(SwiptDefaults, doc.get("swipt", {}), "swipt"),
        scheduling=_dataclass_from_cfg(
            SchedulingDefaults, doc.get("scheduling", {}), "scheduling"
        ),
        collab=_dataclass_from_cfg(CollabDefaults, doc.get("collab", {}), "collab"),
        case_study=_dataclass_from_cfg(
            CaseStudyDefaults, doc.get("case_study", {}), "case_study"
        ),
    )
    _validate_config(config)
    return config


def _validate_config(config: ScenarioConfig) -> None:
    try:
        for rat in config.rats:
            build_rat_profile(rat)
            if rat.table_density_per_km2 is not None and rat.table_density_per_km2 <= 0:
                raise ConfigError(f"rats[{rat.name}].table_density_per_km2 must be positive")
        config.swipt.link()
        if not 0 < config.swipt.efficiency <= 1:
            raise ConfigError("swipt.efficiency must lie in (0, 1]")
        if config.swipt.relay_mode not in ("af", "df"):
            raise ConfigError("swipt.relay_mode must be 'af' or 'df'")
        if not 0 <= config.collab.xi <= 1:
            raise ConfigError("collab.xi must lie in [0, 1]")
        if config.case_study.grid_points < 4:
            raise ConfigError("case_study.grid_points must be at least 4 for scaling fits")
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return config_from_dict(doc)


def save_config(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(config), sort_keys=False))


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Location ingestion.


def ingest_locations_csv(
    path: str | Path, region: Region, rat_name: str | None = None
) -> tuple[Deployment, list[str]]:
    """Load transmitter locations from an ``x_m,y_m`` file.

    Returns the deployment (density computed as count over area) plus a
    report of dropped out-of-region points. Malformed rows raise an
    :class:`IngestionError` listing the offending line numbers.
    """
    text = Path(path).read_text()
    deployment = deployment_from_csv(text, _RegionIgnoringBounds(region))
    inside = region.contains(deployment.xs, deployment.ys)
    report = []
    if not np.all(inside):
        dropped = np.flatnonzero(~inside)
        report = [
            f"dropped point {i} at ({deployment.xs[i]:.1f}, {deployment.ys[i]:.1f}): outside region"
            for i in dropped
        ]
    xs, ys = deployment.xs[inside], deployment.ys[inside]
    result = Deployment(
        xs.copy(), ys.copy(), xs.size / region.area_km2, region, PoissonProcess()
    )
    return result, report


class _RegionIgnoringBounds(Region):
    """Region stand-in whose containment test always passes (pre-filter)."""

    def __init__(self, base: Region):
        super().__init__(base.width_m, base.height_m, base.boundary, base.guard_margin_m)

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:  # noqa: D102
        return np.ones_like(np.asarray(xs), dtype=bool)


# ---------------------------------------------------------------------------
# Case study.


@dataclass(frozen=True)
class TableRow:
    rat: str
    table_density_per_km2: float
    peak_power_w: float  # LoS, median over trials at the table density
    peak_density_w_per_hz: float
    nlos_power_w: float
    nlos_density_w_per_hz: float
    winner_extrapolated: bool


@dataclass(frozen=True)
class CaseStudyReport:
    table: tuple[TableRow, ...]
    curves: tuple[SweepCurve, ...]
    exponents: dict[str, dict[str, float]]  # rat -> scenario -> fitted slope
    nearest_share: float
    nearest_mean_fraction: float
    config_hash: str
    seed: int
    runtime_s: float  # excluded from deterministic artifacts


def _density_grid(rat: RatConfig, points: int) -> np.ndarray:
    lo, hi = rat.density_range_per_km2
    return np.geomspace(lo, hi, points)


def run_case_study(config: ScenarioConfig, workers: int = 1) -> CaseStudyReport:
    """Sweep every RAT under both propagation scenarios and tabulate peaks.

    Per technology and scenario this runs a full-crowd sweep over the
    density range (curves, Table rows) and a fixed-transmitter-count
    sweep used for the density-scaling exponent fit. Table rows report
    the median received power at the technology's table density; the
    trial mean and standard deviation stay available in the sweep rows.
    """
    t0 = time.perf_counter()
    cs = config.case_study
    rows: list[TableRow] = []
    curves: list[SweepCurve] = []
    exponents: dict[str, dict[str, float]] = {}
    scenarios = (("los", config.los), ("nlos", config.nlos))
    for rat_cfg in config.rats:
        profile = build_rat_profile(rat_cfg)
        exponents[rat_cfg.name] = {}
        table_density = (
            rat_cfg.table_density_per_km2
            if rat_cfg.table_density_per_km2 is not None
            else rat_cfg.density_range_per_km2[1]
        )
        scenario_power: dict[str, float] = {}
        for scen_name, scen in scenarios:
            model = build_pathloss_model(scen, rat_cfg.carrier_frequency_hz)
            shadowing = ShadowingSpec(scen.shadowing_sigma_db, scen.shadowing_sigma_db > 0)
            grid = _density_grid(rat_cfg, cs.grid_points)
            curve = upper_bound_sweep(
                profile,
                grid,
                model,
                cs.trials,
                config.seed,
                region=config.region,
                shadowing=shadowing,
                scenario=scen_name,
                workers=workers,
            )
            curves.append(curve)
            scaling_curve = upper_bound_sweep(
                profile,
                grid,
                model,
                cs.scaling_trials,
                config.seed,
                region=config.region,
                shadowing=shadowing,
                k_nearest=cs.scaling_k_nearest,
                scenario=f"{scen_name}_k{cs.scaling_k_nearest}",
                workers=workers,
            )
            try:
                exponents[rat_cfg.name][scen_name] = scaling_exponent(scaling_curve)
            except FitFailureError:
                # densities so sparse that typical deployments are empty
                # (TV at the bottom of its range): slope not measurable
                exponents[rat_cfg.name][scen_name] = math.nan
            table_curve = upper_bound_sweep(
                profile,
                [table_density],
                model,
                cs.trials,
                config.seed,
                region=config.region,
                shadowing=shadowing,
                scenario=f"{scen_name}_table",
                workers=workers,
            )
            scenario_power[scen_name] = table_curve.points[0].median_power_w
        rows.append(
            TableRow(
                rat=rat_cfg.name,
                table_density_per_km2=float(table_density),
                peak_power_w=scenario_power["los"],
                peak_density_w_per_hz=scenario_power["los"] / rat_cfg.bandwidth_hz,
                nlos_power_w=scenario_power["nlos"],
                nlos_density_w_per_hz=scenario_power["nlos"] / rat_cfg.bandwidth_hz,
                winner_extrapolated=winner_extrapolated(
                    build_pathloss_model(config.nlos, rat_cfg.carrier_frequency_hz)
                ),
            )
        )
    share_rat = config.rat(cs.nearest_share_rat)
    share_profile = build_rat_profile(share_rat)
    nlos_model = build_pathloss_model(config.nlos, share_rat.carrier_frequency_hz)
    share, mean_fraction = nearest_share_study(
        share_profile,
        share_rat.density_range_per_km2[1],
        nlos_model,
        cs.nearest_share_draws,
        config.seed,
        region=config.region,
        shadowing=ShadowingSpec(config.nlos.shadowing_sigma_db, config.nlos.shadowing_sigma_db > 0),
    )
    return CaseStudyReport(
        table=tuple(rows),
        curves=tuple(curves),
        exponents=exponents,
        nearest_share=share,
        nearest_mean_fraction=mean_fraction,
        config_hash=config_hash(config),
        seed=config.seed,
        runtime_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Report emission. Deterministic artifacts only; the wall clock goes to a
# sidecar file so reruns stay byte-identical.

TABLE_CSV_HEADER = [
    "rat",
    "table_density_per_km2",
    "peak_power_w",
    "peak_power_density_w_per_hz",
    "nlos_power_w",
    "nlos_power_density_w_per_hz",
]


def _table_csv(report: CaseStudyReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_CSV_HEADER)
    for row in report.table:
        writer.writerow(
            [
                row.rat,
                f"{row.table_density_per_km2:.10g}",
                f"{row.peak_power_w:.10g}",
                f"{row.peak_density_w_per_hz:.10g}",
                f"{row.nlos_power_w:.10g}",
                f"{row.nlos_density_w_per_hz:.10g}",
            ]
        )
    return buf.getvalue()


def _sweeps_csv(report: CaseStudyReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "rat",
            "scenario",
            "lambda_per_km2",
            "mean_power_w",
            "mean_density_w_per_hz",
            "stddev_w",
            "median_power_w",
            "median_density_w_per_hz",
        ]
    )
    for curve in report.curves:
        for p in curve.points:
            writer.writerow(
                [
                    curve.rat_name,
                    curve.scenario,
                    f"{p.density_per_km2:.10g}",
                    f"{p.mean_power_w:.10g}",
                    f"{p.mean_density_w_per_hz:.10g}",
                    f"{p.std_power_w:.10g}",
                    f"{p.median_power_w:.10g}",
                    f"{p.median_density_w_per_hz:.10g}",
                ]
            )
    return buf.getvalue()


def _report_json(report: CaseStudyReport) -> str:
    exponents = {
        rat: {scen: (None if math.isnan(v) else v) for scen, v in d.items()}
        for rat, d in report.exponents.items()
    }
    doc = {
        "config_hash": report.config_hash,
        "seed": report.seed,
        "table": [
            {
                "rat": r.rat,
                "table_density_per_km2": r.table_density_per_km2,
                "peak_power_w": r.peak_power_w,
                "peak_power_density_w_per_hz": r.peak_density_w_per_hz,
                "nlos_power_w": r.nlos_power_w,
                "nlos_power_density_w_per_hz": r.nlos_density_w_per_hz,
                "winner_extrapolated": r.winner_extrapolated,
            }
            for r in report.table
        ],
        "scaling_exponents": exponents,
        "nearest_node_energy_share": report.nearest_share,
        "nearest_node_mean_fraction": report.nearest_mean_fraction,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_report(report: CaseStudyReport, out_dir: str | Path) -> list[Path]:
    """Write table1.csv, sweeps.csv, report.json, and a runtime sidecar.

    The first three files are byte-deterministic for a fixed report; the
    sidecar carries the wall clock and is excluded from reproducibility
    comparisons.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in (
        ("table1.csv", _table_csv(report)),
        ("sweeps.csv", _sweeps_csv(report)),
        ("report.json", _report_json(report)),
    ):
        p = out / name
        p.write_text(text)
        paths.append(p)
    (out / "runmeta.txt").write_text(
        f"runtime_s={report.runtime_s:.3f}\nconfig_hash={report.config_hash}\nseed={report.seed}\n"
    )
    return paths


def sweep_csv_for_curve(curve: SweepCurve) -> str:
    """Standalone sweep emission with the standard four-column schema."""
    return sweep_to_csv(curve)
