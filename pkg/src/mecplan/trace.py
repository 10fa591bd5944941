"""Demand traces: ingestion, synthesis, app tagging, and traffic-to-CPU-ticks enrichment.

Traffic volumes are in megabytes (1 MB = 10^6 bytes) per time step; computational
load is in CPU ticks. Per-category linear cost models map one to the other.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateFitError, NoCostModelError

MB = 1_000_000  # bytes per megabyte
DEFAULT_STEP_SECONDS = 3600  # hourly record cadence


class Category(Enum):
    """Content categories a mobile app's traffic can belong to."""

    VIDEO = "video"
    GAMING = "gaming"
    MAPS = "maps"
    OTHER = "other"

    def __str__(self) -> str:
        return self.value


# Fixed iteration order for deterministic outputs.
CATEGORY_ORDER = (Category.VIDEO, Category.GAMING, Category.MAPS, Category.OTHER)


@dataclass(frozen=True)
class DemandRecord:
    """One trace line: an app downloading bytes at a base station."""

    timestamp: int  # epoch seconds
    bs_id: str
    app_name: str
    bytes_down: int


@dataclass
class DemandSeries:
    """Per-BS, per-category traffic (MB) over the trace's time steps."""

    bs_id: str
    category: Category
    values: np.ndarray  # MB per step, length |T|

    def total_mb(self) -> float:
        return float(self.values.sum())

    def peak_mb(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0


@dataclass(frozen=True)
class CostModel:
    """Linear traffic-to-ticks model: ticks = slope * MB + intercept."""

    category: Category
    slope: float  # CPU ticks per MB
    intercept: float  # CPU ticks, per-session fixed cost
    nrmse: float = 0.0  # RMSE over mean observed ticks


@dataclass
class EnrichedSeries:
    """CPU-tick load derived from a DemandSeries through a cost model."""

    bs_id: str
    category: Category
    ticks: np.ndarray  # CPU ticks per step


# Fitted constants for the shipped categories; OTHER carries no model.
DEFAULT_COST_MODELS: dict[Category, CostModel] = {
    Category.VIDEO: CostModel(Category.VIDEO, slope=0.25, intercept=6.76, nrmse=0.04),
    Category.GAMING: CostModel(Category.GAMING, slope=161.38, intercept=1675.03, nrmse=0.06),
    Category.MAPS: CostModel(Category.MAPS, slope=67.44, intercept=-7.53, nrmse=0.02),
}


@dataclass(frozen=True)
class TaggingRules:
    """Ordered, case-insensitive substring patterns mapping app names to categories."""

    rules: tuple[tuple[str, Category], ...]

    @classmethod
    def default(cls) -> "TaggingRules":
        video = ("youtube", "netflix", "timewarner", "showbox", "twitch",
                 "directtv", "foxsports", "foxnews")
        gaming = ("minecraft", "world of warcraft", "riptide", "grand theft auto",
                  "rollercoaster tycoon", "this war of mine", "titan quest", "unkilled")
        maps = ("google maps", "waze")
        rules = tuple((p, Category.VIDEO) for p in video)
        rules += tuple((p, Category.GAMING) for p in gaming)
        rules += tuple((p, Category.MAPS) for p in maps)
        return cls(rules)


def tag_app(app_name: str, rules: TaggingRules) -> Category:
    """Return the category of the first matching rule, OTHER when none matches."""
    name = app_name.lower()
    for pattern, category in rules.rules:
        if pattern in name:
            return category
    return Category.OTHER


@dataclass
class AggregatedTrace:
    """Binned demand: one series per (bs, category) with traffic, plus bin metadata."""

    series: list[DemandSeries]
    step_seconds: int
    t0: int  # epoch seconds of the first bin, aligned to the step grid
    n_steps: int
    rejected: int = 0  # records dropped for malformed fields

    def by_category(self, category: Category) -> list[DemandSeries]:
        return [s for s in self.series if s.category is category]


def aggregate(records: Iterable[DemandRecord], rules: TaggingRules,
              step_seconds: int = DEFAULT_STEP_SECONDS) -> AggregatedTrace:
    """Bin raw records into per-(bs, category) MB series on a fixed step grid.

    Bytes are summed exactly per bin and converted to MB once, so total bytes
    are conserved. Records with a malformed timestamp or negative byte count
    are dropped and counted in the result's ``rejected`` field.
    """
    if step_seconds <= 0:
        raise ConfigError(f"step_seconds must be positive, got {step_seconds}")

    valid: list[tuple[int, str, Category, int]] = []
    rejected = 0
    for rec in records:
        ts, size = rec.timestamp, rec.bytes_down
        if not isinstance(ts, int) or isinstance(ts, bool) or not isinstance(size, int) or size < 0:
            rejected += 1
            continue
        valid.append((ts, rec.bs_id, tag_app(rec.app_name, rules), size))

    if not valid:
        return AggregatedTrace([], step_seconds, 0, 0, rejected)

    t0 = min(ts for ts, *_ in valid) // step_seconds * step_seconds
    t_last = max(ts for ts, *_ in valid)
    n_steps = (t_last - t0) // step_seconds + 1

    bytes_per_key: dict[tuple[str, Category], np.ndarray] = {}
    for ts, bs_id, category, size in valid:
        step = (ts - t0) // step_seconds
        bins = bytes_per_key.get((bs_id, category))
        if bins is None:
            bins = bytes_per_key[(bs_id, category)] = np.zeros(n_steps, dtype=np.int64)
        bins[step] += size

    series = [
        DemandSeries(bs_id, category, bins.astype(np.float64) / MB)
        for (bs_id, category), bins in sorted(
            bytes_per_key.items(), key=lambda kv: (kv[0][0], CATEGORY_ORDER.index(kv[0][1]))
        )
        if bins.any()
    ]
    return AggregatedTrace(series, step_seconds, t0, n_steps, rejected)


def fit_cost_model(samples: Sequence[tuple[float, float]], category: Category) -> CostModel:
    """Ordinary-least-squares fit of ticks against traffic MB.

    Needs at least two samples with distinct traffic values. The reported
    error is the RMS residual normalized by the mean observed tick count.
    """
    if len(samples) < 2:
        raise DegenerateFitError(f"need at least 2 samples, got {len(samples)}")
    x = np.asarray([s[0] for s in samples], dtype=np.float64)
    y = np.asarray([s[1] for s in samples], dtype=np.float64)
    if np.unique(x).size < 2:
        raise DegenerateFitError("all samples share one traffic value; slope is undefined")

    slope, intercept = np.polyfit(x, y, 1)
    rmse = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    mean_y = float(np.mean(y))
    if mean_y != 0.0:
        nrmse = rmse / abs(mean_y)
    else:
        nrmse = 0.0 if rmse == 0.0 else math.inf
    return CostModel(category, float(slope), float(intercept), nrmse)


def enrich(series: DemandSeries, models: Mapping[Category, CostModel],
           raw: bool = False) -> EnrichedSeries:
    """Scale a traffic series into CPU ticks via its category's slope.

    Only the slope is applied; the intercept is a per-session fixed cost and
    would double-count overhead if charged per step. In raw mode every
    category uses slope 1, i.e. ticks equal megabytes.
    """
    if raw:
        return EnrichedSeries(series.bs_id, series.category, series.values.copy())
    model = models.get(series.category)
    if model is None:
        raise NoCostModelError(f"no cost model for category {series.category}")
    return EnrichedSeries(series.bs_id, series.category, model.slope * series.values)


def tau_map(models: Mapping[Category, CostModel], raw: bool = False,
            include_other: bool = False) -> dict[Category, float]:
    """Ticks-per-MB factor per category; all ones in raw mode."""
    taus: dict[Category, float] = {}
    for category in CATEGORY_ORDER:
        if category in models:
            taus[category] = 1.0 if raw else models[category].slope
        elif category is Category.OTHER and include_other:
            taus[category] = 1.0
    return taus


# --------------------------------------------------------------------------
# Synthetic trace generation
# --------------------------------------------------------------------------

# App pool used by the generator; names round-trip through the default rules
# except for the OTHER pool, which deliberately matches nothing.
SYNTH_APPS: dict[Category, tuple[str, ...]] = {
    Category.VIDEO: ("YouTube", "Netflix", "Twitch", "ShowBox"),
    Category.GAMING: ("Minecraft", "World of Warcraft", "Titan Quest", "Unkilled"),
    Category.MAPS: ("Google Maps", "Waze"),
    Category.OTHER: ("Facebook", "Instagram", "WhatsApp", "Snapchat"),
}

# Arbitrary fixed origin aligned to an hour boundary.
SYNTH_EPOCH0 = 1_600_000_000 - (1_600_000_000 % 3600)

DEFAULT_SHARES: dict[Category, float] = {
    Category.VIDEO: 0.66,
    Category.GAMING: 0.15,
    Category.MAPS: 0.04,
    Category.OTHER: 0.15,
}

DEFAULT_PEAK_HOURS: dict[Category, float] = {
    Category.VIDEO: 21.0,
    Category.GAMING: 15.0,
    Category.MAPS: 9.0,
    Category.OTHER: 13.0,
}


@dataclass
class SyntheticConfig:
    """Knobs for the synthetic trace generator.

    Each base station gets a log-normal size factor (mean 1) and a diurnal
    profile per category: mean traffic scaled by 1 + amplitude * cos of the
    hour-of-day offset from the category's peak hour, then multiplied by
    log-normal noise (mean 1). Hourly records, one per (bs, category, hour).
    """

    n_bs: int
    days: int = 7
    shares: dict[Category, float] = field(default_factory=lambda: dict(DEFAULT_SHARES))
    mean_mb_per_bs_hour: float = 60.0  # expected total across categories
    diurnal_amplitude: float = 0.6  # applies to every category unless overridden
    amplitudes: dict[Category, float] | None = None
    peak_hours: dict[Category, float] = field(default_factory=lambda: dict(DEFAULT_PEAK_HOURS))
    bs_phase_jitter_h: float = 3.0  # stddev of per-BS peak-hour shift
    noise_sigma: float = 0.3  # log-scale stddev of per-record noise
    bs_size_sigma: float = 0.8  # log-scale stddev of per-BS volume factor
    area_m: float = 50_000.0  # side of the square BS placement area

    def amplitude_of(self, category: Category) -> float:
        if self.amplitudes and category in self.amplitudes:
            return self.amplitudes[category]
        return self.diurnal_amplitude

    def validate(self) -> None:
        if self.n_bs < 1:
            raise ConfigError(f"n_bs must be >= 1, got {self.n_bs}")
        if self.days < 1:
            raise ConfigError(f"days must be >= 1, got {self.days}")
        if any(v < 0 for v in self.shares.values()) or sum(self.shares.values()) <= 0:
            raise ConfigError("category shares must be non-negative and sum to > 0")
        for category in CATEGORY_ORDER:
            a = self.amplitude_of(category)
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"diurnal amplitude for {category} must be in [0, 1], got {a}")


def bs_id_for(index: int) -> str:
    return f"bs{index:04d}"


def generate_bs_positions(config: SyntheticConfig, seed: int) -> list[tuple[str, float, float]]:
    """Uniform BS positions (meters) in a square area; ids bs0000, bs0001, ..."""
    config.validate()
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, config.area_m, size=(config.n_bs, 2))
    return [(bs_id_for(i), float(xy[i, 0]), float(xy[i, 1])) for i in range(config.n_bs)]


def generate_synthetic_trace(config: SyntheticConfig, seed: int) -> list[DemandRecord]:
    """Deterministic hourly demand records following the configured shares.

    Category volume shares are exact in expectation, so realized shares land
    within a couple of percentage points on any non-trivial trace.
    """
    config.validate()
    rng = np.random.default_rng(seed)

    n_bs, hours = config.n_bs, config.days * 24
    shares_total = sum(config.shares.values())
    share = {k: v / shares_total for k, v in config.shares.items()}

    sizes = rng.lognormal(-config.bs_size_sigma**2 / 2, config.bs_size_sigma, size=n_bs)
    jitter = rng.normal(0.0, config.bs_phase_jitter_h, size=n_bs)
    ncat = len(CATEGORY_ORDER)
    noise = rng.lognormal(-config.noise_sigma**2 / 2, config.noise_sigma,
                          size=(n_bs, hours, ncat))
    app_pick = rng.integers(0, 4, size=(n_bs, hours, ncat))

    records: list[DemandRecord] = []
    hour_axis = np.arange(hours)
    for b in range(n_bs):
        bs = bs_id_for(b)
        for ci, category in enumerate(CATEGORY_ORDER):
            mean_mb = config.mean_mb_per_bs_hour * share.get(category, 0.0) * sizes[b]
            if mean_mb == 0.0:
                continue
            amp = config.amplitude_of(category)
            peak = config.peak_hours.get(category, 12.0) + jitter[b]
            profile = 1.0 + amp * np.cos(2 * np.pi * (hour_axis - peak) / 24.0)
            mb = mean_mb * profile * noise[b, :, ci]
            apps = SYNTH_APPS[category]
            for h in range(hours):
                records.append(DemandRecord(
                    timestamp=SYNTH_EPOCH0 + h * 3600,
                    bs_id=bs,
                    app_name=apps[app_pick[b, h, ci] % len(apps)],
                    bytes_down=int(round(mb[h] * MB)),
                ))
    records.sort(key=lambda r: (r.timestamp, r.bs_id, r.app_name))
    return records


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------

TRACE_HEADER = ["timestamp", "bs_id", "app_name", "bytes_down"]
ENRICHED_HEADER = ["step", "bs_id", "category", "megabytes", "cpu_ticks"]


def load_trace_csv(path: str | Path) -> tuple[list[DemandRecord], int]:
    """Read trace records; returns (records, count of malformed rows skipped)."""
    records: list[DemandRecord] = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TRACE_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"trace {path} missing columns: {', '.join(missing)}")
        for row in reader:
            try:
                records.append(DemandRecord(
                    timestamp=int(row["timestamp"]),
                    bs_id=row["bs_id"],
                    app_name=row["app_name"],
                    bytes_down=int(row["bytes_down"]),
                ))
            except (TypeError, ValueError):
                skipped += 1
    return records, skipped


def write_trace_csv(records: Iterable[DemandRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for rec in records:
            writer.writerow([rec.timestamp, rec.bs_id, rec.app_name, rec.bytes_down])


def write_enriched_csv(trace: AggregatedTrace, models: Mapping[Category, CostModel],
                       path: str | Path, raw: bool = False) -> None:
    """Export the per-step cpu_ticks column next to the traffic volumes.

    Categories without a cost model (OTHER) are exported only in raw mode.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ENRICHED_HEADER)
        for series in trace.series:
            if not raw and series.category not in models:
                continue
            enriched = enrich(series, models, raw=raw)
            for step in range(series.values.size):
                writer.writerow([
                    step, series.bs_id, series.category.value,
                    format(float(series.values[step]), ".10g"),
                    format(float(enriched.ticks[step]), ".10g"),
                ])


def write_cost_models(models: Mapping[Category, CostModel], path: str | Path) -> None:
    payload = {
        m.category.value: {"slope": m.slope, "intercept": m.intercept, "nrmse": m.nrmse}
        for m in models.values()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cost_models(path: str | Path) -> dict[Category, CostModel]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    models: dict[Category, CostModel] = {}
    for name, fields in payload.items():
        try:
            category = Category(name)
        except ValueError as exc:
            raise ConfigError(f"unknown category {name!r} in {path}") from exc
        models[category] = CostModel(
            category, float(fields["slope"]), float(fields["intercept"]),
            float(fields.get("nrmse", 0.0)),
        )
    return models
