"""Problem instances: services, the rate matrix, generators and serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import channel as chan
from .grid import (
    CATALOG,
    SHAPE_3,
    Block,
    NumerologyShape,
    ResourceGrid,
    enumerate_blocks,
    incidence,
)

LATENCY = "latency"
CAPACITY = "capacity"

DEMAND_CONVENTION = "q_bits = q_kbps * horizon_ms"

_MASK_EPS = 1e-9


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def sub_seed(seed: int, index: int) -> int:
    """Per-service seed: splitmix64 applied to the run seed offset by ``index + 1``."""
    return splitmix64((seed * 0x100000001 + index + 1) & 0xFFFFFFFFFFFFFFFF) >> 1


@dataclass(frozen=True)
class Service:
    id: int
    cls: str
    snr_db: float = 20.0
    demand_bits: float = 0.0
    latency_ms: float = float("inf")
    channel: chan.ChannelRealization | None = None

    def __post_init__(self):
        if self.cls not in (LATENCY, CAPACITY):
            raise ValueError(f"unknown service class {self.cls!r}")
        if self.cls == LATENCY and not (self.demand_bits > 0 and self.latency_ms > 0):
            raise ValueError(f"latency service {self.id} needs positive demand and deadline")

    @property
    def is_latency(self) -> bool:
        return self.cls == LATENCY

    def to_dict(self) -> dict:
        d = {"id": self.id, "class": self.cls, "snr_db": self.snr_db}
        if self.is_latency:
            d["demand_bits"] = self.demand_bits
            d["latency_ms"] = self.latency_ms
        if self.channel is not None:
            d["channel"] = self.channel.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, profile: chan.MultipathProfile) -> "Service":
        ch = chan.ChannelRealization.from_dict(d["channel"], profile) if "channel" in d else None
        kw = {}
        if d["class"] == LATENCY:
            kw = {"demand_bits": float(d["demand_bits"]), "latency_ms": float(d["latency_ms"])}
        return cls(id=int(d["id"]), cls=d["class"], snr_db=float(d["snr_db"]), channel=ch, **kw)


@dataclass(eq=False)
class Instance:
    grid: ResourceGrid
    shapes: list[NumerologyShape]
    blocks: list[Block]
    services: list[Service]
    rates: np.ndarray
    subcarriers_per_block: int = 12
    profile: chan.MultipathProfile = field(default_factory=chan.MultipathProfile)
    rate_config: chan.RateConfig = field(default_factory=chan.RateConfig)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if self.rates.shape != (len(self.blocks), len(self.services)):
            raise ValueError(f"rate matrix shape {self.rates.shape} does not match |B| x |K|")
        if (self.rates < 0).any() or not np.isfinite(self.rates).all():
            raise ValueError("rates must be finite and nonnegative")

    @property
    def latency_ids(self) -> list[int]:
        return [s.id for s in self.services if s.is_latency]

    @property
    def capacity_ids(self) -> list[int]:
        return [s.id for s in self.services if not s.is_latency]

    @property
    def demands(self) -> np.ndarray:
        return np.array([s.demand_bits if s.is_latency else 0.0 for s in self.services])

    @cached_property
    def a(self):
        """Sparse block/basic-unit incidence."""
        return incidence(self.blocks, self.grid.n_units)

    @cached_property
    def unit_blocks(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.grid.n_units)]
        for b in self.blocks:
            for i in b.coverage:
                out[i].append(b.id)
        return out

    def restrict(self, shape_ids) -> "Instance":
        """Sub-instance keeping only blocks of the given shapes (ids re-densified)."""
        keep = [b for b in self.blocks if b.shape.id in set(shape_ids)]
        blocks = [Block(i, b.shape, b.t0, b.f0, b.t_span, b.f_span, b.coverage, b.end_time_ms, b.duration_ms)
                  for i, b in enumerate(keep)]
        rates = self.rates[[b.id for b in keep]] if keep else np.zeros((0, len(self.services)))
        shapes = [s for s in self.shapes if s.id in set(shape_ids)]
        return Instance(self.grid, shapes, blocks, self.services, rates, self.subcarriers_per_block,
                        self.profile, self.rate_config, dict(self.meta, restricted_to=sorted(shape_ids)))

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "shapes": [s.to_dict() for s in self.shapes],
            "subcarriers_per_block": self.subcarriers_per_block,
            "profile": self.profile.to_dict(),
            "rate_config": self.rate_config.to_dict(),
            "services": [s.to_dict() for s in self.services],
            "rates": self.rates.tolist(),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        grid = ResourceGrid.from_dict(d["grid"])
        shapes = [NumerologyShape.from_dict(s) for s in d["shapes"]]
        spb = int(d.get("subcarriers_per_block", 12))
        profile = chan.MultipathProfile.from_dict(d["profile"]) if "profile" in d else chan.MultipathProfile()
        cfg = chan.RateConfig.from_dict(d["rate_config"]) if "rate_config" in d else chan.RateConfig()
        services = [Service.from_dict(s, profile) for s in d["services"]]
        blocks = enumerate_blocks(grid, shapes, spb)
        if d.get("rates") is not None:
            rates = np.asarray(d["rates"], dtype=float).reshape(len(blocks), len(services))
        else:
            rates = mask_latency(chan.rate_matrix(blocks, services, cfg), blocks, services)
        return cls(grid, shapes, blocks, services, rates, spb, profile, cfg, dict(d.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_json(Path(path).read_text())

    def rates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "shape", "t0", "f0"] + [f"k{s.id}" for s in self.services])
        for b in self.blocks:
            w.writerow([b.id, b.shape.id, b.t0, b.f0] + [repr(float(x)) for x in self.rates[b.id]])
        return buf.getvalue()


def mask_latency(rates: np.ndarray, blocks, services) -> np.ndarray:
    """Zero r[b, k] for latency services whose deadline ends before block b does."""
    out = np.array(rates, dtype=float, copy=True)
    end = np.array([b.end_time_ms for b in blocks])
    for k, s in enumerate(services):
        if s.is_latency:
            out[end > s.latency_ms + _MASK_EPS, k] = 0.0
    return out


def build_instance(grid: ResourceGrid, shapes, services, profile=None, cfg=None, seed: int = 0,
                   subcarriers_per_block: int = 12, meta=None) -> Instance:
    """Enumerate blocks, realise missing channels, fill and latency-mask the rate matrix."""
    profile = profile or chan.MultipathProfile()
    cfg = cfg or chan.RateConfig()
    shapes = list(shapes)
    blocks = enumerate_blocks(grid, shapes, subcarriers_per_block)
    realized = []
    for s in services:
        if s.channel is None:
            ch = chan.realize_channel(profile, grid.n_freq, grid.unit_bw_khz, sub_seed(seed, s.id))
            s = Service(s.id, s.cls, s.snr_db, s.demand_bits, s.latency_ms, ch)
        realized.append(s)
    raw = chan.rate_matrix(blocks, realized, cfg)
    meta = dict(meta or {}, seed=seed)
    return Instance(grid, shapes, blocks, realized, mask_latency(raw, blocks, realized),
                    subcarriers_per_block, profile, cfg, meta)


TABLE_DEMANDS_KBPS = (16, 32, 64, 128, 256, 512)
TABLE_LATENCIES_MS = (0.25, 0.5, 1.0, 1.5, 2.0)


@dataclass
class SimulationConfig:
    """Generator parameters; the defaults are the benchmark table setup."""

    horizon_ms: float = 2.0
    bandwidth_khz: float = 2000.0
    subcarriers_per_block: int = 12
    shapes: list = field(default_factory=lambda: ["1", "2", "3", "3E"])
    n_latency: int = 5
    n_capacity: int = 5
    snr_db_range: tuple = (5.0, 30.0)
    demand_kbps: float = 128.0
    latency_ms: float = 1.0
    profile: dict = field(default_factory=lambda: chan.MultipathProfile().to_dict())
    rate: dict = field(default_factory=lambda: chan.RateConfig().to_dict())

    def __post_init__(self):
        self.snr_db_range = tuple(float(x) for x in self.snr_db_range)
        problems = []
        if self.horizon_ms <= 0 or self.bandwidth_khz <= 0:
            problems.append(("horizon_ms", "horizon and bandwidth must be positive"))
        if self.subcarriers_per_block < 1:
            problems.append(("subcarriers_per_block", "must be >= 1"))
        if self.n_latency < 0 or self.n_capacity < 0 or self.n_latency + self.n_capacity == 0:
            problems.append(("n_latency", "service counts must be >= 0 and not both zero"))
        if len(self.snr_db_range) != 2 or self.snr_db_range[0] > self.snr_db_range[1]:
            problems.append(("snr_db_range", "must be [low, high] with low <= high"))
        if self.demand_kbps <= 0:
            problems.append(("demand_kbps", "must be positive"))
        if self.latency_ms <= 0:
            problems.append(("latency_ms", "must be positive"))
        if not self.shapes:
            problems.append(("shapes", "at least one shape is required"))
        if problems:
            key, msg = problems[0]
            raise ConfigError(key, msg)

    def shape_objects(self) -> list[NumerologyShape]:
        out = []
        for s in self.shapes:
            if isinstance(s, str):
                if s not in CATALOG:
                    raise ConfigError("shapes", f"unknown catalog shape {s!r}")
                out.append(CATALOG[s])
            else:
                out.append(NumerologyShape.from_dict(s))
        return out

    @property
    def demand_bits(self) -> float:
        return self.demand_kbps * self.horizon_ms

    def to_dict(self) -> dict:
        return {
            "horizon_ms": self.horizon_ms,
            "bandwidth_khz": self.bandwidth_khz,
            "subcarriers_per_block": self.subcarriers_per_block,
            "shapes": list(self.shapes),
            "n_latency": self.n_latency,
            "n_capacity": self.n_capacity,
            "snr_db_range": list(self.snr_db_range),
            "demand_kbps": self.demand_kbps,
            "latency_ms": self.latency_ms,
            "profile": self.profile,
            "rate": self.rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = set(cls().to_dict())
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(next(iter(d), ""), str(e)) from e


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def random_instance(params: SimulationConfig | None = None, seed: int = 0) -> Instance:
    """Draw one instance: per-service SNR uniform over the range, i.i.d. channels."""
    params = params or SimulationConfig()
    shapes = params.shape_objects()
    try:
        profile = chan.MultipathProfile.from_dict(params.profile)
        cfg = chan.RateConfig.from_dict(params.rate)
    except (KeyError, ValueError) as e:
        raise ConfigError("profile" if "tap" in str(e) else "rate", str(e)) from e
    grid = ResourceGrid.for_shapes(params.horizon_ms, params.bandwidth_khz, shapes, params.subcarriers_per_block)
    rng = np.random.default_rng(seed)
    lo, hi = params.snr_db_range
    services = []
    n = params.n_latency + params.n_capacity
    snrs = rng.uniform(lo, hi, size=n)
    for k in range(n):
        if k < params.n_latency:
            services.append(Service(k, LATENCY, float(snrs[k]), params.demand_bits, params.latency_ms))
        else:
            services.append(Service(k, CAPACITY, float(snrs[k])))
    meta = {"demand_convention": DEMAND_CONVENTION, "demand_kbps": params.demand_kbps,
            "horizon_ms": params.horizon_ms}
    return build_instance(grid, shapes, services, profile, cfg, seed, params.subcarriers_per_block, meta)


def small_instance(seed: int, max_dim: int = 6, max_shapes: int = 3, max_services: int = 4) -> Instance:
    """Tiny random instance for oracle cross-checks.

    Grid sides, shape subset, service mix, deadlines and demands are all
    drawn from ``seed``.  Demands are a random multiple of a typical block
    rate so that both feasible and infeasible cases occur.
    """
    rng = np.random.default_rng(seed)
    nt = int(rng.integers(1, max_dim + 1))
    nf = int(rng.integers(1, max_dim + 1))
    grid = ResourceGrid.of_size(nt, nf)
    keys = sorted(CATALOG)
    n_shapes = int(rng.integers(1, max_shapes + 1))
    shapes = [CATALOG[keys[i]] for i in sorted(rng.choice(len(keys), n_shapes, replace=False))]
    n_services = int(rng.integers(1, max_services + 1))
    n_latency = int(rng.integers(0, n_services + 1))
    deadlines = (0.125, 0.25, 0.5, 1.0)
    specs = []
    for k in range(n_services):
        snr = float(rng.uniform(5.0, 30.0))
        if k < n_latency:
            specs.append((k, LATENCY, snr, float(rng.uniform(0.2, 3.0)), float(rng.choice(deadlines))))
        else:
            specs.append((k, CAPACITY, snr, None, None))
    # demands are scaled once rates exist; build with a placeholder first
    placeholder = [Service(k, cls, snr, 1.0, tau) if cls == LATENCY else Service(k, cls, snr)
                   for k, cls, snr, _, tau in specs]
    probe = build_instance(grid, shapes, placeholder, seed=seed)
    typical = float(np.median(probe.rates[probe.rates > 0])) if (probe.rates > 0).any() else 1.0
    services = []
    for (k, cls, snr, mult, tau), s in zip(specs, probe.services):
        if cls == LATENCY:
            services.append(Service(k, cls, snr, mult * typical, tau, s.channel))
        else:
            services.append(Service(k, cls, snr, channel=s.channel))
    return build_instance(grid, shapes, services, seed=seed, meta={"generator": "small", "seed": seed})


def partition_instance(integers) -> Instance:
    """Instance whose optimum reaches sum/2 exactly when the integers split into two equal halves."""
    d = [int(x) for x in integers]
    if len(d) < 2:
        raise ValueError("need at least two integers")
    if any(x < 0 for x in d):
        raise ValueError("integers must be nonnegative")
    if sum(d) % 2:
        raise ValueError("sum of integers must be even")
    n = len(d)
    grid = ResourceGrid.of_size(1, n)
    # 60 kHz x 3 subcarriers = one 180 kHz unit; one 0.125 ms TTI
    shapes = [SHAPE_3]
    blocks = enumerate_blocks(grid, shapes, subcarriers_per_block=3)
    services = [
        Service(0, LATENCY, demand_bits=sum(d) / 2, latency_ms=SHAPE_3.tti_ms),
        Service(1, CAPACITY),
    ]
    rates = np.array([[x, x] for x in d], dtype=float)
    return Instance(grid, shapes, blocks, services, rates, 3, meta={"partition": d})


# -- assignments -------------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    objective: float
    feasible: bool
    unmet: tuple[int, ...] = ()

    @property
    def n_blocks(self) -> int:
        return len(self.pairs)

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "objective": self.objective,
            "feasible": self.feasible,
            "unmet": list(self.unmet),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Assignment":
        return cls(tuple((int(b), int(k)) for b, k in d["pairs"]), float(d["objective"]),
                   bool(d["feasible"]), tuple(int(k) for k in d.get("unmet", ())))


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    objective: float
    delivered: dict
    unmet: tuple[int, ...]
    overlapping: tuple[tuple[int, int], ...]
    repeated_blocks: tuple[int, ...]


def demand_met(delivered: float, demand: float) -> bool:
    return delivered >= demand - 1e-9 * max(1.0, demand)


def check_assignment(inst: Instance, a) -> FeasibilityReport:
    """Recompute objective, demand satisfaction and overlap from scratch."""
    pairs = a.pairs if isinstance(a, Assignment) else tuple(a)
    nb, nk = inst.rates.shape
    for b, k in pairs:
        if not (0 <= b < nb and 0 <= k < nk):
            raise ValueError(f"unknown pair ({b}, {k})")
    owner: dict[int, int] = {}
    overlapping = set()
    counts: dict[int, int] = {}
    for b, _ in pairs:
        counts[b] = counts.get(b, 0) + 1
    repeated = sorted(b for b, c in counts.items() if c > 1)
    for b in sorted(counts):
        for i in inst.blocks[b].coverage:
            if i in owner and owner[i] != b:
                overlapping.add((min(owner[i], b), max(owner[i], b)))
            else:
                owner[i] = b
    delivered = {k: 0.0 for k in inst.latency_ids}
    objective = 0.0
    for b, k in pairs:
        if inst.services[k].is_latency:
            delivered[k] += float(inst.rates[b, k])
        else:
            objective += float(inst.rates[b, k])
    unmet = tuple(k for k in inst.latency_ids if not demand_met(delivered[k], inst.services[k].demand_bits))
    feasible = not unmet and not overlapping and not repeated
    return FeasibilityReport(feasible, objective, delivered, unmet, tuple(sorted(overlapping)), tuple(repeated))


def make_assignment(inst: Instance, pairs) -> Assignment:
    pairs = tuple(sorted((int(b), int(k)) for b, k in pairs))
    rep = check_assignment(inst, pairs)
    return Assignment(pairs, rep.objective, rep.feasible, rep.unmet)
