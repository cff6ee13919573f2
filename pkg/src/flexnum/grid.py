"""Basic-unit resource grid and candidate block enumeration."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

_EPS = 1e-6


@dataclass(frozen=True)
class NumerologyShape:
    """A block template: one numerology plus its TTI."""

    id: str
    scs_khz: float
    tti_ms: float
    symbol_us: float
    cp_us: float
    num_symbols: int

    def __post_init__(self):
        for name in ("scs_khz", "tti_ms", "symbol_us", "num_symbols"):
            if not getattr(self, name) > 0:
                raise ValueError(f"shape {self.id!r}: {name} must be positive")
        if not self.cp_us > 0:
            raise ValueError(f"shape {self.id!r}: cp_us must be positive")
        if abs(self.symbol_us * self.scs_khz / 1000.0 - 1.0) > 0.01:
            raise ValueError(f"shape {self.id!r}: symbol duration and SCS are not reciprocal")
        busy = self.num_symbols * (self.symbol_us + self.cp_us)
        if busy > self.tti_ms * 1000.0 * 1.01:
            raise ValueError(f"shape {self.id!r}: {self.num_symbols} symbols do not fit the TTI")

    @property
    def label(self) -> str:
        """TTI-SCS name, e.g. ``0.25ms-30kHz``."""
        return f"{self.tti_ms:g}ms-{self.scs_khz:g}kHz"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NumerologyShape":
        return cls(
            id=str(d["id"]),
            scs_khz=float(d["scs_khz"]),
            tti_ms=float(d["tti_ms"]),
            symbol_us=float(d["symbol_us"]),
            cp_us=float(d["cp_us"]),
            num_symbols=int(d["num_symbols"]),
        )


SHAPE_1 = NumerologyShape("1", 15.0, 0.5, 66.7, 4.7, 7)
SHAPE_2 = NumerologyShape("2", 30.0, 0.25, 33.3, 2.3, 7)
SHAPE_3 = NumerologyShape("3", 60.0, 0.125, 16.7, 1.2, 7)
SHAPE_3E = NumerologyShape("3E", 60.0, 0.125, 16.7, 4.17, 6)

CATALOG: dict[str, NumerologyShape] = {s.id: s for s in (SHAPE_1, SHAPE_2, SHAPE_3, SHAPE_3E)}


def lookup_shape(key: str, shapes=None) -> NumerologyShape:
    """Find a shape by id (``"3E"``) or by TTI-SCS label (``"0.5ms-15kHz"``)."""
    pool = list(shapes) if shapes is not None else list(CATALOG.values())
    for s in pool:
        if key in (s.id, s.label):
            return s
    raise KeyError(f"unknown shape {key!r}")


def load_shapes(path) -> list[NumerologyShape]:
    """Read shapes from a JSON list (or ``{"shapes": [...]}``); strings name catalog entries."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["shapes"]
    return [CATALOG[d] if isinstance(d, str) else NumerologyShape.from_dict(d) for d in data]


@dataclass(frozen=True)
class ResourceGrid:
    total_time_ms: float
    total_bw_khz: float
    unit_time_ms: float
    unit_bw_khz: float

    def __post_init__(self):
        if min(self.total_time_ms, self.total_bw_khz, self.unit_time_ms, self.unit_bw_khz) <= 0:
            raise ValueError("grid dimensions must be positive")

    @property
    def n_time(self) -> int:
        return int(math.floor(self.total_time_ms / self.unit_time_ms + _EPS))

    @property
    def n_freq(self) -> int:
        return int(math.floor(self.total_bw_khz / self.unit_bw_khz + _EPS))

    @property
    def n_units(self) -> int:
        return self.n_time * self.n_freq

    def unit_index(self, t: int, f: int) -> int:
        # frequency-major within each time unit
        return t * self.n_freq + f

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceGrid":
        return cls(**{k: float(d[k]) for k in ("total_time_ms", "total_bw_khz", "unit_time_ms", "unit_bw_khz")})

    @classmethod
    def for_shapes(cls, total_time_ms: float, total_bw_khz: float, shapes, subcarriers_per_block: int = 12):
        """Grid whose basic unit is the smallest TTI by ``subcarriers_per_block`` subcarriers at the smallest SCS."""
        shapes = list(shapes)
        return cls(
            total_time_ms=total_time_ms,
            total_bw_khz=total_bw_khz,
            unit_time_ms=min(s.tti_ms for s in shapes),
            unit_bw_khz=min(s.scs_khz for s in shapes) * subcarriers_per_block,
        )

    @classmethod
    def of_size(cls, n_time: int, n_freq: int, unit_time_ms: float = 0.125, unit_bw_khz: float = 180.0):
        return cls(n_time * unit_time_ms, n_freq * unit_bw_khz, unit_time_ms, unit_bw_khz)


@dataclass(frozen=True)
class Block:
    id: int
    shape: NumerologyShape
    t0: int
    f0: int
    t_span: int
    f_span: int
    coverage: tuple[int, ...]
    end_time_ms: float
    duration_ms: float

    @property
    def position(self) -> tuple[str, int, int]:
        return (self.shape.id, self.t0, self.f0)


def footprint(grid: ResourceGrid, shape: NumerologyShape, subcarriers_per_block: int) -> tuple[int, int]:
    """(t_span, f_span) in basic units; raises if the shape is not a whole number of units."""
    t_ratio = shape.tti_ms / grid.unit_time_ms
    f_ratio = shape.scs_khz * subcarriers_per_block / grid.unit_bw_khz
    t_span, f_span = round(t_ratio), round(f_ratio)
    if t_span < 1 or f_span < 1 or abs(t_ratio - t_span) > _EPS or abs(f_ratio - f_span) > _EPS:
        raise ValueError(
            f"shape {shape.id!r} footprint {t_ratio:g} x {f_ratio:g} is not a whole number of basic units"
        )
    return t_span, f_span


def enumerate_blocks(grid: ResourceGrid, shapes, subcarriers_per_block: int = 12) -> list[Block]:
    """Place every shape at every grid offset that fits."""
    blocks: list[Block] = []
    nt, nf = grid.n_time, grid.n_freq
    for shape in shapes:
        ts, fs = footprint(grid, shape, subcarriers_per_block)
        for t0 in range(nt - ts + 1):
            for f0 in range(nf - fs + 1):
                cov = tuple(t * nf + f for t in range(t0, t0 + ts) for f in range(f0, f0 + fs))
                blocks.append(
                    Block(
                        id=len(blocks),
                        shape=shape,
                        t0=t0,
                        f0=f0,
                        t_span=ts,
                        f_span=fs,
                        coverage=cov,
                        end_time_ms=(t0 + ts) * grid.unit_time_ms,
                        duration_ms=ts * grid.unit_time_ms,
                    )
                )
    return blocks


def expected_block_count(n_time: int, n_freq: int, t_span: int, f_span: int) -> int:
    return max(0, n_time - t_span + 1) * max(0, n_freq - f_span + 1)


def overlaps(b: Block, b2: Block) -> bool:
    return not set(b.coverage).isdisjoint(b2.coverage)


def incidence(blocks, n_units: int) -> sparse.csr_matrix:
    """|B| x |I| 0/1 matrix with a[b, i] = 1 iff block b covers unit i."""
    rows = np.repeat(np.arange(len(blocks)), [len(b.coverage) for b in blocks])
    cols = np.fromiter((i for b in blocks for i in b.coverage), dtype=np.int64, count=len(rows))
    data = np.ones(len(rows))
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(blocks), n_units))
