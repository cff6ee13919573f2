"""Per-block achievable rate from a tapped-delay-line channel.

The rate surrogate is Shannon capacity per basic frequency unit with an
ISI-degraded SINR, summed over the block's units and scaled by the data
symbols left after control overhead and by a fractional guardband loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Extended Vehicular A, 9 taps.
EVA_DELAYS_US = (0.0, 0.03, 0.15, 0.31, 0.37, 0.71, 1.09, 1.73, 2.51)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)


@dataclass(frozen=True)
class MultipathProfile:
    tap_delays_us: tuple[float, ...] = EVA_DELAYS_US
    tap_powers_db: tuple[float, ...] = EVA_POWERS_DB

    def __post_init__(self):
        object.__setattr__(self, "tap_delays_us", tuple(float(d) for d in self.tap_delays_us))
        object.__setattr__(self, "tap_powers_db", tuple(float(p) for p in self.tap_powers_db))
        if not self.tap_delays_us:
            raise ValueError("multipath profile needs at least one tap")
        if len(self.tap_delays_us) != len(self.tap_powers_db):
            raise ValueError("tap delay and power lists differ in length")
        if self.tap_delays_us[0] != 0.0:
            raise ValueError("first tap delay must be 0")
        if any(b < a for a, b in zip(self.tap_delays_us, self.tap_delays_us[1:])):
            raise ValueError("tap delays must be nondecreasing")

    @property
    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (np.asarray(self.tap_powers_db) / 10.0)
        return p / p.sum()

    def to_dict(self) -> dict:
        return {"tap_delays_us": list(self.tap_delays_us), "tap_powers_db": list(self.tap_powers_db)}

    @classmethod
    def from_dict(cls, d: dict) -> "MultipathProfile":
        return cls(tuple(d["tap_delays_us"]), tuple(d["tap_powers_db"]))


@dataclass(frozen=True)
class ChannelRealization:
    freq_gains: np.ndarray
    seed: int
    profile: MultipathProfile
    unit_bw_khz: float

    def to_dict(self) -> dict:
        return {"freq_gains": self.freq_gains.tolist(), "seed": self.seed, "unit_bw_khz": self.unit_bw_khz}

    @classmethod
    def from_dict(cls, d: dict, profile: MultipathProfile) -> "ChannelRealization":
        return cls(np.asarray(d["freq_gains"], dtype=float), int(d["seed"]), profile, float(d["unit_bw_khz"]))

    def __eq__(self, other):
        return (
            isinstance(other, ChannelRealization)
            and self.seed == other.seed
            and self.profile == other.profile
            and self.unit_bw_khz == other.unit_bw_khz
            and np.array_equal(self.freq_gains, other.freq_gains)
        )


@dataclass(frozen=True)
class RateConfig:
    overhead_symbols: int = 2
    guardband_fraction: float = 1.0 / 12.0
    ici_penalty: float = 1.0

    def __post_init__(self):
        if self.overhead_symbols < 0:
            raise ValueError("overhead_symbols must be >= 0")
        if not 0.0 <= self.guardband_fraction < 1.0:
            raise ValueError("guardband_fraction must lie in [0, 1)")
        if self.ici_penalty < 1.0:
            raise ValueError("ici_penalty must be >= 1")

    def to_dict(self) -> dict:
        return {
            "overhead_symbols": self.overhead_symbols,
            "guardband_fraction": self.guardband_fraction,
            "ici_penalty": self.ici_penalty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateConfig":
        return cls(int(d["overhead_symbols"]), float(d["guardband_fraction"]), float(d["ici_penalty"]))


def realize_channel(profile: MultipathProfile, n_freq: int, unit_bw_khz: float, seed: int) -> ChannelRealization:
    """Draw Rayleigh tap coefficients and evaluate |H(f)|^2 at each unit's center frequency."""
    if n_freq < 1:
        raise ValueError("n_freq must be >= 1")
    rng = np.random.default_rng(seed)
    p = profile.linear_powers
    taps = np.sqrt(p / 2.0) * (rng.standard_normal(len(p)) + 1j * rng.standard_normal(len(p)))
    f_khz = (np.arange(n_freq) + 0.5) * unit_bw_khz
    # kHz * us = 1e-3 cycles
    phase = -2j * np.pi * np.outer(f_khz, np.asarray(profile.tap_delays_us)) * 1e-3
    h = np.exp(phase) @ taps
    gains = np.maximum(np.abs(h) ** 2, np.finfo(float).tiny)
    return ChannelRealization(gains, int(seed), profile, float(unit_bw_khz))


def isi_fraction(profile: MultipathProfile, cp_us: float) -> float:
    """Share of channel power arriving after the cyclic prefix."""
    if cp_us < 0:
        raise ValueError("cp_us must be >= 0")
    late = np.asarray(profile.tap_delays_us) > cp_us
    return float(profile.linear_powers[late].sum())


def _per_unit_rate(shape, snr_db: float, gains: np.ndarray, beta: float, cfg: RateConfig, unit_bw_khz: float):
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    gamma = 10.0 ** (snr_db / 10.0) * gains
    sinr = (1.0 - beta) * gamma / (1.0 + beta * gamma + (cfg.ici_penalty - 1.0))
    n_sc = unit_bw_khz / shape.scs_khz
    data_symbols = max(shape.num_symbols - cfg.overhead_symbols, 0)
    return (1.0 - cfg.guardband_fraction) * n_sc * data_symbols * np.log2(1.0 + sinr)


def block_rate(b, snr_db: float, ch: ChannelRealization, cfg: RateConfig) -> float:
    """Bits carried by block ``b`` on a link with the given SNR and channel."""
    if b.f0 + b.f_span > len(ch.freq_gains):
        raise ValueError(f"block {b.id} extends beyond the channel's frequency range")
    beta = isi_fraction(ch.profile, b.shape.cp_us)
    gains = ch.freq_gains[b.f0 : b.f0 + b.f_span]
    per_unit = _per_unit_rate(b.shape, snr_db, gains, beta, cfg, ch.unit_bw_khz)
    return float(per_unit.sum() * (b.duration_ms / b.shape.tti_ms))


def rate_matrix(blocks, services, cfg: RateConfig) -> np.ndarray:
    """Vectorised block_rate over all (block, service) pairs, before latency masking."""
    rates = np.zeros((len(blocks), len(services)))
    if not blocks:
        return rates
    f0 = np.array([b.f0 for b in blocks])
    f_span = np.array([b.f_span for b in blocks])
    ttis = np.array([b.duration_ms / b.shape.tti_ms for b in blocks])
    shape_ids = [b.shape.id for b in blocks]
    by_shape: dict[str, list[int]] = {}
    for idx, sid in enumerate(shape_ids):
        by_shape.setdefault(sid, []).append(idx)
    for k, svc in enumerate(services):
        ch = svc.channel
        for sid, idx in by_shape.items():
            idx = np.asarray(idx)
            shape = blocks[idx[0]].shape
            beta = isi_fraction(ch.profile, shape.cp_us)
            per_unit = _per_unit_rate(shape, svc.snr_db, ch.freq_gains, beta, cfg, ch.unit_bw_khz)
            csum = np.concatenate([[0.0], np.cumsum(per_unit)])
            rates[idx, k] = (csum[f0[idx] + f_span[idx]] - csum[f0[idx]]) * ttis[idx]
    return rates
