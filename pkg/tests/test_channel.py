import math

import numpy as np
import pytest
from conftest import flat_channel
from hypothesis import given
from hypothesis import strategies as st

from flexnum.channel import (
    EVA_DELAYS_US,
    ChannelRealization,
    MultipathProfile,
    RateConfig,
    block_rate,
    isi_fraction,
    rate_matrix,
    realize_channel,
)
from flexnum.grid import SHAPE_1, SHAPE_2, SHAPE_3, SHAPE_3E, ResourceGrid, enumerate_blocks
from flexnum.instance import CAPACITY, Service

EVA = MultipathProfile()
PLAIN = RateConfig(overhead_symbols=0, guardband_fraction=0.0, ici_penalty=1.0)


def _block(shape, n_freq=4, n_time=4):
    return enumerate_blocks(ResourceGrid.of_size(n_time, n_freq), [shape])[0]


def test_closed_form_84_bits():
    b = _block(SHAPE_1)
    assert block_rate(b, 0.0, flat_channel(4), PLAIN) == pytest.approx(84.0)


def test_rate_vanishes_at_very_low_snr():
    b = _block(SHAPE_1)
    assert block_rate(b, -300.0, flat_channel(4), PLAIN) < 1e-20


def test_single_tap_is_flat():
    ch = realize_channel(MultipathProfile((0.0,), (0.0,)), 32, 180.0, seed=5)
    assert np.allclose(ch.freq_gains, ch.freq_gains[0])


def test_realization_deterministic():
    a = realize_channel(EVA, 11, 180.0, 42)
    b = realize_channel(EVA, 11, 180.0, 42)
    assert a == b
    assert not np.array_equal(a.freq_gains, realize_channel(EVA, 11, 180.0, 43).freq_gains)


def test_eva_gain_statistics():
    gains = np.array([realize_channel(EVA, 64, 180.0, s).freq_gains for s in range(100)])
    assert (gains > 0).all()
    assert gains.var(axis=1).min() > 0
    # normalisation holds on average over realizations
    assert abs(gains.mean() - 1.0) < 0.05


def test_isi_examples():
    assert isi_fraction(EVA, SHAPE_1.cp_us) == 0.0
    assert isi_fraction(EVA, SHAPE_3E.cp_us) == 0.0
    beta3 = isi_fraction(EVA, SHAPE_3.cp_us)
    p = EVA.linear_powers
    assert beta3 == pytest.approx(p[np.asarray(EVA_DELAYS_US) > 1.2].sum())
    assert beta3 > 0
    assert isi_fraction(EVA, 0.0) == pytest.approx(1.0 - p[0])


@given(cp=st.floats(0, 5), dcp=st.floats(0, 5))
def test_isi_monotone_in_cp(cp, dcp):
    assert isi_fraction(EVA, cp + dcp) <= isi_fraction(EVA, cp)


def test_isi_steps_only_at_tap_delays():
    edges = list(EVA_DELAYS_US) + [10.0]
    for lo, hi in zip(edges, edges[1:]):
        # constant on [delay, next delay)
        values = {isi_fraction(EVA, c) for c in np.linspace(lo, hi, 50)[:-1]}
        assert len(values) == 1
    for d in EVA_DELAYS_US[1:]:
        assert isi_fraction(EVA, np.nextafter(d, 0.0)) > isi_fraction(EVA, d)


def test_shape3e_beats_shape3_at_high_snr():
    ch = realize_channel(EVA, 4, 180.0, 1)
    cfg = RateConfig()
    r3 = block_rate(_block(SHAPE_3), 30.0, ch, cfg)
    r3e = block_rate(_block(SHAPE_3E), 30.0, ch, cfg)
    assert r3e > r3


def test_rate_monotone_on_1000_point_sweep():
    ch = realize_channel(EVA, 8, 180.0, 9)
    for shape in (SHAPE_1, SHAPE_2, SHAPE_3, SHAPE_3E):
        b = _block(shape, n_freq=8)
        r = [block_rate(b, s, ch, RateConfig()) for s in np.linspace(-20, 40, 1000)]
        assert np.all(np.diff(r) >= 0)


@given(snr=st.floats(-20, 40), overhead=st.integers(0, 5), gb=st.floats(0, 0.9), d=st.floats(0, 0.09))
def test_rate_monotone_in_losses(snr, overhead, gb, d):
    ch = realize_channel(EVA, 4, 180.0, 3)
    b = _block(SHAPE_2)
    base = block_rate(b, snr, ch, RateConfig(overhead, gb))
    assert base >= 0
    assert block_rate(b, snr, ch, RateConfig(overhead + 1, gb)) <= base
    assert block_rate(b, snr, ch, RateConfig(overhead, gb + d)) <= base + 1e-12


@given(snr=st.floats(-10, 30), beta_cp=st.floats(0, 3))
def test_rate_nonincreasing_in_isi(snr, beta_cp):
    shape_lo = SHAPE_3
    ch = realize_channel(EVA, 4, 180.0, 2)
    b = _block(shape_lo)
    r = block_rate(b, snr, ch, PLAIN)
    # zero ISI upper-bounds any positive ISI on the same block
    no_isi = ChannelRealization(ch.freq_gains, 0, MultipathProfile((0.0,), (0.0,)), 180.0)
    assert block_rate(b, snr, no_isi, PLAIN) >= r - 1e-12


def test_rate_additive_over_frequency_units():
    ch = realize_channel(EVA, 8, 180.0, 4)
    g = ResourceGrid.of_size(1, 8)
    wide = [b for b in enumerate_blocks(g, [SHAPE_3]) if b.f0 == 2][0]
    cfg = RateConfig()
    narrow = enumerate_blocks(g, [SHAPE_3], subcarriers_per_block=3)
    total = sum(block_rate(b, 15.0, ch, cfg) for b in narrow if 2 <= b.f0 < 6)
    assert block_rate(wide, 15.0, ch, cfg) == pytest.approx(total)


def test_rate_matrix_matches_block_rate():
    g = ResourceGrid.of_size(4, 6)
    blocks = enumerate_blocks(g, [SHAPE_1, SHAPE_2, SHAPE_3, SHAPE_3E])
    services = [Service(k, CAPACITY, 5.0 + 7 * k, channel=realize_channel(EVA, 6, 180.0, k)) for k in range(3)]
    m = rate_matrix(blocks, services, RateConfig())
    for b in blocks:
        for k, s in enumerate(services):
            assert m[b.id, k] == pytest.approx(block_rate(b, s.snr_db, s.channel, RateConfig()))


def test_block_outside_channel_rejected():
    b = _block(SHAPE_3, n_freq=8)
    with pytest.raises(ValueError):
        block_rate(b, 10.0, flat_channel(2), PLAIN)


def test_invalid_profile_and_config():
    with pytest.raises(ValueError):
        MultipathProfile((), ())
    with pytest.raises(ValueError):
        MultipathProfile((0.0, 1.0), (0.0,))
    with pytest.raises(ValueError):
        MultipathProfile((0.5, 1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        RateConfig(guardband_fraction=1.0)
    with pytest.raises(ValueError):
        RateConfig(ici_penalty=0.5)
    with pytest.raises(ValueError):
        block_rate(_block(SHAPE_1), math.inf, flat_channel(4), PLAIN)
