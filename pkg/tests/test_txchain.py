import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebpcal import txchain
from ebpcal.txchain import (BlockSource, ChannelModel, apply_channel, generate_symbols, gray_bits,
                            pam_levels, qam_ber, raised_cosine, snr_for_target_ber)


@pytest.mark.parametrize("mod", [4, 16, 64, 256])
def test_unit_average_energy(mod):
    lv = pam_levels(mod)
    assert 2 * np.mean(lv**2) == pytest.approx(1.0)


@given(st.sampled_from([1, 2, 3, 4]))
def test_gray_neighbours_differ_in_one_bit(k):
    bits = gray_bits(np.arange(2**k), k)
    assert np.all(np.sum(bits[1:] != bits[:-1], axis=1) == 1)


def test_symbols_reproducible():
    a = generate_symbols(64, 100, seed=3)
    b = generate_symbols(64, 100, seed=3)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert a.bits.shape == (4, 100, 3)


def test_raised_cosine_nyquist_zero_crossings():
    h = raised_cosine(0.1, 32)
    c = h.size // 2
    assert h[c] == 1.0
    np.testing.assert_allclose(h[c + 2::2], 0.0, atol=1e-12)


@pytest.mark.parametrize("mod,snr_db", [(4, 9.80), (64, 22.55)])
def test_snr_for_target_ber(mod, snr_db):
    snr = snr_for_target_ber(mod, 1e-3)
    assert 10 * np.log10(snr) == pytest.approx(snr_db, abs=0.01)
    assert qam_ber(mod, snr) == pytest.approx(1e-3, rel=1e-6)


def test_snr_for_unreachable_target():
    with pytest.raises(ValueError):
        snr_for_target_ber(64, 0.5)


def test_channel_file_round_trip(tmp_path):
    ch = ChannelModel.rotation(0.3, 0.5)
    ch.to_file(tmp_path / "c.json")
    back = ChannelModel.from_file(tmp_path / "c.json")
    np.testing.assert_allclose(back.taps, ch.taps, atol=1e-15)
    assert set(json.loads((tmp_path / "c.json").read_text())) == {"h11", "h12", "h21", "h22"}


def test_identity_channel_noiseless_recovers_symbols():
    stream = generate_symbols(16, 200, seed=1)
    pulse = raised_cosine(0.1, 32)
    lanes = apply_channel(stream, ChannelModel.identity(), pulse)
    c = pulse.size // 2
    np.testing.assert_allclose(lanes[:, c: c + 2 * 150: 2], stream.lane_values[:, :150], atol=1e-12)


def test_block_source_is_random_access():
    src = BlockSource(64, ChannelModel.identity(), raised_cosine(0.1, 32), 256, 40, 2, 0.01, 1.0, seed=5)
    a, _ = src.block(3)
    src.block(0)
    b, _ = src.block(3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (4, 40 + 256 + 2)


def test_noise_variance_matches_target():
    assert txchain.set_noise_for_target_ber(64, 0) == 0.0
    assert txchain.set_noise_for_target_ber(64, 1e-3) == pytest.approx(1 / snr_for_target_ber(64, 1e-3))
