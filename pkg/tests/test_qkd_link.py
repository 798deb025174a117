import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkgaka.errors import ConfigurationError, EstimationError, ProtocolError
from qkgaka.qkd_link import (
    POLARIZATION_STATE,
    Basis,
    ChannelConfig,
    Decision,
    PartyRecord,
    PhotonBatch,
    PolarizedPhoton,
    apply_eavesdropper,
    bits_to_hex,
    detect_eavesdropper,
    encode,
    generate_transmission,
    hex_to_bits,
    measure,
    measure_batch,
    party_streams,
    run_exchange,
    sift,
    write_transcript_csv,
)


def test_encoding_table():
    assert encode(0, Basis.R) == 0
    assert encode(1, Basis.R) == 90
    assert encode(0, Basis.S) == 45
    assert encode(1, Basis.S) == 135
    assert {POLARIZATION_STATE[encode(b, B)] for b in (0, 1) for B in Basis} == {"h", "v", "rp", "lp"}


def test_photon_validation():
    p = PolarizedPhoton.from_bit(1, Basis.S)
    assert p.angle == 135 and p.state == "lp"
    with pytest.raises((ConfigurationError, ValueError)):
        PolarizedPhoton(2, Basis.R, 0)


def test_matching_basis_measurement_is_exact():
    rng = np.random.default_rng(0)
    for bit in (0, 1):
        for basis in Basis:
            p = PolarizedPhoton.from_bit(bit, basis)
            assert all(measure(p, basis, rng) == bit for _ in range(50))


def test_mismatched_basis_is_a_fair_coin():
    rng = np.random.default_rng(1)
    p = PolarizedPhoton.from_bit(0, Basis.R)
    ones = sum(measure(p, Basis.S, rng) for _ in range(4000))
    assert abs(ones / 4000 - 0.5) < 0.04


def test_channel_config_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        ChannelConfig(0)
    with pytest.raises(ConfigurationError):
        ChannelConfig(10, noise_flip_prob=1.5)
    with pytest.raises(ConfigurationError):
        ChannelConfig(10, eavesdropper_fraction=-0.1)


def test_party_streams_are_independent_and_reproducible():
    a, b = party_streams(7), party_streams(7)
    assert list(a) == ["sender", "receiver", "eavesdropper", "channel", "sampler"]
    for name in a:
        assert a[name].integers(0, 2**32) == b[name].integers(0, 2**32)
    c = party_streams(7)
    draws = {name: c[name].integers(0, 2**32) for name in c}
    assert len(set(draws.values())) == len(draws)


def test_batch_roundtrip_with_objects():
    batch = generate_transmission(ChannelConfig(64, rng_seed=3))
    assert PhotonBatch.from_photons(list(batch)) == batch
    assert batch.bits.flags.writeable is False


def test_zero_fraction_eavesdropper_is_identity():
    batch = generate_transmission(ChannelConfig(100, rng_seed=1))
    assert apply_eavesdropper(batch, 0.0, np.random.default_rng(0)) is batch


def test_sift_keeps_only_matching_bases():
    sender = PartyRecord(np.array([0, 1, 1, 0]), np.array([0, 0, 1, 1]))
    receiver = PartyRecord(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 0]))
    key = sift(sender, receiver, sample_fraction=0.0)
    assert key.retained_indices.tolist() == [0, 2]
    assert key.bits_sender.tolist() == [0, 1]
    assert key.qber is None
    with pytest.raises(EstimationError):
        detect_eavesdropper(key)


def test_sift_length_mismatch():
    with pytest.raises(ProtocolError):
        sift(PartyRecord([0, 1], [0, 0]), PartyRecord([0], [0]), 0.0)


def test_sample_bits_are_removed_from_final_key():
    ex = run_exchange(ChannelConfig(4000, rng_seed=5))
    key = ex.key
    n_ret = len(key.retained_indices)
    assert len(key.sample_indices) == round(0.25 * n_ret)
    assert key.final_sender.size == n_ret - len(key.sample_indices)
    assert set(key.sample_indices.tolist()) <= set(key.retained_indices.tolist())


def test_threshold_boundary_aborts_at_equality():
    sender = PartyRecord(np.zeros(8, np.uint8), np.zeros(8, np.uint8))
    rx = PartyRecord(np.array([1, 0, 0, 0, 0, 0, 0, 0]), np.zeros(8, np.uint8))
    key = sift(sender, rx, 1.0, np.random.default_rng(0))
    assert key.qber == pytest.approx(0.125)
    assert detect_eavesdropper(key, 0.125) is Decision.ABORT
    assert detect_eavesdropper(key, 0.13) is Decision.ACCEPT


def test_clean_exchange_has_no_errors():
    ex = run_exchange(ChannelConfig(10_000, rng_seed=2))
    assert ex.accepted
    assert ex.key.qber == 0.0
    assert np.array_equal(ex.key.final_sender, ex.key.final_receiver)


def test_noise_raises_qber():
    ex = run_exchange(ChannelConfig(50_000, noise_flip_prob=0.05, rng_seed=2))
    assert 0.03 < ex.key.qber < 0.07
    assert ex.accepted


def test_tiny_exchange_without_sample_aborts():
    ex = run_exchange(ChannelConfig(1, rng_seed=0))
    assert not ex.accepted


def test_exchange_is_deterministic():
    cfg = ChannelConfig(2000, 0.01, 0.3, 99)
    a, b = run_exchange(cfg), run_exchange(cfg)
    assert a.key == b.key and a.sent == b.sent and a.decision == b.decision


def test_transcript_csv():
    ex = run_exchange(ChannelConfig(20, rng_seed=1))
    buf = io.StringIO()
    write_transcript_csv(ex, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "index,sender_bit,sender_basis,receiver_basis,receiver_bit,retained,sampled"
    assert len(lines) == 21
    retained = sum(int(line.split(",")[5]) for line in lines[1:])
    assert retained == len(ex.key.retained_indices)


@given(st.lists(st.integers(0, 1), max_size=200))
def test_hex_roundtrip(bits):
    h, n = bits_to_hex(bits)
    assert n == len(bits)
    assert hex_to_bits(h, n).tolist() == bits


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3000), st.floats(0, 1), st.integers(0, 2**32))
def test_sift_properties(n, eve, seed):
    ex = run_exchange(ChannelConfig(n, 0.0, eve, seed))
    key = ex.key
    sent, rx = ex.sent, ex.receiver
    assert np.all(sent.bases[key.retained_indices] == rx.bases[key.retained_indices])
    assert key.bits_sender.size == key.bits_receiver.size == len(key.retained_indices)
    if key.qber is not None:
        assert 0.0 <= key.qber <= 1.0
    if eve == 0.0:
        assert key.error_rate == 0.0


def test_measure_batch_shape_check():
    batch = generate_transmission(ChannelConfig(5, rng_seed=0))
    with pytest.raises(ProtocolError):
        measure_batch(batch, np.zeros(4, np.uint8), np.random.default_rng(0))
