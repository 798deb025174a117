import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkgaka.errors import ConfigurationError, FormatError, GridUnderflowError, KeyEstablishmentError
from qkgaka.qk_grid import (
    GridLayout,
    QkGrid,
    construct_layout,
    count_unique_keys,
    deserialize,
    hexdump,
    populate,
    run_grid_generation,
    serialize,
)
from qkgaka.qkd_link import ChannelConfig


def _stream(nbits, seed=0):
    return np.random.default_rng(seed).integers(0, 2, nbits, dtype=np.uint8)


@pytest.mark.parametrize("n", [0, 1, 2, 4, 10, -3])
def test_bad_sides(n):
    with pytest.raises(ConfigurationError):
        construct_layout(n, 0)


def test_layout_for_three():
    lay = construct_layout(3, 1)
    assert sorted(lay.null_cols) == [0, 1, 2]
    assert lay.column_widths == (8, 16, 24)
    assert lay.required_bits == 2 * (8 + 16 + 24)
    assert len(list(lay.cells())) == 6


def test_layout_rejects_non_permutation():
    with pytest.raises(ConfigurationError):
        GridLayout(3, (0, 0, 1))


def test_populate_fills_row_major():
    lay = GridLayout(3, (0, 1, 2))
    raw = bytes(range(12))
    bits = np.unpackbits(np.frombuffer(raw, np.uint8))
    g = populate(lay, bits)
    # row 0 skips col 0: (0,1)=2 bytes, (0,2)=3 bytes; row 1 skips col 1; ...
    assert g.cell(0, 0) is None
    assert g.cell(0, 1) == raw[0:2]
    assert g.cell(0, 2) == raw[2:5]
    assert g.cell(1, 0) == raw[5:6]
    assert g.cell(1, 2) == raw[6:9]
    assert g.cell(2, 0) == raw[9:10]
    assert g.cell(2, 1) == raw[10:12]
    assert g.source_digest == hashlib.sha256(raw).hexdigest()
    assert g.total_bits == 96


def test_populate_underflow():
    lay = construct_layout(5, 0)
    with pytest.raises(GridUnderflowError) as ei:
        populate(lay, _stream(lay.required_bits - 1))
    assert ei.value.required == lay.required_bits
    assert ei.value.provided == lay.required_bits - 1


def test_extra_bits_are_ignored():
    lay = construct_layout(3, 0)
    s = _stream(500)
    assert populate(lay, s) == populate(lay, s[: lay.required_bits])


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([3, 5, 7, 9, 11]), st.integers(0, 2**63))
def test_serialization_roundtrip(n, seed):
    lay = construct_layout(n, seed)
    g = populate(lay, _stream(lay.required_bits, seed % 1000))
    blob = serialize(g)
    assert blob[:4] == b"QKG1"
    h = deserialize(blob)
    assert h == g
    assert h.source_digest == g.source_digest


def test_deserialize_errors():
    g = populate(construct_layout(3, 0), _stream(96))
    blob = serialize(g)
    with pytest.raises(FormatError):
        deserialize(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        deserialize(blob[:-1])
    with pytest.raises(FormatError):
        deserialize(blob[:8])
    bad = bytearray(blob)
    bad[6:8] = bad[8:10]  # duplicate null column
    with pytest.raises(FormatError):
        deserialize(bytes(bad))


def test_hexdump_shape():
    g = populate(construct_layout(5, 2), _stream(construct_layout(5, 2).required_bits))
    text = hexdump(g)
    lines = text.splitlines()
    assert len(lines) == 2 + 5
    assert all(line.count("--") == 1 for line in lines[2:])


def test_grid_generation_is_deterministic():
    cfg = ChannelConfig(8192, rng_seed=11)
    assert serialize(run_grid_generation(cfg, 7)) == serialize(run_grid_generation(cfg, 7))


def test_grid_generation_gives_up_under_attack():
    with pytest.raises(KeyEstablishmentError):
        run_grid_generation(ChannelConfig(8192, eavesdropper_fraction=1.0, rng_seed=1), 3, retries=2)


def test_grid_is_immutable():
    g = populate(construct_layout(3, 0), _stream(96))
    with pytest.raises(TypeError):
        g.cells[(0, 0)] = b"x"


def test_count_unique_keys_small():
    g = run_grid_generation(ChannelConfig(8192, rng_seed=3), 3)
    assert count_unique_keys(g, 200, 0) == 200
    with pytest.raises(ConfigurationError):
        count_unique_keys(g, 0, 0)


def test_qkgrid_equality_ignores_digest_object_identity():
    lay = construct_layout(3, 0)
    s = _stream(96)
    assert populate(lay, s) == populate(lay, s.copy())
    assert isinstance(populate(lay, s), QkGrid)
