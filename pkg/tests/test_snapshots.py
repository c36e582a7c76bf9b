"""Binary field snapshot format: bit-exact round trips and validation."""

import numpy as np
import pytest

from rotorwkb import (
    GridSpec,
    SimParams,
    WaveField,
    load_field,
    save_field,
    save_wavefield,
)
from rotorwkb.snapshots import MAGIC


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    grid = GridSpec((4.0, 6.0), (16, 32))
    values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    # awkward but representable floats must survive exactly
    values[0, 0] = 1e-308 + 1j * np.pi
    values[1, 2] = -0.1 + 0.3j
    path = tmp_path / "field.rsfw"
    save_field(path, values, grid, eps=0.1 + 1e-17, t=2.0 / 3.0, tag="probe")
    snap = load_field(path)
    assert snap.values.dtype == np.complex128
    np.testing.assert_array_equal(snap.values, values)
    assert snap.grid == grid
    assert snap.eps == 0.1 + 1e-17
    assert snap.t == 2.0 / 3.0
    assert snap.tag == "probe"


def test_round_trip_3d(tmp_path):
    rng = np.random.default_rng(12)
    grid = GridSpec.square(8, 2.0, dim=3)
    values = rng.standard_normal(grid.shape) * 1j
    path = tmp_path / "cube.rsfw"
    save_field(path, values, grid, eps=0.5, t=0.0)
    snap = load_field(path)
    np.testing.assert_array_equal(snap.values, values)
    assert snap.grid.dim == 3


def test_save_wavefield_carries_time_and_eps(tmp_path):
    grid = GridSpec.square(16, 4.0)
    params = SimParams(eps=0.125)
    psi = WaveField(np.ones(grid.shape, dtype=complex), 1.5, grid, params)
    path = tmp_path / "psi.rsfw"
    save_wavefield(path, psi)
    snap = load_field(path)
    assert snap.eps == 0.125
    assert snap.t == 1.5


def test_truncated_payload_rejected(tmp_path):
    grid = GridSpec.square(16, 4.0)
    path = tmp_path / "cut.rsfw"
    save_field(path, np.ones(grid.shape, dtype=complex), grid, eps=0.5, t=0.0)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(ValueError, match="payload"):
        load_field(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.rsfw"
    path.write_bytes(b"NOPE!\n" + b"\x00" * 64)
    with pytest.raises(ValueError, match="magic"):
        load_field(path)
    assert MAGIC.endswith(b"\n")


def test_mangled_header_rejected(tmp_path):
    grid = GridSpec.square(16, 4.0)
    path = tmp_path / "hdr.rsfw"
    save_field(path, np.ones(grid.shape, dtype=complex), grid, eps=0.5, t=0.0)
    blob = bytearray(path.read_bytes())
    # corrupt a byte inside the header region after the magic
    blob[len(MAGIC) + 2] = 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        load_field(path)
