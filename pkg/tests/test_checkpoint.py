import struct

import numpy as np
import pytest

from deepksc.autoencoder import CaeArch, adam_step, backward, init_params
from deepksc.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from deepksc.errors import FormatError
from deepksc.grassmann import random_basis

SMALL = CaeArch(image_shape=(8, 8, 1), channels=(3, 2), kernels=(3, 3))


def trained_small():
    params = init_params(SMALL, 1)
    x = np.random.default_rng(0).uniform(size=(4, 8, 8, 1))
    for _ in range(3):
        adam_step(params, backward(params, x)[0])
    return params


def test_round_trip_bit_exact(tmp_path):
    params = trained_small()
    rng = np.random.default_rng(2)
    subs = [random_basis(SMALL.latent_dim, 3, rng) for _ in range(4)]
    path = tmp_path / "m.kscn"
    save_checkpoint(path, params, subs)
    back, back_subs = load_checkpoint(path)
    assert back.arch == SMALL and back.adam_t == 3
    for store in ("tensors", "adam_m", "adam_v"):
        for n in params.names:
            assert getattr(back, store)[n].tobytes() == getattr(params, store)[n].tobytes()
    assert [s.basis.tobytes() for s in back_subs] == [s.basis.tobytes() for s in subs]
    assert to_bytes(back, back_subs) == path.read_bytes()


def test_header_layout():
    buf = to_bytes(init_params(CaeArch(), 0))
    assert buf[:5] == b"KSCN\x01"
    fields = struct.unpack_from("<4I3I3II3I", buf, 5)
    assert fields == (28, 28, 1, 3, 20, 10, 5, 5, 3, 3, 2, 80, 0, 0)
    n_floats = 3 * sum(int(np.prod(s)) for s in CaeArch().param_shapes().values())
    assert len(buf) == 5 + 4 * 14 + 8 + 8 * n_floats


def test_no_subspaces(tmp_path):
    params = init_params(SMALL, 0)
    _, subs = from_bytes(to_bytes(params))
    assert subs == []


def test_corrupt_inputs():
    buf = to_bytes(init_params(SMALL, 0), [random_basis(SMALL.latent_dim, 1, np.random.default_rng(0))])
    with pytest.raises(FormatError, match="magic"):
        from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(FormatError, match="version"):
        from_bytes(buf[:4] + b"\x02" + buf[5:])
    with pytest.raises(FormatError, match="truncated"):
        from_bytes(buf[:-1])
    with pytest.raises(FormatError, match="truncated"):
        from_bytes(buf[:20])
    with pytest.raises(FormatError, match="trailing"):
        from_bytes(buf + b"\x00")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = tmp_path / "ck"
    save_checkpoint(path, init_params(SMALL, 0))
    save_checkpoint(path, init_params(SMALL, 1))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ck"]
    np.testing.assert_array_equal(load_checkpoint(path)[0].tensors["enc0.w"], init_params(SMALL, 1).tensors["enc0.w"])


def test_failed_write_keeps_old_file(tmp_path, monkeypatch):
    path = tmp_path / "ck"
    save_checkpoint(path, init_params(SMALL, 0))
    before = path.read_bytes()
    import deepksc.checkpoint as ck

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(ck.os, "replace", boom)
    with pytest.raises(OSError):
        save_checkpoint(path, init_params(SMALL, 1))
    assert path.read_bytes() == before
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ck"]
