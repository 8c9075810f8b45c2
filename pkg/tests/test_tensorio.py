import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidcompress.tensorio import MAGIC, TensorFileError, decode, encode, load_tensor, save_tensor


@settings(max_examples=30, deadline=None)
@given(shape=st.lists(st.integers(0, 5), min_size=0, max_size=4), seed=st.integers(0, 2**31))
def test_round_trip_is_bit_exact(shape, seed):
    a = np.random.default_rng(seed).normal(size=shape).astype(np.float32)
    b = decode(encode(a))
    assert b.shape == a.shape and b.tobytes() == a.tobytes()


def test_scalar_round_trips(tmp_path):
    save_tensor(tmp_path / "s.vct", np.float32(2.5))
    t = load_tensor(tmp_path / "s.vct")
    assert t.shape == () and t.data == np.float32(2.5)


def test_header_layout():
    buf = encode(np.zeros((2, 3), dtype=np.float32))
    assert buf[:4] == MAGIC
    assert buf[4:6] == b"\x01\x00" and buf[6] == 2
    assert buf[7:15] == b"\x02\x00\x00\x00\x03\x00\x00\x00"
    assert len(buf) == 15 + 24


@pytest.mark.parametrize("cut", [0, 3, 6, 10, 20])
def test_truncation_gives_structured_error(cut):
    buf = encode(np.ones((2, 3), dtype=np.float32))
    with pytest.raises(TensorFileError) as e:
        decode(buf[:cut])
    assert e.value.offset <= cut


def test_corruptions_are_reported_with_offsets():
    buf = bytearray(encode(np.ones(4, dtype=np.float32)))
    bad_magic = b"XXXX" + bytes(buf[4:])
    with pytest.raises(TensorFileError, match="magic") as e:
        decode(bad_magic)
    assert e.value.offset == 0
    bad_version = bytes(buf[:4]) + b"\x02\x00" + bytes(buf[6:])
    with pytest.raises(TensorFileError, match="version"):
        decode(bad_version)
    with pytest.raises(TensorFileError, match="trailing"):
        decode(bytes(buf) + b"\x00")
    huge_dim = bytes(buf[:7]) + b"\xff\xff\xff\xff" + bytes(buf[11:])
    with pytest.raises(TensorFileError):
        decode(huge_dim)


def test_random_byte_noise_never_crashes():
    rng = np.random.default_rng(0)
    good = encode(rng.normal(size=(3, 4)).astype(np.float32))
    for _ in range(200):
        buf = bytearray(good)
        for i in rng.integers(0, len(buf), size=3):
            buf[i] = rng.integers(0, 256)
        try:
            decode(bytes(buf[: rng.integers(0, len(buf) + 1)]))
        except TensorFileError:
            pass


def test_path_is_named_in_errors(tmp_path):
    p = tmp_path / "bad.vct"
    p.write_bytes(b"VCT")
    with pytest.raises(TensorFileError, match="bad.vct"):
        load_tensor(p)
