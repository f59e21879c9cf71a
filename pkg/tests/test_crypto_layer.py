import math
import random
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ripplestego import crypto_layer as cl


def square_multiply(base, exp, mod):
    out = 1
    base %= mod
    for bit in bin(exp)[2:]:
        out = out * out % mod
        if bit == "1":
            out = out * base % mod
    return out


def test_keygen_deterministic():
    assert cl.keygen(64, 5) == cl.keygen(64, 5)
    assert cl.keygen(64, 5) != cl.keygen(64, 6)


def test_keygen_rejects_bits():
    with pytest.raises(ValueError):
        cl.keygen(100, 0)


def test_keygen_exponent_rule():
    sympy = pytest.importorskip("sympy")
    for seed in range(10):
        key = cl.keygen(64, seed)
        (p, _), (q, _) = sorted(sympy.factorint(key.n).items())
        lam = math.lcm(p - 1, q - 1)
        assert p != q and key.n.bit_length() == 64
        cand = 65537
        while math.gcd(cand, lam) != 1:
            cand += 2
        assert key.e == cand
        assert key.e * key.d % lam == 1


def test_prime_test_known_values():
    assert cl.is_probable_prime(2**61 - 1)
    assert not cl.is_probable_prime(561)  # Carmichael
    assert not cl.is_probable_prime(2**61 + 1)


def test_raw_block_inverse():
    key = cl.keygen(64, 2)
    rng = random.Random(0)
    for _ in range(1000):
        c = rng.randrange(key.n)
        assert pow(pow(c, key.d, key.n), key.e, key.n) == c


def test_single_byte_oracle():
    key = cl.keygen(64, 3)
    kb = key.key_bytes
    ct = cl.encrypt(b"\x5a", key, pad=False)
    m = int.from_bytes(b"\x00\x5a" + bytes(kb - 3), "big")
    assert ct == square_multiply(m, key.e, key.n).to_bytes(kb, "big")


def test_empty_plaintext():
    key = cl.keygen(64, 0)
    assert cl.encrypt(b"", key) == b""
    raw = cl.seal(b"", key, random.Random(0))
    plain, payload = cl.open_payload(raw, key)
    assert plain == b"" and payload.length == 0


@given(st.binary(max_size=10_000))
@settings(max_examples=25, deadline=None)
def test_round_trip(data):
    key = cl.keygen(512, 1)
    raw = cl.seal(data, key, random.Random(len(data)))
    assert cl.open_payload(raw, key)[0] == data


def test_tampered_ciphertext_detected():
    key = cl.keygen(512, 1)
    raw = bytearray(cl.seal(b"secret patient record", key, random.Random(1)))
    raw[cl.HEADER.size + 5] ^= 0x10
    with pytest.raises(cl.IntegrityError):
        cl.open_payload(bytes(raw), key)


def test_wrong_key_detected():
    good = cl.keygen(64, 1)
    failures = 0
    for t in range(100):
        bad = cl.keygen(64, 1000 + t)
        raw = cl.seal(random.Random(t).randbytes(20), good, random.Random(t))
        try:
            cl.open_payload(raw, bad)
        except (cl.IntegrityError, cl.NoPayloadError):
            failures += 1
    assert failures == 100


def test_frame_round_trip_and_errors():
    p = cl.Payload(cl.VERSION, cl.FLAG_HISTMAP, 3, zlib.crc32(b"abc"), bytes(8), b"map")
    raw = cl.frame(p)
    assert cl.unframe(raw, 8) == p
    assert cl.framed_length(raw[: cl.HEADER.size], 8, 3) == len(raw)
    with pytest.raises(cl.NoPayloadError):
        cl.unframe(raw[:-1], 8)
    with pytest.raises(cl.NoPayloadError):
        cl.unframe(b"XXXX" + raw[4:], 8)
    with pytest.raises(cl.NoPayloadError):
        cl.unframe(raw[:4] + b"\x09" + raw[5:], 8)


@given(st.binary(max_size=64))
@settings(max_examples=200, deadline=None)
def test_unframe_fuzz(blob):
    try:
        p = cl.unframe(blob, 8)
    except cl.NoPayloadError:
        return
    assert len(p.ciphertext) + len(p.extra) <= len(blob)


def test_key_file_round_trip(tmp_path):
    path = tmp_path / "k.pub"
    cl.write_key(path, 3233, 17)
    assert cl.read_key(path) == (3233, 17)
    path.write_text("abc\n")
    with pytest.raises(ValueError):
        cl.read_key(path)
