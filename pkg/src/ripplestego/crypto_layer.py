"""Textbook RSA with a one-byte random pad, and the payload frame.

Not production cryptography: there is no OAEP and padding is minimal.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
import zlib
from dataclasses import dataclass

SUPPORTED_BITS = (64, 512, 1024, 2048)
MAGIC = b"STG1"
VERSION = 1
HEADER = struct.Struct(">4sBBII")  # magic, version, flags, plaintext length, crc32
FLAG_HISTMAP = 0x01
FLAG_MAPPING = 0x02


class IntegrityError(ValueError):
    """Frame parsed but the decrypted plaintext fails its CRC."""


class NoPayloadError(ValueError):
    """Bytes do not start with a recognisable frame."""


_SMALL_PRIMES = [p for p in range(3, 1000, 2) if all(p % q for q in range(3, int(p**0.5) + 1, 2))]


def is_probable_prime(n: int, rounds: int = 40, rng: random.Random | None = None) -> bool:
    """Miller-Rabin. Fixed witnesses make it exact below 3.3e24."""
    if n < 2:
        return False
    for p in [2] + _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    witnesses = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41]
    rng = rng or random.Random(n)
    witnesses += [rng.randrange(2, n - 1) for _ in range(max(0, rounds - len(witnesses)))]
    for a in witnesses:
        a %= n
        if a in (0, 1, n - 1):
            continue
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    while True:
        cand = rng.getrandbits(bits) | (0b11 << (bits - 2)) | 1
        if is_probable_prime(cand, rng=rng):
            return cand


@dataclass(frozen=True)
class RsaKeyPair:
    n: int
    e: int
    d: int
    bits: int

    @property
    def key_bytes(self) -> int:
        return (self.n.bit_length() + 7) // 8

    def public(self) -> "RsaKeyPair":
        return RsaKeyPair(self.n, self.e, 0, self.bits)


def keygen(bits: int, seed: int) -> RsaKeyPair:
    """Deterministic keypair: primes from a seeded search, e = 65537 or the next odd coprime."""
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bits must be one of {SUPPORTED_BITS}")
    rng = random.Random(f"rsa-keygen:{bits}:{seed}")
    half = bits // 2
    while True:
        p = _random_prime(half, rng)
        q = _random_prime(bits - half, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        lam = math.lcm(p - 1, q - 1)
        e = 65537
        while math.gcd(e, lam) != 1:
            e += 2
        return RsaKeyPair(n, e, pow(e, -1, lam), bits)


def _chunk_size(key_bytes: int) -> int:
    return key_bytes - 2


def encrypt(plaintext: bytes, key: RsaKeyPair, rng: random.Random | None = None, pad: bool = True) -> bytes:
    """Encrypt in fixed-width blocks of ``key_bytes``.

    Each block encodes ``pad_byte || chunk`` where chunk is ``key_bytes - 2`` bytes
    (the last one zero-filled). ``pad=False`` uses a zero pad byte for test vectors.
    """
    kb = key.key_bytes
    cs = _chunk_size(kb)
    rng = rng or random.Random(0)
    out = bytearray()
    for off in range(0, len(plaintext), cs):
        chunk = plaintext[off : off + cs].ljust(cs, b"\0")
        lead = rng.randrange(1, 256) if pad else 0
        m = int.from_bytes(bytes([lead]) + chunk, "big")
        out += pow(m, key.e, key.n).to_bytes(kb, "big")
    return bytes(out)


def decrypt(ciphertext: bytes, key: RsaKeyPair) -> bytes:
    """Inverse of ``encrypt``; returns zero-filled chunks (length comes from the frame)."""
    kb = key.key_bytes
    if len(ciphertext) % kb:
        raise NoPayloadError("ciphertext is not a whole number of key-width blocks")
    cs = _chunk_size(kb)
    out = bytearray()
    for off in range(0, len(ciphertext), kb):
        c = int.from_bytes(ciphertext[off : off + kb], "big")
        if c >= key.n:
            raise IntegrityError("payload corrupted")
        m = pow(c, key.d, key.n)
        if m.bit_length() > 8 * (cs + 1):
            raise IntegrityError("payload corrupted")
        out += (m % (1 << (8 * cs))).to_bytes(cs, "big")
    return bytes(out)


def cipher_length(plain_len: int, key_bytes: int) -> int:
    return -(-plain_len // _chunk_size(key_bytes)) * key_bytes


@dataclass
class Payload:
    version: int
    flags: int
    length: int
    crc: int
    ciphertext: bytes
    extra: bytes = b""


def frame(payload: Payload) -> bytes:
    head = HEADER.pack(MAGIC, payload.version, payload.flags, payload.length, payload.crc)
    tail = struct.pack(">I", len(payload.extra)) + payload.extra if payload.extra else b""
    return head + payload.ciphertext + tail


def parse_header(raw: bytes) -> tuple[int, int, int, int]:
    if len(raw) < HEADER.size:
        raise NoPayloadError("not a stego payload (truncated header)")
    magic, version, flags, length, crc = HEADER.unpack(raw[: HEADER.size])
    if magic != MAGIC:
        raise NoPayloadError("not a stego payload")
    if version != VERSION:
        raise NoPayloadError(f"unsupported payload version {version}")
    return version, flags, length, crc


def framed_length(raw_header: bytes, key_bytes: int, extra_len: int | None = None) -> int:
    """Total frame bytes implied by a header (and the extra-section length if any)."""
    _, flags, length, _ = parse_header(raw_header)
    n = HEADER.size + cipher_length(length, key_bytes)
    if flags & FLAG_HISTMAP:
        n += 4 + (extra_len or 0)
    return n


def unframe(raw: bytes, key_bytes: int) -> Payload:
    version, flags, length, crc = parse_header(raw)
    pos = HEADER.size
    clen = cipher_length(length, key_bytes)
    if len(raw) < pos + clen:
        raise NoPayloadError("truncated frame")
    cipher = raw[pos : pos + clen]
    pos += clen
    extra = b""
    if flags & FLAG_HISTMAP:
        if len(raw) < pos + 4:
            raise NoPayloadError("truncated frame")
        (elen,) = struct.unpack(">I", raw[pos : pos + 4])
        if len(raw) < pos + 4 + elen:
            raise NoPayloadError("truncated frame")
        extra = raw[pos + 4 : pos + 4 + elen]
    return Payload(version, flags, length, crc, cipher, extra)


def seal(plaintext: bytes, key: RsaKeyPair, rng: random.Random, extra: bytes = b"", flags: int = 0, pad: bool = True) -> bytes:
    if extra:
        flags |= FLAG_HISTMAP
    cipher = encrypt(plaintext, key, rng=rng, pad=pad)
    return frame(Payload(VERSION, flags, len(plaintext), zlib.crc32(plaintext), cipher, extra))


def open_payload(raw: bytes, key: RsaKeyPair) -> tuple[bytes, Payload]:
    p = unframe(raw, key.key_bytes)
    plain = decrypt(p.ciphertext, key)[: p.length]
    if len(plain) != p.length or zlib.crc32(plain) != p.crc:
        raise IntegrityError("payload corrupted or wrong key")
    return plain, p


def permutation_seed(n: int, salt: str = "scramble") -> int:
    """Seed for the block scramble, derived from the public modulus."""
    digest = hashlib.sha256(f"{salt}:{n}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def write_key(path, n: int, exponent: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"{n}\n{exponent}\n")


def read_key(path) -> tuple[int, int]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) != 2 or not all(ln.isdigit() for ln in lines):
        raise ValueError(f"{path}: key file must hold two decimal lines")
    return int(lines[0]), int(lines[1])
