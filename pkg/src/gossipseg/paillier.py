"""Additively homomorphic Paillier cryptosystem with fixed-point vectors.

Standard construction with ``g = n + 1``: encryption of ``m`` with blinding
``r`` is ``(1 + m*n) * r^n mod n^2``; decryption applies ``L(c^lambda mod
n^2) * mu mod n`` where ``L(x) = (x - 1) // n``.  Plaintexts here are
non-negative fixed-point encodings of values in ``[0, 1]``, so homomorphic
sums stay far below the modulus for desk-scale peer counts.
"""
from __future__ import annotations

import math
import random
import secrets
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyAggregationError,
    InvalidInputError,
    KeyMismatchError,
)

_MIN_KEY_BITS = 256
_MR_ROUNDS = 40


@dataclass(frozen=True)
class PaillierPublicKey:
    """Public modulus ``n`` and generator ``g = n + 1``."""

    n: int
    g: int

    @property
    def n_squared(self) -> int:
        return self.n * self.n


@dataclass(frozen=True)
class PaillierPrivateKey:
    """Carmichael-style exponent ``lam = phi(n)`` and ``mu = phi(n)^-1 mod n``."""

    lam: int
    mu: int


@dataclass(frozen=True)
class PaillierKeyPair:
    public: PaillierPublicKey
    private: PaillierPrivateKey


@dataclass(frozen=True)
class Ciphertext:
    """Encrypted value bound to the public modulus it was produced under."""

    value: int
    modulus: int


def _is_probable_prime(candidate: int, rng: random.Random) -> bool:
    if candidate < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if candidate % p == 0:
            return candidate == p
    d = candidate - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(_MR_ROUNDS):
        a = rng.randrange(2, candidate - 1)
        x = pow(a, d, candidate)
        if x in (1, candidate - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, candidate)
            if x == candidate - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if _is_probable_prime(candidate, rng):
            return candidate


def keygen(bits: int = 1024, seed: int | None = None) -> PaillierKeyPair:
    """Generate a key pair with an ``n`` of exactly ``bits`` bits.

    Args:
        bits: Modulus size; at least 256.
        seed: When given, keys are a deterministic function of the seed.
            Otherwise primes come from OS entropy.

    Returns:
        A :class:`PaillierKeyPair`.
    """
    if bits < _MIN_KEY_BITS:
        raise ConfigurationError(f"key size must be >= {_MIN_KEY_BITS} bits")
    rng = random.Random(seed) if seed is not None else secrets.SystemRandom()
    while True:
        p = _random_prime(bits // 2, rng)
        q = _random_prime(bits - bits // 2, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() == bits:
            break
    phi = (p - 1) * (q - 1)
    mu = pow(phi, -1, n)
    return PaillierKeyPair(
        public=PaillierPublicKey(n=n, g=n + 1),
        private=PaillierPrivateKey(lam=phi, mu=mu),
    )


def encrypt(
    m: int,
    pk: PaillierPublicKey,
    rng: random.Random | None = None,
) -> Ciphertext:
    """Encrypt integer ``m`` with fresh blinding randomness.

    Args:
        m: Plaintext in ``[0, n)``.
        pk: Public key.
        rng: Source of blinding randomness; OS entropy when omitted.

    Returns:
        A :class:`Ciphertext` under ``pk``.
    """
    if not 0 <= m < pk.n:
        raise InvalidInputError("plaintext outside [0, n)")
    draw = rng.randrange if rng is not None else secrets.SystemRandom().randrange
    while True:
        r = draw(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            break
    n_sq = pk.n_squared
    value = (1 + m * pk.n) % n_sq * pow(r, pk.n, n_sq) % n_sq
    return Ciphertext(value=value, modulus=pk.n)


def decrypt(c: Ciphertext, kp: PaillierKeyPair) -> int:
    """Recover the plaintext of ``c``; the key must match."""
    if c.modulus != kp.public.n:
        raise KeyMismatchError("ciphertext was produced under a different key")
    n = kp.public.n
    x = pow(c.value, kp.private.lam, kp.public.n_squared)
    return (x - 1) // n * kp.private.mu % n


def add(c1: Ciphertext, c2: Ciphertext, pk: PaillierPublicKey) -> Ciphertext:
    """Homomorphic addition: decrypts to the sum of the two plaintexts."""
    if c1.modulus != pk.n or c2.modulus != pk.n:
        raise KeyMismatchError("ciphertexts under different keys cannot be added")
    return Ciphertext(value=c1.value * c2.value % pk.n_squared, modulus=pk.n)


def encode_fixed(x: float, scale: int) -> int:
    """Map ``x`` in ``[0, 1]`` to ``round(x * scale)``."""
    if scale < 10**3:
        raise ConfigurationError("fixed-point scale must be >= 1000")
    if not 0.0 <= x <= 1.0 or not math.isfinite(x):
        raise InvalidInputError(f"value {x} outside [0, 1]")
    return round(x * scale)


def decode_fixed(v: int, scale: int) -> float:
    if scale < 10**3:
        raise ConfigurationError("fixed-point scale must be >= 1000")
    return v / scale


def encrypt_vector(
    xs: Sequence[float],
    pk: PaillierPublicKey,
    scale: int,
    rng: random.Random | None = None,
) -> list[Ciphertext]:
    """Fixed-point encode then encrypt each component."""
    return [encrypt(encode_fixed(float(x), scale), pk, rng) for x in xs]


def secure_mean(
    encrypted_vectors: Sequence[Sequence[Ciphertext]],
    count: int,
    kp: PaillierKeyPair,
    scale: int,
) -> np.ndarray:
    """Component-wise mean of encrypted fixed-point vectors.

    Ciphertexts are folded homomorphically, decrypted once per component,
    then decoded and divided by ``count``.

    Args:
        encrypted_vectors: One encrypted vector per contributor.
        count: Number of contributors; the divisor.
        kp: Key pair of the single decrypting party.
        scale: Fixed-point scale used at encryption time.

    Returns:
        Real-valued mean vector.
    """
    if count < 1 or len(encrypted_vectors) == 0:
        raise EmptyAggregationError("secure mean over zero contributors")
    if len(encrypted_vectors) != count:
        raise InvalidInputError(
            f"count {count} does not match {len(encrypted_vectors)} vectors"
        )
    if count * scale >= kp.public.n:
        raise ConfigurationError("modulus too small for contributor count * scale")
    width = len(encrypted_vectors[0])
    if any(len(vec) != width for vec in encrypted_vectors):
        raise InvalidInputError("encrypted vectors have differing lengths")
    out = np.empty(width, dtype=np.float64)
    for j in range(width):
        acc = encrypted_vectors[0][j]
        for vec in encrypted_vectors[1:]:
            acc = add(acc, vec[j], kp.public)
        out[j] = decode_fixed(decrypt(acc, kp), scale) / count
    return out
