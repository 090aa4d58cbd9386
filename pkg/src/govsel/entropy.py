"""Commit-reveal handling of run entropy and labelled deterministic streams.

Entropy is committed before the scorer runs and is only readable after
:func:`reveal` verifies it against the commitment.  Streams for different
purposes are derived as ``sha256(entropy || label)`` so that knowledge of one
stream says nothing about another.
"""

from __future__ import annotations

import hashlib
import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, TypeVar

if TYPE_CHECKING:
    from .audit import EventTrail

T = TypeVar("T")

# CEFL is the only governed component allowed a stream before reveal
PRE_REVEAL_LABELS = frozenset({"cefl"})


class EntropyError(Exception):
    pass


class EntropyAccessError(EntropyError):
    """Entropy bytes were requested while the envelope is still committed."""


class CommitmentMismatch(EntropyError):
    pass


class ProtocolOrderError(EntropyError):
    pass


class EnvelopeState(str, Enum):
    COMMITTED = "COMMITTED"
    REVEALED = "REVEALED"


def commitment_of(entropy: bytes, nonce: bytes) -> bytes:
    return hashlib.sha256(entropy + nonce).digest()


class EntropyEnvelope:
    """Committed randomness for one run."""

    __slots__ = ("_entropy", "nonce", "commitment", "state", "run_id")

    def __init__(self, entropy: bytes, nonce: bytes, commitment: bytes, run_id: str = "") -> None:
        if len(entropy) != 32 or len(nonce) != 16 or len(commitment) != 32:
            raise ValueError("entropy/nonce/commitment must be 32/16/32 bytes")
        self._entropy = entropy
        self.nonce = nonce
        self.commitment = commitment
        self.state = EnvelopeState.COMMITTED
        self.run_id = run_id

    @property
    def entropy(self) -> bytes:
        if self.state is not EnvelopeState.REVEALED:
            raise EntropyAccessError("entropy is sealed until reveal")
        return self._entropy

    @property
    def commitment_hex(self) -> str:
        return self.commitment.hex()

    def governed_stream(self, label: str) -> RandomStream:
        """Stream for a governed pre-reveal consumer; never exposes the bytes."""
        if label not in PRE_REVEAL_LABELS:
            raise EntropyAccessError(f"stream {label!r} is not available before reveal")
        return RandomStream(label, _stream_seed(self._entropy, label))

    def leak(self) -> VerifiedEntropy:
        """Hand the raw entropy out ahead of reveal (entropy-exposure ablation only)."""
        return VerifiedEntropy(self._entropy, self.commitment, leaked=True)


@dataclass(frozen=True)
class VerifiedEntropy:
    value: bytes = field(repr=False)
    commitment: bytes
    leaked: bool = False

    def hex(self) -> str:
        return self.value.hex()


def commit(seed: int, run_id: str, *, stream_key: str | None = None) -> EntropyEnvelope:
    """Derive replayable entropy for ``(seed, stream_key or run_id)`` and seal it.

    Runs sharing a ``stream_key`` draw identical entropy, which lets the
    harness compare ablations on common random numbers.
    """
    material = f"{seed}:{run_id if stream_key is None else stream_key}".encode()
    entropy = hashlib.sha256(b"govsel/entropy:" + material).digest()
    nonce = hashlib.sha256(b"govsel/nonce:" + material).digest()[:16]
    return EntropyEnvelope(entropy, nonce, commitment_of(entropy, nonce), run_id)


def reveal(env: EntropyEnvelope, trail: EventTrail) -> VerifiedEntropy:
    """Open ``env`` once the scorer output is on ``trail``.

    Raises :class:`ProtocolOrderError` if scoring has not been logged or the
    envelope was already opened, and :class:`CommitmentMismatch` if the
    commitment no longer matches the sealed entropy.
    """
    if env.state is EnvelopeState.REVEALED:
        raise ProtocolOrderError("envelope already revealed")
    if not trail.has("score"):
        raise ProtocolOrderError("reveal requested before scorer output was logged")
    if commitment_of(env._entropy, env.nonce) != env.commitment:
        raise CommitmentMismatch(f"commitment mismatch for run {env.run_id!r}")
    env.state = EnvelopeState.REVEALED
    return VerifiedEntropy(env._entropy, env.commitment)


def _stream_seed(entropy: bytes, label: str) -> int:
    return int.from_bytes(hashlib.sha256(entropy + label.encode()).digest(), "big")


class RandomStream:
    """Single-consumer deterministic stream keyed by entropy and label."""

    def __init__(self, label: str, seed: int) -> None:
        self.label = label
        self._rng = random.Random(seed)

    def random(self) -> float:
        return self._rng.random()

    def randbelow(self, n: int) -> int:
        return self._rng.randrange(n)

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self._rng.randrange(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def shuffled(self, items: Sequence[T]) -> list[T]:
        return [items[i] for i in self.permutation(len(items))]


def derive_stream(entropy: VerifiedEntropy, label: str) -> RandomStream:
    if not isinstance(entropy, VerifiedEntropy):
        raise TypeError("streams derive only from revealed entropy")
    return RandomStream(label, _stream_seed(entropy.value, label))

