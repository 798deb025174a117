"""Simulated QK-S to QK-GRID quantum channel.

A BB84-style exchange over two polarization bases, R (0/90 degrees) and
S (45/135 degrees). The sender draws random bits and bases, the receiver
measures in its own random bases, both sides sift over a public channel and
sacrifice a seeded sample of the sifted bits to estimate the bit error rate.

Every exchange is a pure function of its :class:`ChannelConfig`. Randomness
comes from numpy's PCG64 generator keyed by a :class:`numpy.random.SeedSequence`
built from ``rng_seed``; the sequence is spawned into one child stream per
simulated party, always in the order given by :data:`PARTY_STREAMS`.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, EstimationError, ProtocolError

#: Child streams spawned from the exchange seed, in spawn order.
PARTY_STREAMS = ("sender", "receiver", "eavesdropper", "channel", "sampler")

DEFAULT_SAMPLE_FRACTION = 0.25
#: Abort threshold used unless the caller asks for another one. The literal
#: 25% rule is exposed as :data:`LITERAL_THRESHOLD`.
DEFAULT_THRESHOLD = 0.20
LITERAL_THRESHOLD = 0.25


class Basis(enum.IntEnum):
    R = 0  # rectilinear
    S = 1  # diagonal


# (bit, basis) -> polarization angle in degrees
_ANGLE = {
    (0, Basis.R): 0,
    (1, Basis.R): 90,
    (0, Basis.S): 45,
    (1, Basis.S): 135,
}
_ANGLE_TABLE = np.array([[0, 45], [90, 135]], dtype=np.int16)  # [bit, basis]

POLARIZATION_STATE = {0: "h", 90: "v", 45: "rp", 135: "lp"}


def encode(bit: int, basis: Basis) -> int:
    """Return the polarization angle that carries ``bit`` in ``basis``."""
    try:
        return _ANGLE[(int(bit), Basis(basis))]
    except (KeyError, ValueError):
        raise ConfigurationError(f"cannot encode bit={bit!r} in basis={basis!r}") from None


@dataclass(frozen=True)
class PolarizedPhoton:
    bit: int
    basis: Basis
    angle: int

    def __post_init__(self):
        if encode(self.bit, self.basis) != self.angle:
            raise ConfigurationError(
                f"angle {self.angle} does not encode bit {self.bit} in basis {self.basis.name}"
            )

    @classmethod
    def from_bit(cls, bit: int, basis: Basis) -> "PolarizedPhoton":
        return cls(int(bit), Basis(basis), encode(bit, basis))

    @property
    def state(self) -> str:
        return POLARIZATION_STATE[self.angle]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.uint8, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PhotonBatch:
    """A run of photons stored column-wise.

    ``bits`` and ``bases`` are read-only uint8 arrays. Iterating yields
    :class:`PolarizedPhoton` objects, which is convenient but slow; the
    simulation itself only ever touches the arrays.
    """

    bits: np.ndarray
    bases: np.ndarray

    def __post_init__(self):
        bits, bases = _frozen(self.bits), _frozen(self.bases)
        if bits.shape != bases.shape or bits.ndim != 1:
            raise ProtocolError("bits and bases must be 1-D arrays of equal length")
        if bits.size and (bits.max() > 1 or bases.max() > 1):
            raise ConfigurationError("bits and bases must be 0/1 valued")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "bases", bases)

    @classmethod
    def from_photons(cls, photons) -> "PhotonBatch":
        photons = list(photons)
        return cls([p.bit for p in photons], [int(p.basis) for p in photons])

    @property
    def angles(self) -> np.ndarray:
        return _ANGLE_TABLE[self.bits, self.bases]

    def __len__(self) -> int:
        return int(self.bits.size)

    def __getitem__(self, i: int) -> PolarizedPhoton:
        return PolarizedPhoton.from_bit(int(self.bits[i]), Basis(int(self.bases[i])))

    def __iter__(self) -> Iterator[PolarizedPhoton]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhotonBatch):
            return NotImplemented
        return np.array_equal(self.bits, other.bits) and np.array_equal(self.bases, other.bases)

    __hash__ = None


@dataclass(frozen=True)
class ChannelConfig:
    num_photons: int
    noise_flip_prob: float = 0.0
    eavesdropper_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.num_photons, (int, np.integer)) or self.num_photons < 1:
            raise ConfigurationError(f"num_photons must be a positive integer, got {self.num_photons!r}")
        for name in ("noise_flip_prob", "eavesdropper_fraction"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p!r}")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigurationError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed!r}")

    def streams(self) -> dict[str, np.random.Generator]:
        return party_streams(self.rng_seed)


def party_streams(seed: int) -> dict[str, np.random.Generator]:
    """Spawn one independent generator per simulated party."""
    children = np.random.SeedSequence(seed).spawn(len(PARTY_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(PARTY_STREAMS, children)}


def generate_transmission(config: ChannelConfig, rng: np.random.Generator | None = None) -> PhotonBatch:
    """Draw the sender's random bits and bases and encode them as photons."""
    if rng is None:
        rng = config.streams()["sender"]
    n = config.num_photons
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    return PhotonBatch(bits, bases)


def measure(photon: PolarizedPhoton, receiver_basis: Basis, rng: np.random.Generator) -> int:
    """Measure one photon. A basis mismatch yields a fair coin flip."""
    if Basis(receiver_basis) == photon.basis:
        return photon.bit
    return int(rng.integers(0, 2))


def measure_batch(
    photons: PhotonBatch,
    receiver_bases,
    rng: np.random.Generator,
    noise_flip_prob: float = 0.0,
    noise_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Vectorized :func:`measure`, with optional independent bit-flip noise."""
    receiver_bases = np.asarray(receiver_bases, dtype=np.uint8)
    if receiver_bases.shape != photons.bits.shape:
        raise ProtocolError("one receiver basis is needed per photon")
    coin = rng.integers(0, 2, size=len(photons), dtype=np.uint8)
    out = np.where(receiver_bases == photons.bases, photons.bits, coin).astype(np.uint8)
    if noise_flip_prob > 0.0:
        flips = (noise_rng or rng).random(len(photons)) < noise_flip_prob
        out ^= flips.astype(np.uint8)
    return out


def apply_eavesdropper(photons: PhotonBatch, fraction: float, rng: np.random.Generator) -> PhotonBatch:
    """Intercept-resend attack on a fraction of the photons.

    Each photon is intercepted independently with probability ``fraction``,
    measured in a random basis and re-emitted in that basis carrying the
    measured bit.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError(f"fraction must lie in [0, 1], got {fraction!r}")
    if fraction == 0.0:
        return photons
    n = len(photons)
    hit = rng.random(n) < fraction
    eve_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    eve_bits = measure_batch(photons, eve_bases, rng)
    return PhotonBatch(np.where(hit, eve_bits, photons.bits), np.where(hit, eve_bases, photons.bases))


@dataclass(frozen=True, eq=False)
class PartyRecord:
    """What one side knows after the quantum phase: its bits and bases."""

    bits: np.ndarray
    bases: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen(self.bits))
        object.__setattr__(self, "bases", _frozen(self.bases))
        if self.bits.shape != self.bases.shape:
            raise ProtocolError("record bits and bases differ in length")

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True, eq=False)
class SiftedKey:
    """Outcome of sifting and error estimation.

    ``bits_sender``/``bits_receiver`` hold every retained position, sampled
    ones included; the sampled bits were disclosed on the public channel, so
    :attr:`final_sender`/:attr:`final_receiver` drop them.
    """

    bits_sender: np.ndarray
    bits_receiver: np.ndarray
    retained_indices: np.ndarray
    qber: float | None
    sample_indices: np.ndarray
    num_photons: int = 0

    @property
    def sample_mask(self) -> np.ndarray:
        return np.isin(self.retained_indices, self.sample_indices)

    @property
    def final_sender(self) -> np.ndarray:
        return self.bits_sender[~self.sample_mask]

    @property
    def final_receiver(self) -> np.ndarray:
        return self.bits_receiver[~self.sample_mask]

    @property
    def retention(self) -> float:
        return len(self.retained_indices) / self.num_photons if self.num_photons else 0.0

    @property
    def error_rate(self) -> float:
        """Disagreement over every retained bit (not observable by the parties)."""
        if not len(self.retained_indices):
            return 0.0
        return float(np.mean(self.bits_sender != self.bits_receiver))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SiftedKey):
            return NotImplemented
        return (
            np.array_equal(self.bits_sender, other.bits_sender)
            and np.array_equal(self.bits_receiver, other.bits_receiver)
            and np.array_equal(self.retained_indices, other.retained_indices)
            and np.array_equal(self.sample_indices, other.sample_indices)
            and self.qber == other.qber
            and self.num_photons == other.num_photons
        )

    __hash__ = None


def sift(
    sender: PhotonBatch | PartyRecord,
    receiver: PartyRecord,
    sample_fraction: float = DEFAULT_SAMPLE_FRACTION,
    rng: np.random.Generator | None = None,
) -> SiftedKey:
    """Keep matched-basis positions and sacrifice a sample for QBER estimation.

    The sample size is ``round(sample_fraction * retained)``; pass
    ``sample_fraction=0`` to disable sampling (``qber`` is then ``None``).
    """
    if len(sender) != len(receiver):
        raise ProtocolError(f"sender has {len(sender)} positions, receiver has {len(receiver)}")
    if not 0.0 <= sample_fraction <= 1.0:
        raise ConfigurationError(f"sample_fraction must lie in [0, 1], got {sample_fraction!r}")
    retained = np.flatnonzero(sender.bases == receiver.bases)
    bits_s = sender.bits[retained]
    bits_r = receiver.bits[retained]

    k = int(round(sample_fraction * len(retained)))
    if k:
        if rng is None:
            raise ConfigurationError("sampling needs an rng")
        picked = np.sort(rng.choice(len(retained), size=k, replace=False))
        qber = float(np.mean(bits_s[picked] != bits_r[picked]))
        sample = retained[picked]
    else:
        qber = None
        sample = np.empty(0, dtype=retained.dtype)

    for a in (retained, sample):
        a.setflags(write=False)
    return SiftedKey(_frozen(bits_s), _frozen(bits_r), retained, qber, sample, num_photons=len(sender))


class Decision(enum.Enum):
    ACCEPT = "accept"
    ABORT = "abort"


def detect_eavesdropper(key: SiftedKey, threshold: float = DEFAULT_THRESHOLD) -> Decision:
    if key.qber is None or not len(key.sample_indices):
        raise EstimationError("no sampled bits to estimate the error rate from; enable sampling")
    return Decision.ABORT if key.qber >= threshold else Decision.ACCEPT


@dataclass(frozen=True, eq=False)
class Exchange:
    """Full record of one exchange, enough to export a transcript."""

    config: ChannelConfig
    sent: PhotonBatch
    receiver: PartyRecord
    key: SiftedKey
    decision: Decision

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT


def run_exchange(
    config: ChannelConfig,
    sample_fraction: float = DEFAULT_SAMPLE_FRACTION,
    threshold: float = DEFAULT_THRESHOLD,
) -> Exchange:
    """Run transmission, optional interception, measurement, sifting and the abort test."""
    if sample_fraction <= 0.0:
        raise ConfigurationError("an exchange needs a positive sample fraction to test for eavesdroppers")
    rngs = config.streams()
    sent = generate_transmission(config, rngs["sender"])
    in_flight = apply_eavesdropper(sent, config.eavesdropper_fraction, rngs["eavesdropper"])
    rx_bases = rngs["receiver"].integers(0, 2, size=config.num_photons, dtype=np.uint8)
    rx_bits = measure_batch(
        in_flight, rx_bases, rngs["receiver"], config.noise_flip_prob, noise_rng=rngs["channel"]
    )
    receiver = PartyRecord(rx_bits, rx_bases)
    key = sift(PartyRecord(sent.bits, sent.bases), receiver, sample_fraction, rngs["sampler"])
    if not len(key.sample_indices):
        # too few photons to sample anything; treat as unverifiable
        return Exchange(config, sent, receiver, key, Decision.ABORT)
    return Exchange(config, sent, receiver, key, detect_eavesdropper(key, threshold))


TRANSCRIPT_COLUMNS = ("index", "sender_bit", "sender_basis", "receiver_basis", "receiver_bit", "retained", "sampled")


def write_transcript_csv(exchange: Exchange, dest) -> None:
    """Write the per-photon transcript to a path or text stream."""
    retained = np.zeros(len(exchange.sent), dtype=np.uint8)
    retained[exchange.key.retained_indices] = 1
    sampled = np.zeros(len(exchange.sent), dtype=np.uint8)
    sampled[exchange.key.sample_indices] = 1
    names = np.array([b.name for b in Basis])

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSCRIPT_COLUMNS)
    cols = zip(
        range(len(exchange.sent)),
        exchange.sent.bits.tolist(),
        names[exchange.sent.bases].tolist(),
        names[exchange.receiver.bases].tolist(),
        exchange.receiver.bits.tolist(),
        retained.tolist(),
        sampled.tolist(),
    )
    w.writerows(cols)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(buf.getvalue())
    else:
        dest.write(buf.getvalue())


def bits_to_hex(bits) -> tuple[str, int]:
    """Pack bits MSB-first into lowercase hex; returns ``(hex, bit_length)``."""
    bits = np.asarray(bits, dtype=np.uint8)
    return np.packbits(bits).tobytes().hex(), int(bits.size)


def hex_to_bits(hex_str: str, nbits: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hex_str), dtype=np.uint8)
    if nbits > raw.size * 8 or nbits <= (raw.size - 1) * 8 and raw.size:
        raise ProtocolError(f"{len(hex_str)} hex digits cannot hold exactly {nbits} bits")
    return np.unpackbits(raw)[:nbits]
