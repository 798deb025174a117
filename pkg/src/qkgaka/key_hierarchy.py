"""Quantum-seeded LTE key hierarchy with Pre-K feedback.

The master key ``K`` is drawn from two sources: cells of a QK-GRID selected
by a walk seeded with the previous key (Pre-K), and Pre-K itself. Each new
``K`` becomes the next Pre-K. Downstream keys follow the usual LTE tree::

    K -> CK, IK -> K_ASME -> K_NASenc, K_NASint, K_eNB -> NH -> NH ...

Every derivation is HKDF-SHA256 (RFC 5869) keyed by the parent key, with an
ASCII label plus length-prefixed context in the ``info`` field.

Grid selection walk
-------------------
A keystream ``HMAC-SHA256(pre_k, b"QKG/WALK" || uint32_be(i))`` for
``i = 0, 1, ...`` is cut into 16-bit big-endian words. Words at or above the
largest multiple of ``n*n`` that fits in 16 bits are rejected; the rest
select the row-major flat cell index ``word % (n*n)``. Null cells are skipped.
Selected cells are concatenated until at least 512 bits *and* at least
``ceil(512 / mean cell width)`` cells have been gathered.
"""

from __future__ import annotations

import functools
import hashlib
import hmac
import math
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, StateError
from .qk_grid import GridLayout, QkGrid

HASH = "sha256"
HASH_LEN = 32

LABEL_K = b"QKG/K"
LABEL_CK = b"QKG/CK"
LABEL_IK = b"QKG/IK"
LABEL_ASME = b"QKG/ASME"
LABEL_NAS_ENC = b"QKG/NASenc"
LABEL_NAS_INT = b"QKG/NASint"
LABEL_ENB = b"QKG/eNB"
LABEL_NH = b"QKG/NH"
LABEL_WALK = b"QKG/WALK"

WALK_TARGET_BITS = 512
KEY_STORE_MAGIC = b"QKGK"


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    return hmac.digest(salt or bytes(HASH_LEN), ikm, HASH)


def hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    if length > 255 * HASH_LEN:
        raise ConfigurationError(f"HKDF cannot expand to {length} bytes")
    out, t = b"", b""
    counter = 1
    while len(out) < length:
        t = hmac.digest(prk, t + info + bytes([counter]), HASH)
        out += t
        counter += 1
    return out[:length]


def hkdf(ikm: bytes, length: int, salt: bytes = b"", info: bytes = b"") -> bytes:
    return hkdf_expand(hkdf_extract(salt, ikm), info, length)


def _lp(*parts: bytes) -> bytes:
    return b"".join(struct.pack(">H", len(p)) + p for p in parts)


def kdf(label: bytes, key: bytes, *context: bytes, length: int = 32, salt: bytes = b"") -> bytes:
    """Derive ``length`` bytes from ``key`` under ``label`` and ``context``."""
    return hkdf(key, length, salt, label + _lp(*context))


def fingerprint(key: bytes) -> str:
    """Short non-reversible tag for logs and reprs; never print raw keys."""
    return hashlib.sha256(b"fp:" + key).hexdigest()[:12]


def _check_key(name: str, value: bytes, size: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != size:
        raise ConfigurationError(f"{name} must be {size} bytes")


@dataclass(frozen=True)
class PreK:
    value: bytes
    generation: int = 0

    def __post_init__(self):
        _check_key("Pre-K", self.value, 32)
        object.__setattr__(self, "value", bytes(self.value))
        if self.generation < 0:
            raise ConfigurationError("Pre-K generation must be non-negative")

    @classmethod
    def bootstrap(cls, rng: np.random.Generator) -> "PreK":
        """The random 256-bit key installed before the first run."""
        return cls(rng.bytes(32), 0)

    def __repr__(self) -> str:
        return f"PreK(gen={self.generation}, fp={fingerprint(self.value)})"


@dataclass(frozen=True)
class DerivationContext:
    serving_network_id: bytes
    nas_uplink_count: int = 0
    algorithm_id: int = 2

    def __post_init__(self):
        if not self.serving_network_id:
            raise ConfigurationError("serving_network_id must be nonempty")
        if not 0 <= self.nas_uplink_count < 2**32:
            raise ConfigurationError("nas_uplink_count must fit in 32 bits")
        if not 0 <= self.algorithm_id < 256:
            raise ConfigurationError("algorithm_id must fit in one byte")

    def encode(self) -> bytes:
        return _lp(bytes(self.serving_network_id)) + struct.pack(">IB", self.nas_uplink_count, self.algorithm_id)


_WALK_WORDS = struct.Struct(">16H")


@functools.lru_cache(maxsize=64)
def _walk_index(layout: GridLayout) -> tuple[int, ...]:
    """Flat cell index for every 16-bit walk word; -1 marks rejected or null."""
    n = layout.n
    n2 = n * n
    limit = 65536 - 65536 % n2
    null = {r * n + c for r, c in enumerate(layout.null_cols)}
    return tuple(-1 if w >= limit or w % n2 in null else w % n2 for w in range(65536))


def _gather_grid_bits(grid: QkGrid, seed_key: bytes) -> bytes:
    index = _walk_index(grid.layout)
    flat = grid.flat_cells
    min_cells = math.ceil(WALK_TARGET_BITS / grid.mean_cell_bits)
    parts = []
    nbytes = counter = 0
    target = WALK_TARGET_BITS // 8
    while True:
        block = hmac.digest(seed_key, LABEL_WALK + counter.to_bytes(4, "big"), HASH)
        counter += 1
        for word in _WALK_WORDS.unpack(block):
            i = index[word]
            if i < 0:
                continue
            cell = flat[i]
            parts.append(cell)
            nbytes += len(cell)
            if nbytes >= target and len(parts) >= min_cells:
                return b"".join(parts)


def grid_source(grid: QkGrid, pre_k: PreK) -> bytes:
    """The grid half of the master-key input: cells picked by the Pre-K walk."""
    if not grid.cells or len(grid.cells) != grid.n * (grid.n - 1):
        raise StateError("QK-GRID is not populated")
    return _gather_grid_bits(grid, pre_k.value)


def derive_master_key(grid: QkGrid, pre_k: PreK) -> tuple[bytes, PreK]:
    """Return ``(K, next_pre_k)``; the new Pre-K is ``K`` one generation on."""
    material = grid_source(grid, pre_k)
    k = kdf(LABEL_K, material, struct.pack(">Q", pre_k.generation), salt=pre_k.value)
    return k, PreK(k, pre_k.generation + 1)


def derive_ck_ik(k: bytes) -> tuple[bytes, bytes]:
    _check_key("K", k, 32)
    return kdf(LABEL_CK, k, length=16), kdf(LABEL_IK, k, length=16)


def derive_k_asme(ck: bytes, ik: bytes, ctx: DerivationContext) -> bytes:
    _check_key("CK", ck, 16)
    _check_key("IK", ik, 16)
    return kdf(LABEL_ASME, ck + ik, ctx.encode())


def derive_nas_keys(k_asme: bytes, ctx: DerivationContext) -> tuple[bytes, bytes]:
    _check_key("K_ASME", k_asme, 32)
    c = ctx.encode()
    return kdf(LABEL_NAS_ENC, k_asme, c, length=16), kdf(LABEL_NAS_INT, k_asme, c, length=16)


def derive_k_enb(k_asme: bytes, ctx: DerivationContext) -> bytes:
    _check_key("K_ASME", k_asme, 32)
    return kdf(LABEL_ENB, k_asme, ctx.encode())


def derive_nh(k_asme: bytes, prev: bytes) -> bytes:
    """Next-hop key from ``K_ASME`` and the previous ``K_eNB`` or NH."""
    _check_key("K_ASME", k_asme, 32)
    _check_key("previous K_eNB/NH", prev, 32)
    return kdf(LABEL_NH, k_asme, prev)


_CHAIN_FIELDS = (
    ("k", 32), ("ck", 16), ("ik", 16), ("k_asme", 32),
    ("k_nas_enc", 16), ("k_nas_int", 16), ("k_enb", 32), ("nh", 32),
)
_CHAIN_LEN = sum(size for _, size in _CHAIN_FIELDS) + 8


@dataclass(frozen=True)
class KeyChain:
    k: bytes
    ck: bytes
    ik: bytes
    k_asme: bytes
    k_nas_enc: bytes
    k_nas_int: bytes
    k_enb: bytes
    nh: bytes
    nh_chain_counter: int = 1

    def __repr__(self) -> str:
        keys = " ".join(f"{name}={fingerprint(getattr(self, name))}" for name, _ in _CHAIN_FIELDS)
        return f"KeyChain({keys} ncc={self.nh_chain_counter})"

    def advance_nh(self) -> "KeyChain":
        return replace(self, nh=derive_nh(self.k_asme, self.nh), nh_chain_counter=self.nh_chain_counter + 1)

    def to_bytes(self) -> bytes:
        return b"".join(getattr(self, name) for name, _ in _CHAIN_FIELDS) + struct.pack(">Q", self.nh_chain_counter)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyChain":
        if len(data) != _CHAIN_LEN:
            raise FormatError(f"cached KeyChain is {len(data)} bytes, expected {_CHAIN_LEN}")
        vals, pos = {}, 0
        for name, size in _CHAIN_FIELDS:
            vals[name] = data[pos:pos + size]
            pos += size
        (vals["nh_chain_counter"],) = struct.unpack_from(">Q", data, pos)
        return cls(**vals)


def derive_key_chain(k: bytes, ctx: DerivationContext) -> KeyChain:
    """Full downstream tree from ``K``; the first NH is taken from ``K_eNB``."""
    ck, ik = derive_ck_ik(k)
    k_asme = derive_k_asme(ck, ik, ctx)
    k_nas_enc, k_nas_int = derive_nas_keys(k_asme, ctx)
    k_enb = derive_k_enb(k_asme, ctx)
    return KeyChain(k, ck, ik, k_asme, k_nas_enc, k_nas_int, k_enb, derive_nh(k_asme, k_enb), 1)


# --- key store ------------------------------------------------------------


def key_store_bytes(pre_k: PreK, chain: KeyChain | None = None) -> bytes:
    out = KEY_STORE_MAGIC + struct.pack(">Q", pre_k.generation) + pre_k.value
    return out + (chain.to_bytes() if chain is not None else b"")


def parse_key_store(data: bytes) -> tuple[PreK, KeyChain | None]:
    if data[:4] != KEY_STORE_MAGIC:
        raise FormatError(f"bad key-store magic {data[:4]!r}, expected {KEY_STORE_MAGIC!r}")
    if len(data) not in (44, 44 + _CHAIN_LEN):
        raise FormatError(f"key store is {len(data)} bytes, expected 44 or {44 + _CHAIN_LEN}")
    (gen,) = struct.unpack_from(">Q", data, 4)
    pre_k = PreK(data[12:44], gen)
    chain = KeyChain.from_bytes(data[44:]) if len(data) > 44 else None
    return pre_k, chain


def write_key_store(path, pre_k: PreK, chain: KeyChain | None = None) -> None:
    """Write the key store with owner-only permissions (0600)."""
    path = Path(path)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as f:
        f.write(key_store_bytes(pre_k, chain))
    os.chmod(path, 0o600)


def read_key_store(path) -> tuple[PreK, KeyChain | None]:
    return parse_key_store(Path(path).read_bytes())


# --- golden vectors -------------------------------------------------------


def inputs_digest(*inputs: bytes) -> str:
    return hashlib.sha256(_lp(*inputs)).hexdigest()


def golden_vectors(k: bytes, ctx: DerivationContext, nh_steps: int = 3) -> list[tuple[str, str, str]]:
    """One ``(label, inputs_digest, output)`` row per derivation of the tree."""
    c = ctx.encode()
    rows = []
    ck, ik = derive_ck_ik(k)
    rows.append(("CK", inputs_digest(k), ck.hex()))
    rows.append(("IK", inputs_digest(k), ik.hex()))
    k_asme = derive_k_asme(ck, ik, ctx)
    rows.append(("K_ASME", inputs_digest(ck, ik, c), k_asme.hex()))
    enc, integ = derive_nas_keys(k_asme, ctx)
    rows.append(("K_NASenc", inputs_digest(k_asme, c), enc.hex()))
    rows.append(("K_NASint", inputs_digest(k_asme, c), integ.hex()))
    prev = derive_k_enb(k_asme, ctx)
    rows.append(("K_eNB", inputs_digest(k_asme, c), prev.hex()))
    for i in range(1, nh_steps + 1):
        nh = derive_nh(k_asme, prev)
        rows.append((f"NH{i}", inputs_digest(k_asme, prev), nh.hex()))
        prev = nh
    return rows


def format_golden(rows) -> str:
    return "".join(f"{label} {digest} {out}\n" for label, digest, out in rows)


def parse_golden(text: str) -> list[tuple[str, str, str]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"golden line {lineno}: expected 3 fields, got {len(parts)}")
        rows.append(tuple(parts))
    return rows
