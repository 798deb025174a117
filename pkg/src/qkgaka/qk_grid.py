"""QK-GRID layout, population from QKD output, and binary serialization.

A QK-GRID is an ``n x n`` table (``n`` odd, at least 3). Column ``j``
(1-indexed) stores cells of ``8*j`` bits. Exactly one cell per row and per
column is null, so the null cells form a permutation. Non-null cells are
filled row-major from the key stream.

Serialized form (``QKG1``)::

    magic     4 bytes   b"QKG1"
    n         uint16    big-endian
    nulls     n x uint16, big-endian: column of the null cell in row r
    cells     non-null cells in row-major order, cell (r, j) is j+1 bytes
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, FormatError, GridUnderflowError, KeyEstablishmentError
from .qkd_link import DEFAULT_SAMPLE_FRACTION, DEFAULT_THRESHOLD, ChannelConfig, run_exchange

log = logging.getLogger(__name__)

MAGIC = b"QKG1"
MIN_SIDE = 3
BITS_PER_COLUMN_STEP = 8  # 2**3


def _sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GridLayout:
    """Grid geometry: side ``n`` and the null column chosen for each row."""

    n: int
    null_cols: tuple[int, ...]

    def __post_init__(self):
        _check_side(self.n)
        cols = tuple(int(c) for c in self.null_cols)
        if sorted(cols) != list(range(self.n)):
            raise ConfigurationError(f"null columns {cols} are not a permutation of range({self.n})")
        object.__setattr__(self, "null_cols", cols)

    @property
    def null_cells(self) -> frozenset[tuple[int, int]]:
        return frozenset(enumerate(self.null_cols))

    @property
    def column_widths(self) -> tuple[int, ...]:
        return tuple(BITS_PER_COLUMN_STEP * (j + 1) for j in range(self.n))

    def is_null(self, row: int, col: int) -> bool:
        return self.null_cols[row] == col

    def cells(self):
        """Non-null (row, col) positions in fill order."""
        for r in range(self.n):
            for c in range(self.n):
                if self.null_cols[r] != c:
                    yield r, c

    @property
    def required_bits(self) -> int:
        return sum(self.column_widths) * (self.n - 1)


def _check_side(n) -> None:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ConfigurationError(f"grid side must be an integer, got {n!r}")
    if n % 2 == 0:
        raise ConfigurationError(f"grid side must be odd, got {n}")
    if n < MIN_SIDE:
        raise ConfigurationError(f"grid side must be at least {MIN_SIDE}, got {n}")
    if n > 0xFFFF:
        raise ConfigurationError(f"grid side {n} does not fit the 16-bit header field")


def construct_layout(n: int, rng_seed: int) -> GridLayout:
    _check_side(n)
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    return GridLayout(n, tuple(int(c) for c in rng.permutation(n)))


@dataclass(frozen=True, eq=False)
class QkGrid:
    layout: GridLayout
    cells: Mapping[tuple[int, int], bytes]
    source_digest: str

    def __post_init__(self):
        object.__setattr__(self, "cells", MappingProxyType(dict(self.cells)))
        n = self.layout.n
        flat = [None] * (n * n)
        for (r, c), v in self.cells.items():
            flat[r * n + c] = v
        # row-major lookup table used by the key-derivation walk
        object.__setattr__(self, "flat_cells", tuple(flat))
        total = 8 * sum(len(v) for v in self.cells.values())
        object.__setattr__(self, "total_bits", total)
        object.__setattr__(self, "mean_cell_bits", total / len(self.cells) if self.cells else 0.0)

    @property
    def n(self) -> int:
        return self.layout.n

    def cell(self, row: int, col: int) -> bytes | None:
        return self.cells.get((row, col))

    def cell_bits(self, row: int, col: int) -> np.ndarray:
        v = self.cells.get((row, col))
        if v is None:
            return np.empty(0, dtype=np.uint8)
        return np.unpackbits(np.frombuffer(v, dtype=np.uint8))

    def __eq__(self, other) -> bool:
        if not isinstance(other, QkGrid):
            return NotImplemented
        return self.layout == other.layout and dict(self.cells) == dict(other.cells)

    __hash__ = None


def populate(layout: GridLayout, key_stream) -> QkGrid:
    """Fill every non-null cell from ``key_stream`` (a 0/1 sequence), row-major."""
    bits = np.asarray(key_stream, dtype=np.uint8).ravel()
    need = layout.required_bits
    if bits.size < need:
        raise GridUnderflowError(need, int(bits.size))
    if bits[:need].size and bits[:need].max() > 1:
        raise ConfigurationError("key stream must be 0/1 valued")
    raw = np.packbits(bits[:need]).tobytes()
    cells = {}
    pos = 0
    for r, c in layout.cells():
        width = c + 1  # bytes
        cells[(r, c)] = raw[pos:pos + width]
        pos += width
    assert pos * 8 == need
    return QkGrid(layout, cells, hashlib.sha256(raw).hexdigest())


def run_grid_generation(
    channel_config: ChannelConfig,
    n: int,
    retries: int = 3,
    threshold: float = DEFAULT_THRESHOLD,
    sample_fraction: float = DEFAULT_SAMPLE_FRACTION,
    max_exchanges: int = 10_000,
) -> QkGrid:
    """Run QKD exchanges until the grid can be filled, then build it.

    Exchange ``i`` uses a seed derived from ``(channel_config.rng_seed, i)``
    and the layout uses its own derived seed. Each aborted exchange spends one
    retry; once more than ``retries`` exchanges abort the key establishment
    fails. Accepted final keys (sender side; reconciliation is taken to be
    perfect) are concatenated in order.
    """
    _check_side(n)
    layout = construct_layout(n, _sub_seed(channel_config.rng_seed, 0))
    need = layout.required_bits
    chunks, have, aborts = [], 0, 0
    for i in range(max_exchanges):
        cfg = replace(channel_config, rng_seed=_sub_seed(channel_config.rng_seed, 1, i))
        ex = run_exchange(cfg, sample_fraction, threshold)
        if not ex.accepted:
            aborts += 1
            log.info("exchange %d aborted (qber=%s)", i, ex.key.qber)
            if aborts > retries:
                raise KeyEstablishmentError(
                    f"{aborts} exchanges aborted on eavesdropper detection (retry budget {retries})"
                )
            continue
        chunk = ex.key.final_sender
        chunks.append(chunk)
        have += chunk.size
        if have >= need:
            return populate(layout, np.concatenate(chunks))
    raise KeyEstablishmentError(f"gathered {have} of {need} key bits in {max_exchanges} exchanges")


def count_unique_keys(grid: QkGrid, num_samples: int, rng_seed: int) -> int:
    """Derive ``K`` for ``num_samples`` random Pre-K values and count distinct results."""
    from .key_hierarchy import PreK, derive_master_key

    if num_samples < 1:
        raise ConfigurationError("num_samples must be at least 1")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    seen = set()
    for _ in range(num_samples):
        k, _next = derive_master_key(grid, PreK(rng.bytes(32), 0))
        seen.add(k)
    return len(seen)


def serialize(grid: QkGrid) -> bytes:
    n = grid.n
    head = MAGIC + struct.pack(f">H{n}H", n, *grid.layout.null_cols)
    return head + b"".join(grid.cells[rc] for rc in grid.layout.cells())


def deserialize(data: bytes) -> QkGrid:
    if data[:4] != MAGIC:
        raise FormatError(f"bad QK-GRID magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 6:
        raise FormatError("truncated QK-GRID header")
    (n,) = struct.unpack_from(">H", data, 4)
    head = 6 + 2 * n
    if len(data) < head:
        raise FormatError("truncated QK-GRID null table")
    nulls = struct.unpack_from(f">{n}H", data, 6)
    try:
        layout = GridLayout(n, nulls)
    except ConfigurationError as e:
        raise FormatError(f"invalid QK-GRID header: {e}") from None
    body = data[head:]
    if len(body) * 8 != layout.required_bits:
        raise FormatError(f"QK-GRID body is {len(body)} bytes, expected {layout.required_bits // 8}")
    return populate(layout, np.unpackbits(np.frombuffer(body, dtype=np.uint8)))


def hexdump(grid: QkGrid) -> str:
    """Human-readable dump: one line per row, ``--`` marks the null cell."""
    n = grid.n
    labels = [f"c{c}({8 * (c + 1)}b)" for c in range(n)]
    colw = [max(2 * (c + 1), len(labels[c])) for c in range(n)]
    lines = [
        f"QK-GRID n={n} bits={grid.total_bits} digest={grid.source_digest}",
        ("     " + " ".join(lab.ljust(w) for lab, w in zip(labels, colw))).rstrip(),
    ]
    for r in range(n):
        cells = (grid.cell(r, c) for c in range(n))
        row = " ".join(("--" if v is None else v.hex()).ljust(w) for v, w in zip(cells, colw))
        lines.append(f"r{r:<3} " + row.rstrip())
    return "\n".join(lines) + "\n"
