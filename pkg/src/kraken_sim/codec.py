"""Base-3 packing of ternary tensors, five trits per byte (1.6 bits/trit).

Trit ``t`` maps to digit ``t + 1``; digit ``i`` of a block carries weight
``3**i`` (little-endian). A partial final block is padded with trit 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidEncoding, ParseError

TRITS_PER_BYTE = 5
MAX_BLOCK = 3**TRITS_PER_BYTE - 1  # 242
MAGIC = b"KTT1"
HEADER = struct.Struct("<4sIII")

_POW3 = np.array([3**i for i in range(TRITS_PER_BYTE)], dtype=np.int32)


def _check_trits(values: np.ndarray) -> None:
    if values.size and (values.min() < -1 or values.max() > 1):
        raise ValueError("trits must be in {-1, 0, +1}")


@dataclass(frozen=True, eq=False)
class TernaryTensor:
    """Trit-valued tensor of shape (height, width, channels), row-major (y, x, c)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d array, got shape {arr.shape}")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == np.round(arr)):
                raise ValueError("trits must be integers")
        arr = arr.astype(np.int8)
        _check_trits(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> "TernaryTensor":
        return cls(np.zeros((height, width, channels), dtype=np.int8))

    @classmethod
    def from_flat(cls, dims: Sequence[int], flat: Iterable[int]) -> "TernaryTensor":
        arr = np.asarray(list(flat) if not isinstance(flat, np.ndarray) else flat, dtype=np.int64)
        h, w, c = (int(d) for d in dims)
        if arr.size != h * w * c:
            raise ValueError(f"{arr.size} trits do not fill dims {(h, w, c)}")
        return cls(arr.reshape(h, w, c))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def numel(self) -> int:
        return int(self.data.size)

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, TernaryTensor):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"TernaryTensor(dims={self.dims})"


def pack_trits(trits: Sequence[int]) -> int:
    if len(trits) != TRITS_PER_BYTE:
        raise ValueError(f"pack_trits takes exactly {TRITS_PER_BYTE} trits, got {len(trits)}")
    byte = 0
    for i, t in enumerate(trits):
        t = int(t)
        if t not in (-1, 0, 1):
            raise ValueError(f"not a trit: {t!r}")
        byte += (t + 1) * 3**i
    return byte


def unpack_trits(block: int) -> list[int]:
    if not 0 <= block <= MAX_BLOCK:
        raise InvalidEncoding(f"byte {block} is not a valid 5-trit block (max {MAX_BLOCK})")
    out = []
    for _ in range(TRITS_PER_BYTE):
        block, digit = divmod(block, 3)
        out.append(digit - 1)
    return out


def packed_size_bits(numel: int) -> int:
    if numel < 0:
        raise ValueError("numel must be non-negative")
    return 8 * -(-numel // TRITS_PER_BYTE)


def pack_flat(trits: np.ndarray) -> bytes:
    """Pack a flat trit sequence into ``ceil(n / 5)`` bytes."""
    trits = np.asarray(trits, dtype=np.int64).reshape(-1)
    _check_trits(trits)
    n = trits.size
    nblocks = -(-n // TRITS_PER_BYTE)
    padded = np.zeros(nblocks * TRITS_PER_BYTE, dtype=np.int64)
    padded[:n] = trits
    digits = (padded + 1).reshape(nblocks, TRITS_PER_BYTE)
    return (digits @ _POW3).astype(np.uint8).tobytes()


def unpack_flat(payload: bytes, numel: int) -> np.ndarray:
    blocks = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if blocks.size != -(-numel // TRITS_PER_BYTE):
        raise InvalidEncoding(f"{blocks.size} blocks cannot hold exactly {numel} trits")
    bad = np.nonzero(blocks > MAX_BLOCK)[0]
    if bad.size:
        raise InvalidEncoding(f"byte {int(blocks[bad[0]])} at offset {int(bad[0])} exceeds {MAX_BLOCK}")
    digits = np.empty((blocks.size, TRITS_PER_BYTE), dtype=np.int64)
    rest = blocks
    for i in range(TRITS_PER_BYTE):
        rest, digits[:, i] = np.divmod(rest, 3)
    flat = digits.reshape(-1)[:numel] - 1
    if np.any(digits.reshape(-1)[numel:] != 1):
        raise InvalidEncoding("padding trits must be zero")
    return flat.astype(np.int8)


def pack_tensor(t: TernaryTensor) -> bytes:
    """Serialize ``t`` as a KTT1 file: 16-byte header then packed blocks."""
    h, w, c = t.dims
    return HEADER.pack(MAGIC, h, w, c) + pack_flat(t.flat())


def unpack_tensor(blob: bytes) -> TernaryTensor:
    if len(blob) < HEADER.size:
        raise ParseError(f"packed tensor is {len(blob)} bytes, shorter than the {HEADER.size}-byte header")
    magic, h, w, c = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}")
    numel = h * w * c
    expected = -(-numel // TRITS_PER_BYTE)
    payload = blob[HEADER.size:]
    if len(payload) != expected:
        raise ParseError(f"payload is {len(payload)} bytes, dims {(h, w, c)} need {expected}")
    return TernaryTensor(unpack_flat(payload, numel).reshape(h, w, c))
