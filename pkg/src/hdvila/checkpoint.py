"""Binary checkpoint container: named float32 tensors, RNG state, step counter.

Layout (all integers little-endian):
  magic ``HDVK`` | format version u32 | tensor count u32 |
  per tensor: name length u16, UTF-8 name, rank u8, dims u32 each,
  float32 payload | RNG state (40 bytes) | step u64

Tensors are written sorted by name, so identical state produces an
identical file byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

MAGIC = b"HDVK"
FORMAT_VERSION = 1
_RNG_BYTES = 40


class CheckpointError(ValueError):
    """Unreadable, truncated, or incompatible checkpoint file."""


def rng_state_bytes(rng: np.random.Generator) -> bytes:
    """Serialize a PCG64 generator's state into the fixed 40-byte block."""
    state = rng.bit_generator.state
    if state.get("bit_generator") != "PCG64":
        raise CheckpointError(f"only PCG64 generators are supported, got {state.get('bit_generator')}")
    inner = state["state"]
    return (
        int(inner["state"]).to_bytes(16, "little")
        + int(inner["inc"]).to_bytes(16, "little")
        + struct.pack("<II", int(state["has_uint32"]), int(state["uinteger"]))
    )


def rng_from_state_bytes(block: bytes) -> np.random.Generator:
    if len(block) != _RNG_BYTES:
        raise CheckpointError(f"RNG state block must be {_RNG_BYTES} bytes, got {len(block)}")
    has_uint32, uinteger = struct.unpack("<II", block[32:40])
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {
            "state": int.from_bytes(block[:16], "little"),
            "inc": int.from_bytes(block[16:32], "little"),
        },
        "has_uint32": has_uint32,
        "uinteger": uinteger,
    }
    return gen


@dataclass
class Checkpoint:
    tensors: Dict[str, np.ndarray]
    rng_state: bytes = b"\x00" * _RNG_BYTES
    step: int = 0
    version: int = FORMAT_VERSION
    path: Optional[str] = field(default=None, compare=False)

    def rng(self) -> np.random.Generator:
        return rng_from_state_bytes(self.rng_state)


def _tensor_payload(name: str, arr: np.ndarray) -> bytes:
    data = np.asarray(arr, dtype="<f4", order="C")
    name_bytes = name.encode("utf-8")
    if len(name_bytes) > 0xFFFF:
        raise CheckpointError(f"tensor name too long: {name!r}")
    if data.ndim > 0xFF:
        raise CheckpointError(f"tensor rank {data.ndim} exceeds format limit")
    head = struct.pack("<H", len(name_bytes)) + name_bytes + struct.pack("<B", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape)
    return head + data.tobytes()


def save_checkpoint(
    tensors: Dict[str, Union[np.ndarray, "object"]],
    path: Union[str, Path],
    rng: Optional[np.random.Generator] = None,
    rng_state: Optional[bytes] = None,
    step: int = 0,
) -> None:
    """Write tensors (np arrays or objects with a ``.data`` array) plus RNG/step."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    names = sorted(tensors)
    blob += struct.pack("<I", len(names))
    for name in names:
        value = tensors[name]
        arr = np.asarray(getattr(value, "data", value), dtype=np.float32)
        blob += _tensor_payload(name, arr)
    if rng is not None:
        rng_state = rng_state_bytes(rng)
    blob += rng_state if rng_state is not None else b"\x00" * _RNG_BYTES
    blob += struct.pack("<Q", step)
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: Union[str, Path], expect_version: int = FORMAT_VERSION) -> Checkpoint:
    blob = Path(path).read_bytes()
    reader = _Reader(blob)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (version,) = reader.unpack("<I")
    if version != expect_version:
        raise CheckpointError(f"{path}: format version {version}, expected {expect_version}")
    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        n_items = int(np.prod(dims)) if rank else 1
        payload = reader.take(n_items * 4)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    rng_state = reader.take(_RNG_BYTES)
    (step,) = reader.unpack("<Q")
    if reader.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - reader.pos} trailing bytes after checkpoint")
    return Checkpoint(tensors=tensors, rng_state=rng_state, step=step, version=version, path=str(path))
