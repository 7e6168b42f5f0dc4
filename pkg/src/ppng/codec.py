"""Self-contained `.ppng` file codec.

One CBOR map with small-integer keys holds scene metadata, half-precision
parameter blobs, and the RLE-compressed occupancy grid:

    0  magic "PPNG"          5  D (channels)       9   payload: array of
    1  version (1)           6  R (0 for type 3)       byte strings (field
    2  ppng_type (1|2|3)     7  freqs (L floats)       blobs, then MLP
    3  Q (grid resolution)   8  aabb (6 floats)        weight blobs)
    4  L (levels)                                  10  occupancy {0: G, 1: rle}

Encoding is canonical (definite lengths, sorted integer keys, 64-bit
floats), so saving the same model twice yields identical bytes. Blobs are
little-endian binary16. Dense cubes are linearized channel-fastest then
x, y, z; factor banks are rank-major, then spatial, then channel; the
occupancy grid is x-fastest. RLE stores alternating run lengths as
unsigned LEB128 varints, starting with a (possibly zero-length) run of 0s.
"""

from __future__ import annotations

import io

import numpy as np

from .encoding import FrequencySchedule
from .field import CpFactorSet, FourierVolumeSet, TriplaneFactorSet, compose_all
from .mlp import ShallowMlp
from .model import SceneModel
from .renderer import OccupancyGrid

MAGIC = "PPNG"
VERSION = 1


class CodecError(Exception):
    """Base class for `.ppng` serialization failures."""


class MagicError(CodecError):
    pass


class VersionError(CodecError):
    pass


class BlobLengthError(CodecError):
    pass


class TruncatedFileError(CodecError):
    pass


class CorruptStreamError(CodecError):
    """RLE runs do not cover the declared grid."""


# ---------------------------------------------------------------------------
# canonical CBOR (the subset the schema needs: uints, bytes, text, arrays,
# integer-keyed maps, 64-bit floats)

def _head(major: int, val: int) -> bytes:
    if val < 24:
        return bytes([(major << 5) | val])
    if val < 1 << 8:
        return bytes([(major << 5) | 24, val])
    if val < 1 << 16:
        return bytes([(major << 5) | 25]) + val.to_bytes(2, "big")
    if val < 1 << 32:
        return bytes([(major << 5) | 26]) + val.to_bytes(4, "big")
    return bytes([(major << 5) | 27]) + val.to_bytes(8, "big")


def cbor_encode(obj) -> bytes:
    out = io.BytesIO()
    _encode_item(out, obj)
    return out.getvalue()


def _encode_item(out, obj):
    if isinstance(obj, bool):
        raise TypeError("booleans are not part of the schema")
    if isinstance(obj, (int, np.integer)):
        obj = int(obj)
        if obj >= 0:
            out.write(_head(0, obj))
        else:
            out.write(_head(1, -1 - obj))
    elif isinstance(obj, bytes):
        out.write(_head(2, len(obj)))
        out.write(obj)
    elif isinstance(obj, str):
        enc = obj.encode("utf-8")
        out.write(_head(3, len(enc)))
        out.write(enc)
    elif isinstance(obj, (list, tuple)):
        out.write(_head(4, len(obj)))
        for item in obj:
            _encode_item(out, item)
    elif isinstance(obj, dict):
        out.write(_head(5, len(obj)))
        entries = sorted((cbor_encode(k), v) for k, v in obj.items())
        for key_bytes, v in entries:
            out.write(key_bytes)
            _encode_item(out, v)
    elif isinstance(obj, (float, np.floating)):
        out.write(bytes([(7 << 5) | 27]))
        out.write(np.float64(obj).tobytes()[::-1])  # big-endian IEEE 754
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError("unexpected end of file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def item(self):
        initial = self.take(1)[0]
        major, ai = initial >> 5, initial & 0x1F
        if ai < 24:
            val = ai
        elif ai == 24:
            val = self.take(1)[0]
        elif ai == 25:
            val = int.from_bytes(self.take(2), "big")
        elif ai == 26:
            val = int.from_bytes(self.take(4), "big")
        elif ai == 27:
            val = int.from_bytes(self.take(8), "big")
        else:
            raise CodecError("indefinite lengths are not canonical")
        if major == 0:
            return val
        if major == 1:
            return -1 - val
        if major == 2:
            return self.take(val)
        if major == 3:
            return self.take(val).decode("utf-8")
        if major == 4:
            return [self.item() for _ in range(val)]
        if major == 5:
            return {self.item(): self.item() for _ in range(val)}
        if major == 7 and ai == 27:
            return float(np.frombuffer(val.to_bytes(8, "big"), dtype=">f8")[0])
        raise CodecError(f"unsupported CBOR item (major {major}, ai {ai})")


def cbor_decode(data: bytes):
    reader = _Reader(data)
    obj = reader.item()
    if reader.pos != len(data):
        raise CodecError(f"{len(data) - reader.pos} trailing bytes after CBOR item")
    return obj


# ---------------------------------------------------------------------------
# run-length coding of the occupancy grid

def _write_varint(out, val: int):
    while True:
        byte = val & 0x7F
        val >>= 7
        if val:
            out.write(bytes([byte | 0x80]))
        else:
            out.write(bytes([byte]))
            return


def rle_encode(grid: OccupancyGrid) -> bytes:
    """Alternating run lengths over x-fastest cells, first run of value 0."""
    flat = grid.cells.transpose(2, 1, 0).ravel().astype(np.uint8)
    out = io.BytesIO()
    changes = np.flatnonzero(np.diff(flat))
    bounds = np.concatenate([[0], changes + 1, [len(flat)]])
    runs = np.diff(bounds)
    if flat[0] == 1:
        _write_varint(out, 0)
    for run in runs:
        _write_varint(out, int(run))
    return out.getvalue()


def rle_decode(stream: bytes, resolution: int) -> OccupancyGrid:
    total = resolution**3
    runs = []
    pos = 0
    while pos < len(stream):
        val = 0
        shift = 0
        while True:
            if pos >= len(stream):
                raise CorruptStreamError("truncated varint in RLE stream")
            byte = stream[pos]
            pos += 1
            val |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                break
        runs.append(val)
    if sum(runs) != total:
        raise CorruptStreamError(f"RLE runs cover {sum(runs)} cells, expected {total}")
    flat = np.zeros(total, dtype=bool)
    cursor = 0
    for i, run in enumerate(runs):
        if i % 2 == 1:
            flat[cursor : cursor + run] = True
        cursor += run
    return OccupancyGrid(flat.reshape((resolution,) * 3).transpose(2, 1, 0))


# ---------------------------------------------------------------------------
# blob packing

def _to_f16_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f2").tobytes()


def _from_f16_bytes(blob: bytes, shape, what: str) -> np.ndarray:
    expected = 2 * int(np.prod(shape))
    if len(blob) != expected:
        raise BlobLengthError(f"{what}: expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f2").reshape(shape).astype(np.float32)


def _field_blobs(field) -> list[bytes]:
    if isinstance(field, FourierVolumeSet):
        return [_to_f16_bytes(v.transpose(2, 1, 0, 3)) for v in field.volumes]
    if isinstance(field, CpFactorSet):
        return [_to_f16_bytes(field.vx), _to_f16_bytes(field.vy), _to_f16_bytes(field.vz)]
    if isinstance(field, TriplaneFactorSet):
        return [_to_f16_bytes(field.pxy), _to_f16_bytes(field.pxz), _to_f16_bytes(field.pyz)]
    raise TypeError(f"unsupported field type {type(field).__name__}")


def _field_from_blobs(ppng_type, blobs, Q, L, D, R):
    if ppng_type == 3:
        if len(blobs) != 2 * L:
            raise BlobLengthError(f"expected {2 * L} cube blobs, got {len(blobs)}")
        cubes = [
            _from_f16_bytes(b, (Q, Q, Q, D), f"cube {i}").transpose(2, 1, 0, 3)
            for i, b in enumerate(blobs)
        ]
        return FourierVolumeSet(np.ascontiguousarray(np.stack(cubes)))
    if len(blobs) != 3:
        raise BlobLengthError(f"expected 3 factor blobs, got {len(blobs)}")
    if ppng_type == 1:
        shape = (2 * L, R, Q, D)
        vx, vy, vz = (_from_f16_bytes(b, shape, n) for b, n in zip(blobs, ("vx", "vy", "vz")))
        return CpFactorSet(vx, vy, vz)
    if ppng_type == 2:
        shape = (2 * L, R, Q, Q, D)
        pxy, pxz, pyz = (_from_f16_bytes(b, shape, n) for b, n in zip(blobs, ("pxy", "pxz", "pyz")))
        return TriplaneFactorSet(pxy, pxz, pyz)
    raise CodecError(f"unknown ppng_type {ppng_type}")


def _n_field_blobs(ppng_type, L):
    return 2 * L if ppng_type == 3 else 3


# ---------------------------------------------------------------------------
# save / load / convert

def model_to_bytes(model: SceneModel) -> bytes:
    mlp = model.mlp
    mlp_weights = [mlp.w1] + ([mlp.w1b] if mlp.w1b is not None else []) + [mlp.w2, mlp.w3]
    mlp_blobs = [_to_f16_bytes(w) for w in mlp_weights]
    payload = _field_blobs(model.field) + mlp_blobs
    rank = getattr(model.field, "rank", 0)
    doc = {
        0: MAGIC,
        1: VERSION,
        2: model.ppng_type,
        3: model.field.resolution,
        4: model.sched.levels,
        5: model.field.channels,
        6: rank,
        7: [float(f) for f in model.sched.freqs],
        8: [float(v) for v in model.aabb.ravel()],
        9: payload,
        10: {0: model.occupancy.resolution, 1: rle_encode(model.occupancy)},
    }
    return cbor_encode(doc)


def model_from_bytes(data: bytes, compose: bool = False) -> SceneModel:
    doc = cbor_decode(data)
    if not isinstance(doc, dict):
        raise CodecError("top-level CBOR item is not a map")
    if doc.get(0) != MAGIC:
        raise MagicError(f"bad magic {doc.get(0)!r}")
    if doc.get(1) != VERSION:
        raise VersionError(f"unsupported version {doc.get(1)!r}")
    ppng_type, Q, L, D, R = (doc[k] for k in (2, 3, 4, 5, 6))
    if ppng_type not in (1, 2, 3):
        raise CodecError(f"unknown ppng_type {ppng_type}")
    sched = FrequencySchedule(tuple(doc[7]))
    if sched.levels != L:
        raise CodecError("frequency list length does not match declared L")
    aabb = np.array(doc[8]).reshape(2, 3)
    payload = doc[9]
    n_field = _n_field_blobs(ppng_type, L)
    field = _field_from_blobs(ppng_type, payload[:n_field], Q, L, D, R)
    mlp_blobs = payload[n_field:]
    F = 2 * L * D
    if len(mlp_blobs) == 3:
        w1, w2, w3 = mlp_blobs
        w1b = None
    elif len(mlp_blobs) == 4:
        w1, w1b_blob, w2, w3 = mlp_blobs
        w1b = _from_f16_bytes(w1b_blob, (16, 16), "w1b")
    else:
        raise BlobLengthError(f"expected 3 or 4 MLP blobs, got {len(mlp_blobs)}")
    mlp = ShallowMlp(
        _from_f16_bytes(w1, (16, F), "w1"),
        _from_f16_bytes(w2, (16, 32), "w2"),
        _from_f16_bytes(w3, (3, 16), "w3"),
        w1b,
    )
    occ_doc = doc[10]
    occ = rle_decode(occ_doc[1], occ_doc[0])
    model = SceneModel(field, mlp, occ, sched, aabb)
    if compose and ppng_type in (1, 2):
        model = convert(model)
    return model


def save(model: SceneModel, path) -> None:
    data = model_to_bytes(model)
    with open(path, "wb") as f:
        f.write(data)


def load(path, compose: bool = False) -> SceneModel:
    with open(path, "rb") as f:
        data = f.read()
    return model_from_bytes(data, compose=compose)


def convert(model: SceneModel) -> SceneModel:
    """Compose a factorized model into a dense type-3 model.

    Composition runs in single precision and the result is re-quantized
    to binary16 so CPU and GPU renderers agree on the stored values.
    """
    if model.ppng_type == 3:
        return model
    dense = compose_all(model.field)
    quantized = dense.volumes.astype(np.float16).astype(np.float32)
    return SceneModel(
        FourierVolumeSet(quantized), model.mlp, model.occupancy, model.sched, model.aabb
    )


def payload_bytes(model: SceneModel) -> int:
    """Parameter payload size: 2 bytes per field + MLP parameter."""
    return 2 * model.param_count
