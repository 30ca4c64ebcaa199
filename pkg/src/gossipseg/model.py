"""Model parameter container, last-layer segmentation, and canonical byte encoding.

The trainable model is a stack of shared lower-layer tensors plus one final
dense layer whose output neurons are split into contiguous per-cluster
segments.  Only the final layer is ever masked; lower layers are common to
every peer.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    IntegrityError,
    SerializationError,
    ShapeMismatchError,
)

_MAGIC = b"GSM1"
_VERSION = 1


@dataclass(frozen=True)
class SegmentSpec:
    """Contiguous range of final-layer output units, both endpoints inclusive."""

    cluster_id: int
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ConfigurationError(
                f"bad segment range [{self.start}, {self.end}]"
            )

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    def rows(self) -> slice:
        return slice(self.start, self.end + 1)

    def contains(self, row: int) -> bool:
        return self.start <= row <= self.end


def _as_f64(t: np.ndarray) -> np.ndarray:
    return np.asarray(t, dtype=np.float64)


@dataclass
class ModelParams:
    """Ordered lower-layer tensors plus the segmented final dense layer."""

    lower_layers: list[np.ndarray]
    last_layer_weights: np.ndarray
    last_layer_bias: np.ndarray

    def __post_init__(self) -> None:
        self.lower_layers = [_as_f64(t) for t in self.lower_layers]
        self.last_layer_weights = _as_f64(self.last_layer_weights)
        self.last_layer_bias = _as_f64(self.last_layer_bias)
        if self.last_layer_weights.ndim != 2:
            raise ShapeMismatchError("final layer weights must be rank 2")
        if self.last_layer_bias.ndim != 1:
            raise ShapeMismatchError("final layer bias must be rank 1")
        if self.last_layer_bias.shape[0] != self.last_layer_weights.shape[0]:
            raise ShapeMismatchError("final layer bias length must match weight rows")

    @property
    def num_output_units(self) -> int:
        return self.last_layer_weights.shape[0]

    def tensors(self) -> list[np.ndarray]:
        return [*self.lower_layers, self.last_layer_weights, self.last_layer_bias]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [t.copy() for t in self.lower_layers],
            self.last_layer_weights.copy(),
            self.last_layer_bias.copy(),
        )


def _check_same_geometry(a: ModelParams, b: ModelParams) -> None:
    ta, tb = a.tensors(), b.tensors()
    if len(ta) != len(tb) or any(x.shape != y.shape for x, y in zip(ta, tb)):
        raise ShapeMismatchError("parameter geometries differ")


def zeros_like(params: ModelParams) -> ModelParams:
    return ModelParams(
        [np.zeros_like(t) for t in params.lower_layers],
        np.zeros_like(params.last_layer_weights),
        np.zeros_like(params.last_layer_bias),
    )


def params_add(a: ModelParams, b: ModelParams) -> ModelParams:
    _check_same_geometry(a, b)
    return ModelParams(
        [x + y for x, y in zip(a.lower_layers, b.lower_layers)],
        a.last_layer_weights + b.last_layer_weights,
        a.last_layer_bias + b.last_layer_bias,
    )


def params_sub(a: ModelParams, b: ModelParams) -> ModelParams:
    _check_same_geometry(a, b)
    return ModelParams(
        [x - y for x, y in zip(a.lower_layers, b.lower_layers)],
        a.last_layer_weights - b.last_layer_weights,
        a.last_layer_bias - b.last_layer_bias,
    )


def params_scale(a: ModelParams, factor: float) -> ModelParams:
    return ModelParams(
        [t * factor for t in a.lower_layers],
        a.last_layer_weights * factor,
        a.last_layer_bias * factor,
    )


def segment_boundaries(num_units: int, num_segments: int) -> list[SegmentSpec]:
    """Split ``num_units`` output rows into contiguous segments.

    Sizes differ by at most one; the remainder goes to the lowest-indexed
    segments.
    """
    if num_units < 1:
        raise ConfigurationError("num_units must be >= 1")
    if not 1 <= num_segments <= num_units:
        raise ConfigurationError(
            f"num_segments must lie in [1, {num_units}], got {num_segments}"
        )
    base, extra = divmod(num_units, num_segments)
    specs = []
    start = 0
    for k in range(num_segments):
        size = base + (1 if k < extra else 0)
        specs.append(SegmentSpec(cluster_id=k, start=start, end=start + size - 1))
        start += size
    return specs


def mask_to_segment(update: ModelParams, seg: SegmentSpec) -> ModelParams:
    """Zero all final-layer rows outside ``seg``; lower layers pass through."""
    if seg.end >= update.num_output_units:
        raise ShapeMismatchError(
            f"segment end {seg.end} outside final layer of "
            f"{update.num_output_units} units"
        )
    weights = np.zeros_like(update.last_layer_weights)
    bias = np.zeros_like(update.last_layer_bias)
    rows = seg.rows()
    weights[rows] = update.last_layer_weights[rows]
    bias[rows] = update.last_layer_bias[rows]
    return ModelParams([t.copy() for t in update.lower_layers], weights, bias)


def assemble_global(
    base: ModelParams,
    per_segment_deltas: dict[int, ModelParams],
    specs: list[SegmentSpec],
    lower_delta: ModelParams | None = None,
) -> ModelParams:
    """Compose a global model from per-segment final-layer deltas.

    Each delta must already be masked to its own segment.  Lower layers are
    taken from ``base`` plus the separately combined ``lower_delta``.
    """
    by_cluster = {s.cluster_id: s for s in specs}
    result = base.copy()
    if lower_delta is not None:
        _check_same_geometry(base, lower_delta)
        result.lower_layers = [
            b + d for b, d in zip(result.lower_layers, lower_delta.lower_layers)
        ]
    claimed: dict[int, int] = {}
    for cluster_id, delta in sorted(per_segment_deltas.items()):
        if cluster_id not in by_cluster:
            raise ConfigurationError(f"no segment spec for cluster {cluster_id}")
        _check_same_geometry(base, delta)
        spec = by_cluster[cluster_id]
        nonzero_rows = np.flatnonzero(
            np.any(delta.last_layer_weights != 0.0, axis=1)
            | (delta.last_layer_bias != 0.0)
        )
        for row in nonzero_rows.tolist():
            if not spec.contains(row):
                raise IntegrityError(
                    f"delta for cluster {cluster_id} touches row {row} outside "
                    f"[{spec.start}, {spec.end}]"
                )
            if row in claimed:
                raise IntegrityError(
                    f"row {row} contributed by clusters {claimed[row]} and {cluster_id}"
                )
            claimed[row] = cluster_id
        result.last_layer_weights += delta.last_layer_weights
        result.last_layer_bias += delta.last_layer_bias
    return result


def flatten(params: ModelParams) -> np.ndarray:
    return np.concatenate([t.ravel() for t in params.tensors()])


def unflatten(vec: np.ndarray, template: ModelParams) -> ModelParams:
    vec = np.asarray(vec, dtype=np.float64)
    total = sum(t.size for t in template.tensors())
    if vec.ndim != 1 or vec.size != total:
        raise ShapeMismatchError(f"flat vector must have {total} entries")
    out = []
    offset = 0
    for t in template.tensors():
        out.append(vec[offset : offset + t.size].reshape(t.shape))
        offset += t.size
    return ModelParams(out[:-2], out[-2], out[-1])


def segment_coordinate_mask(template: ModelParams, seg: SegmentSpec) -> np.ndarray:
    """Boolean mask over the flattened vector: lower layers plus owned rows."""
    parts = [np.ones(t.size, dtype=bool) for t in template.lower_layers]
    wmask = np.zeros(template.last_layer_weights.shape, dtype=bool)
    bmask = np.zeros(template.last_layer_bias.shape, dtype=bool)
    wmask[seg.rows()] = True
    bmask[seg.rows()] = True
    parts.append(wmask.ravel())
    parts.append(bmask.ravel())
    return np.concatenate(parts)


def canonical_bytes(params: ModelParams) -> bytes:
    """Versioned, byte-deterministic encoding of all tensors as float64 LE."""
    tensors = params.tensors()
    for t in tensors:
        if not np.all(np.isfinite(t)):
            raise SerializationError("non-finite parameter value")
    out = [_MAGIC, struct.pack("<HH", _VERSION, len(tensors))]
    for t in tensors:
        out.append(struct.pack("<B", t.ndim))
        out.append(struct.pack(f"<{t.ndim}I", *t.shape))
    for t in tensors:
        out.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(out)


def params_from_bytes(buf: bytes) -> ModelParams:
    """Decode :func:`canonical_bytes` output; exact round trip."""
    if len(buf) < 8 or buf[:4] != _MAGIC:
        raise SerializationError("bad magic")
    version, count = struct.unpack_from("<HH", buf, 4)
    if version != _VERSION:
        raise SerializationError(f"unsupported version {version}")
    if count < 2:
        raise SerializationError("encoding must hold at least the final layer")
    offset = 8
    shapes: list[tuple[int, ...]] = []
    try:
        for _ in range(count):
            (rank,) = struct.unpack_from("<B", buf, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", buf, offset)
            offset += 4 * rank
            shapes.append(tuple(dims))
        tensors = []
        for shape in shapes:
            size = int(np.prod(shape)) if shape else 1
            raw = buf[offset : offset + 8 * size]
            if len(raw) != 8 * size:
                raise SerializationError("truncated payload")
            tensors.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
            offset += 8 * size
    except struct.error as exc:
        raise SerializationError("truncated header") from exc
    if offset != len(buf):
        raise SerializationError("trailing bytes after payload")
    if len(shapes[-2]) != 2 or len(shapes[-1]) != 1:
        raise SerializationError("final two tensors must be a matrix and a bias")
    return ModelParams(tensors[:-2], tensors[-2], tensors[-1])


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    return canonical_bytes(a) == canonical_bytes(b)
