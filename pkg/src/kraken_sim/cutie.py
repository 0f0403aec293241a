"""Ternary CNN engine: functional forward pass, cycle model and memory fit.

Convolutions are stride 1 with zero ``same`` padding. Batch-norm and the
activation are folded into one ``(theta_lo, theta_hi)`` pair per output
channel, so a layer output is ``+1`` above ``theta_hi``, ``-1`` below
``theta_lo`` and ``0`` in between.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .codec import TernaryTensor, packed_size_bits
from .errors import ChannelMismatch, InvalidDims, MemoryBudgetExceeded, UnsupportedShape

MAX_CHANNELS = 96
WEIGHT_MEMORY_BYTES = 117_000
FEATURE_MEMORY_BYTES = 158_000
SUPPORTED_KERNELS = (1, 3)
PEAK_OPS_PER_CYCLE = 2 * MAX_CHANNELS * MAX_CHANNELS * 3 * 3  # 165,888


@dataclass(frozen=True, eq=False)
class TernaryConvLayer:
    weights: np.ndarray  # (c_out, c_in, k, k), trits
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    pool: str = "none"
    is_final: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise InvalidDims(f"weights must have shape (c_out, c_in, k, k), got {w.shape}")
        if w.size and (w.min() < -1 or w.max() > 1):
            raise ValueError("weights must be ternary")
        w = w.astype(np.int8)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        lo = np.broadcast_to(np.asarray(self.theta_lo, dtype=np.int64), (w.shape[0],)).copy()
        hi = np.broadcast_to(np.asarray(self.theta_hi, dtype=np.int64), (w.shape[0],)).copy()
        if np.any(lo > hi):
            raise ValueError("theta_lo must not exceed theta_hi")
        object.__setattr__(self, "theta_lo", lo)
        object.__setattr__(self, "theta_hi", hi)
        if self.pool not in ("none", "max2x2"):
            raise ValueError(f"unknown pool {self.pool!r}")

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]

    def check_shape(self) -> None:
        if self.c_out > MAX_CHANNELS or self.c_in > MAX_CHANNELS:
            raise UnsupportedShape(
                f"layer has {self.c_in}->{self.c_out} channels; the datapath has {MAX_CHANNELS} parallel channels"
            )
        if self.kernel not in SUPPORTED_KERNELS:
            raise UnsupportedShape(f"kernel {self.kernel} not supported (supported: {SUPPORTED_KERNELS})")


@dataclass(frozen=True, eq=False)
class CutieNetwork:
    input_dims: tuple[int, int, int]
    layers: tuple[TernaryConvLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "layers", tuple(self.layers))
        h, w, c = self.input_dims
        for i, layer in enumerate(self.layers):
            if layer.c_in != c:
                raise ChannelMismatch(f"layer {i} expects {layer.c_in} input channels, gets {c}")
            if layer.is_final and i != len(self.layers) - 1:
                raise InvalidDims("only the last layer may be final")
            if layer.pool == "max2x2" and not layer.is_final:
                h, w = h // 2, w // 2
            c = layer.c_out

    def layer_dims(self) -> list[tuple[tuple[int, int, int], tuple[int, int, int], tuple[int, int, int]]]:
        """Per layer: (input dims, conv output dims, stored output dims)."""
        dims = []
        h, w, c = self.input_dims
        for layer in self.layers:
            conv = (h, w, layer.c_out)
            if layer.pool == "max2x2" and not layer.is_final:
                h, w = h // 2, w // 2
            dims.append(((conv[0], conv[1], c), conv, (h, w, layer.c_out)))
            c = layer.c_out
        return dims


def ternary_conv(fm: TernaryTensor, layer: TernaryConvLayer) -> np.ndarray:
    """Integer accumulators, shape ``(h, w, c_out)``."""
    layer.check_shape()
    h, w, c = fm.dims
    if c != layer.c_in:
        raise ChannelMismatch(f"feature map has {c} channels, layer expects {layer.c_in}")
    k = layer.kernel
    r = k // 2
    x = np.zeros((h + 2 * r, w + 2 * r, c), dtype=np.int32)
    x[r : r + h, r : r + w] = fm.data
    wt = layer.weights.astype(np.int32)
    acc = np.zeros((h, w, layer.c_out), dtype=np.int32)
    for dy in range(k):
        for dx in range(k):
            acc += x[dy : dy + h, dx : dx + w] @ wt[:, :, dy, dx].T
    return acc


def ternarize(acc: np.ndarray, layer: TernaryConvLayer) -> TernaryTensor:
    if layer.is_final:
        raise ValueError("the final layer emits raw accumulators")
    out = np.zeros(acc.shape, dtype=np.int8)
    out[acc > layer.theta_hi] = 1
    out[acc < layer.theta_lo] = -1
    return TernaryTensor(out)


def max_pool2x2(t: TernaryTensor) -> TernaryTensor:
    h, w, c = t.dims
    h2, w2 = h // 2, w // 2
    blocks = t.data[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2, c)
    return TernaryTensor(blocks.max(axis=(1, 3)))


@dataclass(frozen=True)
class CutieResult:
    scores: np.ndarray
    label: int


def cutie_forward(net: CutieNetwork, x: TernaryTensor) -> CutieResult:
    if tuple(x.dims) != net.input_dims:
        raise InvalidDims(f"input dims {x.dims} do not match network input {net.input_dims}")
    report = cutie_memcheck(net)
    if not report.fits:
        raise MemoryBudgetExceeded(
            f"weights {report.weight_bytes} B (budget {WEIGHT_MEMORY_BYTES}), "
            f"feature maps {report.fm_bytes} B (budget {FEATURE_MEMORY_BYTES})"
        )
    fm = x
    for layer in net.layers:
        acc = ternary_conv(fm, layer)
        if layer.is_final:
            scores = acc.sum(axis=(0, 1), dtype=np.int64)
            return CutieResult(scores, int(np.argmax(scores)))
        fm = ternarize(acc, layer)
        if layer.pool == "max2x2":
            fm = max_pool2x2(fm)
    # no classifier head: treat the last feature map's per-channel sums as scores
    scores = fm.data.sum(axis=(0, 1), dtype=np.int64)
    return CutieResult(scores, int(np.argmax(scores)) if scores.size else 0)


@dataclass(frozen=True)
class CycleEstimate:
    cycles: int
    freq_hz: float

    @property
    def inf_per_s(self) -> float:
        return self.freq_hz / self.cycles if self.cycles else 0.0


def cutie_cycles(net: CutieNetwork, freq_hz: float = 330e6, overhead_per_layer: int = 0) -> CycleEstimate:
    """One conv output pixel per cycle, all output channels in parallel."""
    for layer in net.layers:
        layer.check_shape()
    pixels = sum(conv[0] * conv[1] for _, conv, _ in net.layer_dims())
    return CycleEstimate(pixels + overhead_per_layer * len(net.layers), freq_hz)


@dataclass(frozen=True)
class CutieMemoryReport:
    weight_trits: int
    weight_bytes: int
    fm_bytes: int
    fits: bool


def cutie_memcheck(net: CutieNetwork) -> CutieMemoryReport:
    # weights are stored as one contiguous trit stream
    trits = sum(int(l.weights.size) for l in net.layers)
    weight_bytes = packed_size_bits(trits) // 8
    fm_bytes = 0
    for (ih, iw, ic), _, (oh, ow, oc) in net.layer_dims():
        need = packed_size_bits(ih * iw * ic) // 8 + packed_size_bits(oh * ow * oc) // 8
        fm_bytes = max(fm_bytes, need)
    fits = weight_bytes <= WEIGHT_MEMORY_BYTES and fm_bytes <= FEATURE_MEMORY_BYTES
    return CutieMemoryReport(trits, weight_bytes, fm_bytes, fits)


def count_ops(net: CutieNetwork) -> int:
    """Ternary ops, counting one MAC as two ops."""
    total = 0
    for layer, (_, (h, w, _), _) in zip(net.layers, net.layer_dims()):
        total += h * w * layer.c_out * layer.c_in * layer.kernel**2
    return 2 * total

