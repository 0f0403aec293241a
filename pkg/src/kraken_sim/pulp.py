"""Cluster SIMD dot-product semantics and a convolution cycle model.

A 32-bit register holds ``32 // bits`` signed lanes, lane 0 in the least
significant bits. For mixed precision the lane count follows the wider
operand; the narrower operand contributes only its first lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .errors import DegenerateWorkload

CORES = 8
PEAK_UTILIZATION = 0.98
MAC_LD_SPEEDUP = 1.66


class Precision(Enum):
    INT8 = 8
    INT4 = 4
    INT2 = 2

    @property
    def bits(self) -> int:
        return self.value

    @property
    def lanes(self) -> int:
        return 32 // self.value

    @property
    def lo(self) -> int:
        return -(1 << (self.value - 1))

    @property
    def hi(self) -> int:
        return (1 << (self.value - 1)) - 1

    @classmethod
    def from_bits(cls, bits: int) -> "Precision":
        try:
            return cls(int(bits))
        except ValueError:
            raise ValueError(f"unsupported precision: {bits} bits (choose 8, 4 or 2)") from None


def encode(lanes: Sequence[int], p: Precision) -> int:
    """Pack up to ``p.lanes`` signed values into a 32-bit word (missing lanes are 0)."""
    if len(lanes) > p.lanes:
        raise ValueError(f"{len(lanes)} lanes do not fit a 32-bit {p.name} word")
    mask = (1 << p.bits) - 1
    raw = 0
    for i, v in enumerate(lanes):
        if not p.lo <= v <= p.hi:
            raise ValueError(f"lane value {v} out of range for {p.name}")
        raw |= (v & mask) << (i * p.bits)
    return raw


def decode(raw: int, p: Precision) -> list[int]:
    mask = (1 << p.bits) - 1
    sign = 1 << (p.bits - 1)
    out = []
    for i in range(p.lanes):
        v = (raw >> (i * p.bits)) & mask
        out.append(v - (1 << p.bits) if v & sign else v)
    return out


def wrap32(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v & 0x80000000 else v


def simd_dotp(a: int, pa: Precision, b: int, pb: Precision, acc: int = 0) -> int:
    """Widening dot product ``acc + sum(a_i * b_i)`` with 32-bit two's-complement wrap."""
    n = 32 // max(pa.bits, pb.bits)
    la = decode(a & 0xFFFFFFFF, pa)[:n]
    lb = decode(b & 0xFFFFFFFF, pb)[:n]
    return wrap32(acc + sum(x * y for x, y in zip(la, lb)))


@dataclass(frozen=True)
class ConvPatchSpec:
    n_out: int
    c_in: int
    c_out: int
    kernel: int
    a_bits: int = 8
    w_bits: int = 8

    def __post_init__(self):
        for name in ("n_out", "c_in", "c_out", "kernel"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        Precision.from_bits(self.a_bits)
        Precision.from_bits(self.w_bits)

    @property
    def lanes(self) -> int:
        return 32 // max(self.a_bits, self.w_bits)

    @property
    def macs(self) -> int:
        return self.n_out * self.c_out * self.c_in * self.kernel**2


@dataclass(frozen=True)
class ClusterCycleModel:
    """Inner loop issues one SIMD MAC-step per cycle with MAC-LD, two without.

    Each output element costs one inner loop plus ``overhead`` cycles of
    setup and writeback; utilization never exceeds ``utilization_cap``.
    """

    cores: int = CORES
    overhead: float = 0.0
    utilization_cap: float = PEAK_UTILIZATION

    def __post_init__(self):
        if not 0 < self.utilization_cap <= 1:
            raise ValueError("utilization cap must be in (0, 1]")
        if self.cores <= 0 or self.overhead < 0:
            raise ValueError("cores must be positive and overhead non-negative")


# Reference patch for the MAC-LD calibration: 8x8 outputs, 8->16 channels, 3x3, int8.
REFERENCE_PATCH = ConvPatchSpec(n_out=64, c_in=8, c_out=16, kernel=3, a_bits=8, w_bits=8)


@dataclass(frozen=True)
class PatchEstimate:
    cycles: float
    mac_steps: int
    lanes: int
    cores: int

    @property
    def mac_steps_per_cycle_per_core(self) -> float:
        return self.mac_steps / self.cores / self.cycles if self.cycles else 0.0

    @property
    def macs_per_cycle_per_core(self) -> float:
        return self.mac_steps_per_cycle_per_core * self.lanes


def patch_cycles(spec: ConvPatchSpec, mac_ld: bool, model: ClusterCycleModel) -> PatchEstimate:
    inner = math.ceil(spec.c_in * spec.kernel**2 / spec.lanes)
    outputs = spec.n_out * spec.c_out
    steps = outputs * inner
    if steps == 0:
        return PatchEstimate(0.0, 0, spec.lanes, model.cores)
    loops = math.ceil(outputs / model.cores)
    steps_core = loops * inner
    cpi = 1 if mac_ld else 2
    cycles = max(steps_core * cpi + model.overhead * loops, steps_core / model.utilization_cap)
    return PatchEstimate(cycles, steps, spec.lanes, model.cores)


def calibrate_overhead(
    target_speedup: float = MAC_LD_SPEEDUP,
    spec: ConvPatchSpec = REFERENCE_PATCH,
    model: ClusterCycleModel = ClusterCycleModel(),
) -> float:
    """Per-output overhead that makes the MAC-LD speedup on ``spec`` equal ``target_speedup``.

    Solves ``(2 s + O) / (s + O) = target`` for inner-loop length ``s``.
    """
    if not 1 < target_speedup < 2:
        raise ValueError("MAC-LD speedup must lie strictly between 1 and 2")
    inner = math.ceil(spec.c_in * spec.kernel**2 / spec.lanes)
    overhead = inner * (2 - target_speedup) / (target_speedup - 1)
    est = patch_cycles(spec, True, replace(model, overhead=overhead))
    if est.mac_steps_per_cycle_per_core >= model.utilization_cap:
        raise ValueError("reference patch saturates the utilization cap; pick a shorter inner loop")
    return overhead


def mac_ld_speedup(spec: ConvPatchSpec, model: ClusterCycleModel) -> float:
    return patch_cycles(spec, False, model).cycles / patch_cycles(spec, True, model).cycles


def _lanes(precision) -> int:
    if isinstance(precision, Precision):
        return precision.lanes
    if isinstance(precision, tuple):
        return 32 // max(Precision.from_bits(b).bits for b in precision)
    return Precision.from_bits(precision).lanes


def network_cycles(total_macs: int, precision, model: ClusterCycleModel) -> float:
    """Cycles for a whole network running at the utilization cap on all cores."""
    if total_macs <= 0:
        raise DegenerateWorkload("total_macs must be positive")
    steps = math.ceil(total_macs / _lanes(precision))
    return math.ceil(steps / model.cores) / model.utilization_cap


def cluster_inference_rate(total_macs: int, precision, freq_hz: float, model: ClusterCycleModel) -> float:
    if freq_hz <= 0:
        raise DegenerateWorkload("frequency must be positive")
    return freq_hz / network_cycles(total_macs, precision, model)


def macs_for_rate(inf_per_s: float, precision, freq_hz: float, model: ClusterCycleModel) -> int:
    """Back-solve the MAC budget that yields ``inf_per_s`` (calibration helper)."""
    steps_core = freq_hz / inf_per_s * model.utilization_cap
    return round(steps_core * model.cores * _lanes(precision))
