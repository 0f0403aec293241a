"""Event-driven spiking CNN engine with integer LIF neurons.

Events are COO records ``(tick, x, y, c)``. Each layer holds 4-bit signed
3x3 kernels and an int8 membrane per output neuron. Leak is applied lazily:
a neuron is caught up to the current tick only when an event touches it,
using the same per-tick integer recurrence as :func:`dense_reference`.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInput, InvalidDims, MemoryBudgetExceeded, OutOfBounds, UnsortedStream

V_MIN, V_MAX = -128, 127
W_MIN, W_MAX = -8, 7
KERNEL = 3
STATE_BUDGET_BYTES = 8 * 8 * 1024  # eight 8 KiB neuron state memories
WEIGHT_BUDGET_ENTRIES = 2 * 9200  # 4-bit entries in the 9.2 kB weight buffer


class Event(NamedTuple):
    tick: int
    x: int
    y: int
    c: int


@dataclass(frozen=True)
class LifConfig:
    """Threshold and fixed-point leak ``V <- trunc(V * leak_num / 2**leak_shift)``."""

    threshold: int
    leak_num: int
    leak_shift: int

    def __post_init__(self):
        if not 1 <= self.threshold <= V_MAX:
            raise ValueError(f"threshold must be in [1, {V_MAX}], got {self.threshold}")
        if not 0 <= self.leak_num <= 255:
            raise ValueError(f"leak_num must be in [0, 255], got {self.leak_num}")
        if not 0 <= self.leak_shift <= 8:
            raise ValueError(f"leak_shift must be in [0, 8], got {self.leak_shift}")
        if self.leak_num > (1 << self.leak_shift):
            raise ValueError("leak factor leak_num / 2**leak_shift must not exceed 1")


def _decay_once(v: np.ndarray, num: int, shift: int) -> np.ndarray:
    p = v.astype(np.int32) * num
    return np.where(p >= 0, p >> shift, -((-p) >> shift))


def lif_decay(v: int, dt: int, cfg: LifConfig) -> int:
    """Apply the per-tick leak ``dt`` times to a scalar membrane."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    for _ in range(dt):
        p = v * cfg.leak_num
        nxt = p >> cfg.leak_shift if p >= 0 else -((-p) >> cfg.leak_shift)
        if nxt == v:
            break
        v = nxt
    return v


def _decay_steps(v: np.ndarray, steps: np.ndarray, cfg: LifConfig) -> np.ndarray:
    """Elementwise: apply the leak ``steps[i]`` times to ``v[i]``."""
    v = v.astype(np.int32)
    remaining = steps.astype(np.int64).copy()
    while True:
        active = remaining > 0
        if not active.any():
            return v
        nxt = _decay_once(v[active], cfg.leak_num, cfg.leak_shift)
        changed = nxt != v[active]
        v[active] = nxt
        remaining[active] -= 1
        # elements at a fixed point of the recurrence stay there
        idx = np.flatnonzero(active.reshape(-1))
        remaining.reshape(-1)[idx[~changed.reshape(-1)]] = 0


class LifLayer:
    """One 3x3 spiking convolution layer with ``same`` padding.

    ``weights`` has shape ``(c_out, c_in, 3, 3)``. An input event at
    ``(x, y, c)`` adds ``weights[co, c, dy + 1, dx + 1]`` to the neuron at
    ``(x + dx, y + dy, co)`` for every in-bounds offset.
    """

    def __init__(self, height: int, width: int, weights, cfg: LifConfig):
        w = np.asarray(weights)
        if w.ndim != 4 or w.shape[2:] != (KERNEL, KERNEL):
            raise InvalidDims(f"weights must have shape (c_out, c_in, 3, 3), got {w.shape}")
        if w.size and (w.min() < W_MIN or w.max() > W_MAX):
            raise ValueError(f"weights must be 4-bit signed in [{W_MIN}, {W_MAX}]")
        if height <= 0 or width <= 0 or w.shape[0] <= 0 or w.shape[1] <= 0:
            raise InvalidDims("layer dims must be positive")
        self.height = int(height)
        self.width = int(width)
        self.weights = w.astype(np.int8)
        self.weights.setflags(write=False)
        self.cfg = cfg
        self.reset()

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def neurons(self) -> int:
        return self.height * self.width * self.c_out

    def reset(self) -> None:
        shape = (self.c_out, self.height, self.width)
        self.v = np.zeros(shape, dtype=np.int16)
        self.last = np.zeros(shape, dtype=np.int64)
        self.touched = np.zeros(shape, dtype=bool)
        self.sops = 0
        self.compares = 0
        self.spikes = 0

    def check_event(self, e: Event) -> None:
        if not (0 <= e.x < self.width and 0 <= e.y < self.height and 0 <= e.c < self.c_in):
            raise OutOfBounds(
                f"event {tuple(e)} outside layer input dims "
                f"(w={self.width}, h={self.height}, c={self.c_in})"
            )
        if e.tick < 0:
            raise OutOfBounds(f"negative tick in event {tuple(e)}")

    def inject_event(self, e: Event) -> list[tuple[int, int, int]]:
        """Integrate one input event; returns touched ``(x, y, c_out)`` coordinates."""
        self.check_event(e)
        y0, y1 = max(e.y - 1, 0), min(e.y + 1, self.height - 1) + 1
        x0, x1 = max(e.x - 1, 0), min(e.x + 1, self.width - 1) + 1
        region = (slice(None), slice(y0, y1), slice(x0, x1))
        dt = e.tick - self.last[region]
        if (dt < 0).any():
            raise ValueError(f"event at tick {e.tick} arrives after neuron state advanced past it")
        v = _decay_steps(self.v[region], dt, self.cfg)
        w = self.weights[:, e.c, y0 - e.y + 1 : y1 - e.y + 1, x0 - e.x + 1 : x1 - e.x + 1]
        self.v[region] = np.clip(v + w, V_MIN, V_MAX)
        self.last[region] = e.tick
        self.touched[region] = True
        self.sops += v.size
        return [
            (x, y, co)
            for co in range(self.c_out)
            for y in range(y0, y1)
            for x in range(x0, x1)
        ]

    def end_of_tick(self, tick: int, touched: Iterable[tuple[int, int, int]] | None = None) -> list[Event]:
        """Threshold every touched neuron, fire and reset; events sorted by (c_out, y, x)."""
        mask = self.touched
        if touched is not None:
            mask = np.zeros_like(self.touched)
            for x, y, co in touched:
                mask[co, y, x] = True
        self.compares += int(mask.sum())
        fire = mask & (self.v >= self.cfg.threshold)
        cs, ys, xs = np.nonzero(fire)
        self.v[fire] = 0
        self.touched[:] = False
        self.spikes += len(cs)
        return [Event(tick, int(x), int(y), int(c)) for c, y, x in zip(cs, ys, xs)]

    def membranes(self, tick: int) -> np.ndarray:
        """Membrane potentials caught up to ``tick``, shape ``(c_out, h, w)``."""
        return _decay_steps(self.v, np.maximum(tick - self.last, 0), self.cfg).astype(np.int16)


@dataclass(frozen=True)
class MemoryReport:
    state_bytes: int
    weight_entries: int
    fits: bool


class SneNetwork:
    """Chain of :class:`LifLayer`; ``latency`` ticks between consecutive layers (default 0)."""

    def __init__(self, layers: Sequence[LifLayer], latency: int = 0):
        self.layers = list(layers)
        if latency < 0:
            raise ValueError("latency must be non-negative")
        self.latency = int(latency)
        for a, b in zip(self.layers, self.layers[1:]):
            if (a.height, a.width, a.c_out) != (b.height, b.width, b.c_in):
                raise InvalidDims(
                    f"layer output {(a.height, a.width, a.c_out)} does not match next input "
                    f"{(b.height, b.width, b.c_in)}"
                )

    @property
    def input_dims(self) -> tuple[int, int, int]:
        first = self.layers[0]
        return first.height, first.width, first.c_in

    def reset(self) -> None:
        for layer in self.layers:
            layer.reset()


def check_memory_budget(net: SneNetwork) -> MemoryReport:
    state = sum(l.height * l.width * l.c_out for l in net.layers)
    weights = sum(l.weights.size for l in net.layers)
    return MemoryReport(state, weights, state <= STATE_BUDGET_BYTES and weights <= WEIGHT_BUDGET_ENTRIES)


@dataclass(frozen=True)
class SneStats:
    input_events: int
    spikes: tuple[int, ...]
    sops: int
    compares: int
    ticks_observed: int
    activity: tuple[float, ...]
    input_activity: float


@dataclass
class SneResult:
    events: list[Event]
    stats: SneStats
    membranes: list[np.ndarray] = field(repr=False)
    final_tick: int | None


def _validate(net: SneNetwork, events: Sequence[Event]) -> None:
    if not net.layers:
        raise InvalidDims("network has no layers")
    report = check_memory_budget(net)
    if not report.fits:
        raise MemoryBudgetExceeded(
            f"network needs {report.state_bytes} state bytes (budget {STATE_BUDGET_BYTES}) and "
            f"{report.weight_entries} weights (budget {WEIGHT_BUDGET_ENTRIES})"
        )
    first = net.layers[0]
    prev = None
    for e in events:
        first.check_event(e)
        if prev is not None and e.tick < prev:
            raise UnsortedStream(f"event {tuple(e)} precedes tick {prev}")
        prev = e.tick


def _stats(net, n_in, spikes, sops, compares, first_tick, final_tick):
    ticks = 0 if final_tick is None else final_tick - first_tick + 1
    h, w, c = net.input_dims
    activity = tuple(
        s / (layer.neurons * ticks) if ticks else 0.0 for s, layer in zip(spikes, net.layers)
    )
    return SneStats(
        input_events=n_in,
        spikes=tuple(spikes),
        sops=sops,
        compares=compares,
        ticks_observed=ticks,
        activity=activity,
        input_activity=n_in / (h * w * c * ticks) if ticks else 0.0,
    )


def run_stream(net: SneNetwork, events: Sequence[Event]) -> SneResult:
    """Event-driven inference. Layer emissions cascade within the tick when latency is 0."""
    events = [Event(*e) for e in events]
    _validate(net, events)
    net.reset()
    nl = len(net.layers)
    pending = [defaultdict(list) for _ in range(nl)]
    ticks: list[int] = []
    for e in events:
        if e.tick not in pending[0]:
            ticks.append(e.tick)
        pending[0][e.tick].append(e)
    heapq.heapify(ticks)
    out: list[Event] = []
    first_tick = ticks[0] if ticks else None
    final_tick = None
    while ticks:
        t = heapq.heappop(ticks)
        if t == final_tick:
            continue
        final_tick = t
        for li, layer in enumerate(net.layers):
            batch = pending[li].pop(t, None)
            if not batch:
                continue
            for e in batch:
                layer.inject_event(e)
            fired = layer.end_of_tick(t)
            if li == nl - 1:
                out.extend(fired)
            elif fired:
                target = t + net.latency
                pending[li + 1][target].extend(e._replace(tick=target) for e in fired)
                if target != t:
                    heapq.heappush(ticks, target)
    membranes = [l.membranes(final_tick) if final_tick is not None else l.v.copy() for l in net.layers]
    stats = _stats(
        net,
        len(events),
        [l.spikes for l in net.layers],
        sum(l.sops for l in net.layers),
        sum(l.compares for l in net.layers),
        first_tick,
        final_tick,
    )
    return SneResult(out, stats, membranes, final_tick)


def dense_reference(net: SneNetwork, events: Sequence[Event]) -> SneResult:
    """Time-stepped oracle: every tick decays all neurons, delivers events, thresholds all neurons.

    Does not touch the layers' own state.
    """
    events = [Event(*e) for e in events]
    _validate(net, events)
    nl = len(net.layers)
    v = [np.zeros((l.c_out, l.height, l.width), dtype=np.int32) for l in net.layers]
    pending = [defaultdict(list) for _ in range(nl)]
    for e in events:
        pending[0][e.tick].append(e)
    spikes = [0] * nl
    sops = compares = 0
    out: list[Event] = []
    if not events:
        return SneResult(out, _stats(net, 0, spikes, 0, 0, None, None), [a.astype(np.int16) for a in v], None)
    first_tick = events[0].tick
    horizon = events[-1].tick
    t = first_tick
    while t <= horizon:
        for li, layer in enumerate(net.layers):
            v[li] = _decay_once(v[li], layer.cfg.leak_num, layer.cfg.leak_shift)
        for li, layer in enumerate(net.layers):
            h, w = layer.height, layer.width
            reached = np.zeros((h, w), dtype=bool)
            for e in pending[li].pop(t, []):
                delta = np.zeros((layer.c_out, h + 2, w + 2), dtype=np.int32)
                foot = np.zeros((h + 2, w + 2), dtype=bool)
                # padded coordinate of neuron (x+dx, y+dy) is (x+dx+1, y+dy+1)
                delta[:, e.y : e.y + 3, e.x : e.x + 3] = layer.weights[:, e.c]
                foot[e.y : e.y + 3, e.x : e.x + 3] = True
                foot = foot[1:-1, 1:-1]
                v[li] = np.clip(v[li] + delta[:, 1:-1, 1:-1], V_MIN, V_MAX)
                sops += int(foot.sum()) * layer.c_out
                reached |= foot
            compares += int(reached.sum()) * layer.c_out
            fire = v[li] >= layer.cfg.threshold
            cs, ys, xs = np.nonzero(fire)
            v[li][fire] = 0
            spikes[li] += len(cs)
            fired = [Event(t, int(x), int(y), int(c)) for c, y, x in zip(cs, ys, xs)]
            if li == nl - 1:
                out.extend(fired)
            elif fired:
                pending[li + 1][t + net.latency].extend(fired)
                horizon = max(horizon, t + net.latency)
        t += 1
    final_tick = t - 1
    return SneResult(
        out,
        _stats(net, len(events), spikes, sops, compares, first_tick, final_tick),
        [a.astype(np.int16) for a in v],
        final_tick,
    )


def stream_activity(events: Sequence[Event], dims: tuple[int, int, int]) -> float:
    """Input activity: events per input site per observed tick."""
    if not events:
        return 0.0
    h, w, c = dims
    ticks = events[-1].tick - events[0].tick + 1
    if h * w * c <= 0:
        raise DegenerateInput("dims must be positive")
    return len(events) / (h * w * c * ticks)
