"""Brute-force reference implementations, deliberately independent of kraken_sim internals."""

import math


def scalar_decay(v, steps, num, shift):
    for _ in range(steps):
        v = math.trunc(v * num / 2**shift)
    return v


def scalar_snn(layers, events, latency=0):
    """Per-neuron pure-Python LIF simulation over plain dicts and ints.

    ``layers``: list of dicts with height, width, weights (nested lists
    [c_out][c_in][3][3]), threshold, leak_num, leak_shift.
    Returns (output events, final membranes as dict per layer, sops).
    """
    if not events:
        return [], [{} for _ in layers], 0
    v = [dict() for _ in layers]
    queue = [dict() for _ in layers]
    for e in events:
        queue[0].setdefault(e[0], []).append(tuple(e))
    out, sops = [], 0
    t, horizon = events[0][0], events[-1][0]
    while t <= horizon:
        for li, L in enumerate(layers):
            for key in list(v[li]):
                v[li][key] = scalar_decay(v[li][key], 1, L["leak_num"], L["leak_shift"])
        for li, L in enumerate(layers):
            c_out = len(L["weights"])
            for (_, x, y, c) in queue[li].pop(t, []):
                for co in range(c_out):
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            nx, ny = x + dx, y + dy
                            if 0 <= nx < L["width"] and 0 <= ny < L["height"]:
                                w = L["weights"][co][c][dy + 1][dx + 1]
                                cur = v[li].get((co, ny, nx), 0)
                                v[li][(co, ny, nx)] = max(-128, min(127, cur + w))
                                sops += 1
            fired = sorted(k for k, val in v[li].items() if val >= L["threshold"])
            for k in fired:
                v[li][k] = 0
            spikes = [(t, x, y, co) for (co, y, x) in fired]
            if li == len(layers) - 1:
                out.extend(spikes)
            elif spikes:
                queue[li + 1].setdefault(t + latency, []).extend(spikes)
                horizon = max(horizon, t + latency)
        t += 1
    return out, v, sops


def naive_conv(fm, weights):
    """fm: [h][w][c_in] ints; weights: [c_out][c_in][k][k]. Same padding, stride 1."""
    h, w, c_in = len(fm), len(fm[0]), len(fm[0][0])
    c_out, k = len(weights), len(weights[0][0])
    r = k // 2
    acc = [[[0] * c_out for _ in range(w)] for _ in range(h)]
    for y in range(h):
        for x in range(w):
            for co in range(c_out):
                s = 0
                for dy in range(k):
                    for dx in range(k):
                        yy, xx = y + dy - r, x + dx - r
                        if 0 <= yy < h and 0 <= xx < w:
                            for ci in range(c_in):
                                s += int(weights[co][ci][dy][dx]) * int(fm[yy][xx][ci])
                acc[y][x][co] = s
    return acc


def lanes_of(raw, bits):
    out = []
    for i in range(32 // bits):
        v = (raw >> (i * bits)) & ((1 << bits) - 1)
        if v >= 1 << (bits - 1):
            v -= 1 << bits
        out.append(v)
    return out


def scalar_dotp(a_lanes, b_lanes, acc):
    n = min(len(a_lanes), len(b_lanes))
    total = acc + sum(a_lanes[i] * b_lanes[i] for i in range(n))
    total &= 0xFFFFFFFF
    return total - (1 << 32) if total >= 1 << 31 else total
