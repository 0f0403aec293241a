import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kraken_sim.io import fixture_path  # noqa: E402
from kraken_sim.sne import Event, LifConfig, LifLayer, SneNetwork  # noqa: E402


@pytest.fixture
def fixtures():
    return fixture_path


def random_sne(seed, max_dim=8, max_ch=4, max_layers=2, max_ticks=50, max_events=200):
    """Small random network and sorted stream for oracle comparisons."""
    rng = np.random.default_rng(seed)
    h, w = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
    n_layers = int(rng.integers(1, max_layers + 1))
    chans = [int(v) for v in rng.integers(1, max_ch + 1, size=n_layers + 1)]
    layers = []
    for i in range(n_layers):
        shift = int(rng.integers(0, 9))
        num = int(rng.integers(0, min(255, 1 << shift) + 1))
        cfg = LifConfig(int(rng.integers(1, 20)), num, shift)
        wts = rng.integers(-8, 8, size=(chans[i + 1], chans[i], 3, 3))
        layers.append(LifLayer(h, w, wts, cfg))
    ticks = int(rng.integers(1, max_ticks + 1))
    n = int(rng.integers(0, max_events + 1))
    t = np.sort(rng.integers(0, ticks, size=n))
    xs = rng.integers(0, w, size=n)
    ys = rng.integers(0, h, size=n)
    cs = rng.integers(0, chans[0], size=n)
    events = [Event(int(a), int(b), int(c), int(d)) for a, b, c, d in zip(t, xs, ys, cs)]
    return SneNetwork(layers), events


def as_scalar_layers(net):
    return [
        {
            "height": l.height,
            "width": l.width,
            "weights": l.weights.tolist(),
            "threshold": l.cfg.threshold,
            "leak_num": l.cfg.leak_num,
            "leak_shift": l.cfg.leak_shift,
        }
        for l in net.layers
    ]
