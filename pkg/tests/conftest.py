import math

import pytest

from slotmac import metrics, policies
from slotmac.core import ArrivalSpec
from slotmac.frame import FrameLayout, Simulation


def run_sim(policy, spec, layout=None, seed=0, horizon=50_000, warmup=5_000, **kw):
    sim = Simulation(policy, spec, layout=layout, seed=seed, horizon=horizon,
                     warmup=warmup, **kw)
    acc = sim.run()
    return sim, acc


def binomial_band(n, p, z=3.0):
    """Symmetric z-sigma band for a Binomial(n, p) frequency estimate."""
    return z * math.sqrt(max(p * (1.0 - p), 1e-12) / n)


LAYOUTS = {
    "oracle": FrameLayout(0, 0, 0),
    "tdma": FrameLayout(0, 0, 0),
    "cyclic": FrameLayout(0, 1, 0),
    "qzmac": FrameLayout(0, 3, 9),
    "qzmac_matched": FrameLayout(0, 3, 7),
    "ezmac_matched": FrameLayout(0, 2, 8),
    "zmac_matched": FrameLayout(0, 1, 9),
}
