"""Labelled, splittable random streams.

Every stream is derived from ``(master_seed, label)`` through
:class:`numpy.random.SeedSequence`, so adding a new consumer never perturbs the
draws of existing ones.
"""
from __future__ import annotations

import zlib

import numpy as np


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, label_key(label)])
    return np.random.Generator(np.random.PCG64(ss))


def substreams(seed: int, label: str, count: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, label_key(label)])
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(count)]


# Sub-stream labels used by the experiment pipeline; recorded in every output.
TEACHER = "teacher"
DATA = "data"
W0 = "init.W0"
A0 = "init.a0"
MONTE_CARLO = "theory.mc"
LABELS = (TEACHER, DATA, W0, A0, MONTE_CARLO)
