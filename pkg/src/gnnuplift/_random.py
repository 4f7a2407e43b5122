"""Seeded random streams shared by every stage.

All randomness goes through :func:`make_rng`, which wraps numpy's PCG64
bit generator. Normal deviates are produced by the Box-Muller transform on
top of the PCG64 uniforms (not numpy's ziggurat), so that the stream can be
reproduced from the uniform sequence alone.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.PCG64/box-muller"


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(seed: int, stage: str) -> int:
    """Derive a stable per-stage seed from the global seed and a stage name."""
    key = [ord(c) for c in stage]
    ss = np.random.SeedSequence([int(seed), *key])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal deviates via the basic Box-Muller transform.

    Draws ``2 * ceil(size / 2)`` uniforms ``u1, u2`` and returns
    ``sqrt(-2 ln u1) * cos(2 pi u2)`` followed by the matching ``sin`` branch.
    ``u1`` is taken as ``1 - U`` so it lies in ``(0, 1]``.
    """
    half = (size + 1) // 2
    u = rng.random((2, half))
    r = np.sqrt(-2.0 * np.log1p(-u[0]))
    theta = 2.0 * np.pi * u[1]
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
    return z[:size]
