"""Cross-traffic burst sizes and seeding helpers."""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .scenario import PeriodicBursts, ScenarioError

CHUNK = 4096


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Child sequence of ``seed`` addressed by ``key``; no shared state between calls."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def chunk_rng(seed: np.random.SeedSequence, j: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, j)))


def truncated_mean(law: str, scale: float, shape: float, cap: float) -> float:
    """``E[min(X, cap)]`` for exponential (mean ``scale``) or Pareto (minimum ``scale``)."""
    if law == "exponential":
        return scale * -math.expm1(-cap / scale)
    if law == "pareto":
        if scale >= cap:
            return cap
        return (shape * scale - scale**shape * cap ** (1.0 - shape)) / (shape - 1.0)
    if law == "constant":
        return min(scale, cap)
    raise ScenarioError(f"cross_traffic.burst_law: unknown law {law!r}")


def solve_scale(law: str, mean_bytes: float, shape: float, truncation_bytes: float) -> float:
    """Scale parameter making the capped mean equal ``mean_bytes``."""
    if not mean_bytes > 0:
        raise ScenarioError("cross_traffic.mean_burst_bytes: must be > 0")
    if law == "pareto" and not shape > 1:
        raise ScenarioError("cross_traffic.pareto_shape: must be > 1")
    if mean_bytes >= truncation_bytes:
        raise ScenarioError(
            f"cross_traffic.mean_burst_bytes: mean {mean_bytes} not reachable below the "
            f"truncation {truncation_bytes}")
    if law == "constant":
        return float(mean_bytes)
    # the capped mean is increasing in the scale and tends to the cap
    f = lambda s: truncated_mean(law, s, shape, truncation_bytes) - mean_bytes
    hi = mean_bytes
    while f(hi) < 0:
        hi *= 2.0
    lo = mean_bytes * 1e-6
    return float(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-14))


def _draw(rng: np.random.Generator, law: str, scale: float, shape: float, n: int) -> np.ndarray:
    if law == "exponential":
        return rng.exponential(scale, n)
    if law == "pareto":
        # numpy's pareto is Lomax; shift to the classical Pareto with minimum ``scale``
        return scale * (1.0 + rng.pareto(shape, n))
    return np.full(n, scale)


def burst_sizes(cross: PeriodicBursts, seed, count: int, scale: float | None = None) -> np.ndarray:
    """First ``count`` burst sizes in bytes; prefixes agree across different ``count``."""
    if scale is None:
        scale = solve_scale(cross.burst_law, cross.mean_burst_bytes, cross.pareto_shape,
                            cross.truncation_bytes)
    chunks = []
    for j in range(-(-count // CHUNK)):
        x = _draw(chunk_rng(seed, j), cross.burst_law, scale, cross.pareto_shape, CHUNK)
        chunks.append(x)
    x = np.concatenate(chunks)[:count] if chunks else np.empty(0)
    x = np.minimum(x, cross.truncation_bytes)
    return np.maximum(np.rint(x), 1).astype(np.int64)


def generate_cross_burst_sizes(law: str, mean_bytes: float, shape: float = 1.5,
                               truncation_bytes: int = 65536, count: int = 1,
                               seed=0) -> list[int]:
    """I.i.d. burst sizes in bytes, capped at ``truncation_bytes``."""
    scale = solve_scale(law, mean_bytes, shape, truncation_bytes)
    cross = PeriodicBursts(1.0, law, mean_bytes, shape if law == "pareto" else 1.5,
                           truncation_bytes)
    return burst_sizes(cross, seed_sequence(seed), count, scale).tolist()


def fragment(sizes, fragment_bytes: int = 1500) -> tuple[np.ndarray, np.ndarray]:
    """Split bursts into packets of at most ``fragment_bytes``.

    Returns ``(packet_sizes, burst_index)``.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    if np.any(sizes < 1):
        raise ValueError("burst sizes must be positive")
    pieces = -(-sizes // fragment_bytes)
    owner = np.repeat(np.arange(sizes.shape[0]), pieces)
    out = np.full(owner.shape[0], fragment_bytes, dtype=np.int64)
    last = np.cumsum(pieces) - 1
    out[last] = sizes - (pieces - 1) * fragment_bytes
    return out, owner
