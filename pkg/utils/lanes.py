# utils/lanes.py - Lane partitioning and seed-derived random streams
import hashlib

import numpy as np


def paginate_lanes(total, lanes):
    """Split ``total`` items into at most ``lanes`` contiguous (start, end) slices"""
    if not total:
        return [(0, 0)]
    lanes = max(1, min(int(lanes), int(total)))
    size = (total + lanes - 1) // lanes  # Ceiling division
    return [(start, min(start + size, total)) for start in range(0, total, size)]


def _purpose_key(purpose):
    return int.from_bytes(hashlib.sha256(purpose.encode('utf-8')).digest()[:4], 'little')


def lane_rng(seed, purpose, lane=0):
    """Counter-based (Philox) generator keyed by (seed, purpose, lane)"""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _purpose_key(purpose), int(lane)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def lane_draws(seed, purpose, total, lanes, draw):
    """Concatenate ``draw(rng, count)`` over lanes in lane order"""
    parts = [draw(lane_rng(seed, purpose, lane), end - start)
             for lane, (start, end) in enumerate(paginate_lanes(total, lanes))]
    return np.concatenate(parts, axis=0)
