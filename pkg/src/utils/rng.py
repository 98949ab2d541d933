"""Seed derivation for reproducible, order-independent random streams."""

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, index: int) -> int:
    """
    Seed of the `index`-th child stream: splitmix64(seed XOR index).

    splitmix64 is a bijection on 64-bit integers, so distinct indices under one seed never
    share a stream.
    """
    return splitmix64((seed & MASK64) ^ (index & MASK64))


def child_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, index))
