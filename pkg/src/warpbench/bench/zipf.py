"""Zipfian rank sampling by rejection inversion.

Ranks k in [1, n] are drawn with P(k) proportional to 1/k**theta by
inverting the integral of the continuous envelope h(x) = x**-theta and
rejecting the overshoot, which stays O(1) per draw for any n. theta may
be any nonnegative skew other than exactly 1 (the envelope integral
changes form there); the YCSB-style default is 0.99.
"""

from __future__ import annotations

import math
import random

from .keys import derive_seed


class ZipfGen:
    def __init__(self, n: int, theta: float = 0.99, seed: int = 0):
        if n < 1:
            raise ValueError("n must be >= 1")
        if theta < 0 or theta == 1.0:
            raise ValueError("theta must be >= 0 and != 1")
        self.n = n
        self.theta = theta
        self._rng = random.Random(derive_seed(seed, n, int(theta * 1e6)))
        self._q = 1.0 - theta
        self._h_x1 = self._h_integral(1.5) - 1.0
        self._h_n = self._h_integral(n + 0.5)
        self._s = 2.0 - self._h_inv(self._h_integral(2.5) - 2.0 ** -theta)

    def _h_integral(self, x: float) -> float:
        # integral of t**-theta from 1 to x
        return (math.exp(self._q * math.log(x)) - 1.0) / self._q

    def _h_inv(self, u: float) -> float:
        return math.exp(math.log1p(u * self._q) / self._q)

    def next(self) -> int:
        rng = self._rng
        n = self.n
        theta = self.theta
        h_n = self._h_n
        span = self._h_x1 - h_n
        while True:
            u = h_n + rng.random() * span
            x = self._h_inv(u)
            k = int(x + 0.5)
            if k < 1:
                k = 1
            elif k > n:
                k = n
            if k - x <= self._s:
                return k
            if u >= self._h_integral(k + 0.5) - math.exp(-theta * math.log(k)):
                return k

    def draw(self, count: int) -> list:
        nxt = self.next
        return [nxt() for _ in range(count)]


def zipf_rank_probability(n: int, theta: float, rank: int) -> float:
    """Closed-form P(rank) from the generalized harmonic normalization."""
    harm = sum(1.0 / (k ** theta) for k in range(1, n + 1))
    return (1.0 / rank ** theta) / harm
