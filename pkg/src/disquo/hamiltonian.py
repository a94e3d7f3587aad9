"""Permutation streams that drive which pairs may change state each slot.

``HamiltonianWalk`` enumerates all N! permutations in plain-changes order
(Knuth's Algorithm P), so consecutive permutations differ by one adjacent
transposition and the walk wraps around after N! steps.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

H_MODES = ("hamiltonian", "shared-random")


class HamiltonianWalk:
    """Loopless-amortized plain-changes walk over permutations of ``range(n)``.

    ``perm[i]`` is the output assigned to input ``i``.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.period = math.factorial(n)
        self._reset()

    def _reset(self):
        self.perm = np.arange(self.n, dtype=np.int64)
        self._c = [0] * (self.n + 1)
        self._o = [1] * (self.n + 1)
        self.step = 0

    def _advance(self) -> None:
        a, c, o, n = self.perm, self._c, self._o, self.n
        j, s = n, 0
        while True:
            q = c[j] + o[j]
            if q < 0:
                o[j] = -o[j]
                j -= 1
                continue
            if q == j:
                if j == 1:
                    # end of the period: the next permutation is the identity again
                    self._reset()
                    return
                s += 1
                o[j] = -o[j]
                j -= 1
                continue
            x, y = j - c[j] + s - 1, j - q + s - 1
            a[x], a[y] = a[y], a[x]
            c[j] = q
            self.step = (self.step + 1) % self.period
            return

    def __iter__(self):
        return self

    def __next__(self) -> np.ndarray:
        """Return the current permutation and move to the next one."""
        out = self.perm.copy()
        self._advance()
        return out


def hamiltonian_next(walk: HamiltonianWalk) -> np.ndarray:
    return next(walk)


def random_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Fisher-Yates shuffle driven by ``n - 1`` uniform doubles."""
    perm = np.arange(n, dtype=np.int64)
    if n > 1:
        u = rng.random(n - 1)
        for t, k in enumerate(range(n - 1, 0, -1)):
            r = int(u[t] * (k + 1))
            perm[k], perm[r] = perm[r], perm[k]
    return perm


class PermutationStream:
    """Current permutation H(n) plus one-slot lookahead H(n+1).

    Every port reads the same stream; free ports need ``upcoming`` to pick the
    crosspoint they serve in advance.
    """

    def __init__(self, n: int, mode: str = "hamiltonian", rng: np.random.Generator | None = None):
        if mode not in H_MODES:
            raise ValueError(f"h_mode must be one of {H_MODES}")
        if mode == "shared-random" and rng is None:
            raise ValueError("shared-random mode needs its own generator")
        self.n = n
        self.mode = mode
        self._rng = rng
        self._walk = HamiltonianWalk(n) if mode == "hamiltonian" else None
        self.current = self._draw()
        self.upcoming = self._draw()

    def _draw(self) -> np.ndarray:
        if self._walk is not None:
            return next(self._walk)
        return random_permutation(self.n, self._rng)

    def advance(self) -> None:
        self.current = self.upcoming
        self.upcoming = self._draw()


class ScriptedStream:
    """Replays a fixed list of permutations (cycling), for hand-built scenarios."""

    def __init__(self, perms: Iterable[Sequence[int]]):
        self._perms = [np.asarray(p, dtype=np.int64) for p in perms]
        if len(self._perms) < 2:
            raise ValueError("need at least two permutations to provide a lookahead")
        self.n = len(self._perms[0])
        self.mode = "scripted"
        self._k = 0

    @property
    def current(self) -> np.ndarray:
        return self._perms[self._k % len(self._perms)]

    @property
    def upcoming(self) -> np.ndarray:
        return self._perms[(self._k + 1) % len(self._perms)]

    def advance(self) -> None:
        self._k += 1


def inverse(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv
