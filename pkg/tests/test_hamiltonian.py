import itertools
import math

import numpy as np
import pytest

from disquo.hamiltonian import (
    HamiltonianWalk,
    PermutationStream,
    ScriptedStream,
    hamiltonian_next,
    inverse,
    random_permutation,
)


def one_based(p):
    return "".join(str(v + 1) for v in p)


def test_three_port_order():
    walk = HamiltonianWalk(3)
    seen = [one_based(hamiltonian_next(walk)) for _ in range(12)]
    assert seen[:6] == ["123", "132", "312", "321", "231", "213"]
    assert seen[6:] == seen[:6]


def test_single_port():
    walk = HamiltonianWalk(1)
    assert all(hamiltonian_next(walk).tolist() == [0] for _ in range(5))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_period_and_adjacent_moves(n):
    walk = HamiltonianWalk(n)
    perms = [tuple(next(walk)) for _ in range(math.factorial(n) + 1)]
    assert len(set(perms[:-1])) == math.factorial(n)
    assert perms[-1] == perms[0]
    for a, b in zip(perms, perms[1:]):
        diff = [k for k in range(n) if a[k] != b[k]]
        assert len(diff) == 2 and diff[1] == diff[0] + 1


def test_random_permutation_uniform():
    rng = np.random.default_rng(1)
    counts = {}
    m = 60000
    for _ in range(m):
        p = tuple(random_permutation(3, rng))
        counts[p] = counts.get(p, 0) + 1
    assert set(counts) == set(itertools.permutations(range(3)))
    for c in counts.values():
        assert abs(c / m - 1 / 6) < 4 * math.sqrt((1 / 6) * (5 / 6) / m)


def test_stream_lookahead():
    s = PermutationStream(4)
    walk = HamiltonianWalk(4)
    first, second = next(walk), next(walk)
    assert (s.current == first).all() and (s.upcoming == second).all()
    s.advance()
    assert (s.current == second).all() and (s.upcoming == next(walk)).all()


def test_stream_validation():
    with pytest.raises(ValueError):
        PermutationStream(3, "shared-random")
    with pytest.raises(ValueError):
        PermutationStream(3, "other")
    with pytest.raises(ValueError):
        ScriptedStream([[0, 1]])


def test_scripted_stream_cycles():
    s = ScriptedStream([[1, 0, 2], [2, 0, 1]])
    assert s.current.tolist() == [1, 0, 2] and s.upcoming.tolist() == [2, 0, 1]
    s.advance()
    assert s.upcoming.tolist() == [1, 0, 2]


def test_inverse():
    p = np.array([2, 0, 1])
    assert (p[inverse(p)] == np.arange(3)).all()
