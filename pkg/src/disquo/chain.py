"""Exact Markov-chain analysis of Basic DISQUO for small switches.

With the weights frozen, the schedule process is a finite Markov chain on
the set of partial matchings of an N x N switch. This module enumerates
that set, builds the transition matrix by summing over every permutation H,
and checks the product-form stationary law, detailed balance, mixing and
concentration bounds numerically.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .baselines import mwm
from .disquo import WeightConfig, activation_probability, f, f_prime
from .hamiltonian import HamiltonianWalk

MAX_EXACT_N = 4
CHAIN_H_MODES = ("uniform-random", "hamiltonian-cycle-averaged")
CONDUCTANCE_MAX_STATES = 20


def enumerate_schedules(n: int) -> list[tuple[tuple[int, int], ...]]:
    """All partial matchings of an n x n switch, as sorted pair tuples.

    Canonical order: by number of active pairs, then lexicographically.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAX_EXACT_N:
        raise ValueError(
            f"exact enumeration is limited to n <= {MAX_EXACT_N}; "
            "use simulation (basic_update) for larger switches"
        )
    states = []
    for k in range(n + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(n), k):
                states.append(tuple(zip(rows, cols)))
    states.sort(key=lambda s: (len(s), s))
    return states


def state_matrix(state, n: int) -> np.ndarray:
    x = np.zeros((n, n), dtype=np.int64)
    for i, j in state:
        x[i, j] = 1
    return x


def state_weight(state, weights) -> float:
    return float(sum(weights[i][j] for i, j in state))


@dataclass
class ChainModel:
    states: list
    P: np.ndarray
    weights: np.ndarray
    pi: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def index(self, state) -> int:
        return self.states.index(tuple(sorted(state)))


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n, n):
        raise ValueError(f"weights must have shape ({n}, {n})")
    return w


def _permutations(n: int, h_mode: str):
    if h_mode == "uniform-random":
        return [np.array(p) for p in itertools.permutations(range(n))]
    if h_mode == "hamiltonian-cycle-averaged":
        walk = HamiltonianWalk(n)
        return [next(walk) for _ in range(walk.period)]
    raise ValueError(f"h_mode must be one of {CHAIN_H_MODES}")


def transition_matrix(weights, n: int, h_mode: str = "uniform-random") -> np.ndarray:
    """Transition matrix of Basic DISQUO with frozen weights.

    For each permutation H the pairs (i, H[i]) update independently: an
    active pair stays on with probability p, a pair whose row and column are
    empty turns on with probability p, and every other pair keeps its value.
    P is the average of these per-H kernels over the permutations.
    """
    w = _check_weights(weights, n)
    p = activation_probability(w)
    states = enumerate_schedules(n)
    index = {s: k for k, s in enumerate(states)}
    perms = _permutations(n, h_mode)
    P = np.zeros((len(states), len(states)))

    for a, state in enumerate(states):
        active = set(state)
        rows = {i for i, _ in state}
        cols = {j for _, j in state}
        for h in perms:
            # (pair, on-probability) for pairs that may change; the rest are fixed
            fixed = set(active)
            movable = []
            for i in range(n):
                pair = (i, int(h[i]))
                if pair in active:
                    fixed.discard(pair)
                    movable.append((pair, p[pair]))
                elif i not in rows and pair[1] not in cols:
                    movable.append((pair, p[pair]))
            for outcome in itertools.product((0, 1), repeat=len(movable)):
                prob = 1.0
                nxt = set(fixed)
                for (pair, q), on in zip(movable, outcome):
                    if on:
                        prob *= q
                        nxt.add(pair)
                    else:
                        prob *= 1.0 - q
                P[a, index[tuple(sorted(nxt))]] += prob
    P /= len(perms)
    return P


def stationary_product_form(weights, n: int) -> np.ndarray:
    """pi(X) proportional to exp(sum of W over the active pairs of X)."""
    w = _check_weights(weights, n)
    logs = np.array([state_weight(s, w) for s in enumerate_schedules(n)])
    return np.exp(logs - logsumexp(logs))


def build_chain(weights, n: int, h_mode: str = "uniform-random") -> ChainModel:
    w = _check_weights(weights, n)
    return ChainModel(enumerate_schedules(n), transition_matrix(w, n, h_mode), w,
                      stationary_product_form(w, n))


@dataclass(frozen=True)
class ReversibilityReport:
    residual: float          # max |pi(x) P(x, y) - pi(y) P(y, x)|
    irreducible: bool        # every state reachable from the empty schedule
    max_depth: int           # BFS depth needed to reach the last state


def verify_reversibility(P, pi) -> ReversibilityReport:
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if P.shape != (pi.size, pi.size):
        raise ValueError("P and pi dimensions do not match")
    flow = pi[:, None] * P
    residual = float(np.abs(flow - flow.T).max()) if pi.size else 0.0

    # index 0 is the empty schedule in canonical order
    depth = {0: 0}
    todo = deque([0])
    while todo:
        a = todo.popleft()
        for b in np.flatnonzero(P[a] > 0):
            b = int(b)
            if b not in depth:
                depth[b] = depth[a] + 1
                todo.append(b)
    return ReversibilityReport(residual, len(depth) == pi.size, max(depth.values()))


@dataclass(frozen=True)
class DistanceReport:
    tv: float
    chi: float
    slack: float   # chi - 2 tv, never negative


def distances(mu, nu) -> DistanceReport:
    """Total-variation distance and chi-square distance of ``nu`` from ``mu``."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("distributions must have the same support")
    tv = 0.5 * float(np.abs(mu - nu).sum())
    if np.any((mu == 0) & (nu > 0)):
        chi = math.inf
    else:
        s = mu > 0
        chi = math.sqrt(float((mu[s] * (nu[s] / mu[s] - 1.0) ** 2).sum()))
    return DistanceReport(tv, chi, chi - 2.0 * tv)


@dataclass(frozen=True)
class SpectralReport:
    e_max: float
    t_mix: float
    eigenvalues: np.ndarray


def spectral_mixing(P, pi, tol: float = 1e-10) -> SpectralReport:
    """Second-largest eigenvalue modulus and relaxation time ``1 / (1 - e_max)``."""
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    rev = verify_reversibility(P, pi)
    if rev.residual > tol:
        raise ValueError(f"chain is not reversible (residual {rev.residual:.3e})")
    d = np.sqrt(pi)
    s = d[:, None] * P / d[None, :]
    ev = np.linalg.eigvalsh(0.5 * (s + s.T))
    ev = ev[np.argsort(-np.abs(ev))]
    # drop the unit eigenvalue of the stationary vector
    rest = np.delete(ev, int(np.argmin(np.abs(ev - 1.0))))
    e_max = float(np.abs(rest).max()) if rest.size else 0.0
    return SpectralReport(e_max, 1.0 / (1.0 - e_max), np.sort(ev)[::-1])


def conductance(P, pi) -> float | None:
    """Exact bottleneck ratio over every subset with pi(S) <= 1/2.

    Returns ``None`` when there are too many states to enumerate subsets.
    """
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    m = pi.size
    if m > CONDUCTANCE_MAX_STATES:
        return None
    if m < 2:
        return 1.0
    flow = pi[:, None] * P
    bits = np.arange(m, dtype=np.int64)
    best = math.inf
    chunk = 1 << 14
    for start in range(1, 1 << m, chunk):
        masks = np.arange(start, min(start + chunk, 1 << m), dtype=np.int64)
        inside = ((masks[:, None] >> bits) & 1).astype(bool)
        mass = inside @ pi
        keep = (mass <= 0.5 + 1e-15) & (mass > 0)
        if not keep.any():
            continue
        inside = inside[keep]
        out = ((inside.astype(float) @ flow) * ~inside).sum(axis=1)
        best = min(best, float((out / mass[keep]).min()))
    return best


def mixing_upper_bound(n_vertices: int, w_max: float) -> float:
    """``2^(6V) exp(4 V w_max)``; ``inf`` when it overflows a double."""
    log_bound = 6 * n_vertices * math.log(2.0) + 4 * n_vertices * w_max
    return math.exp(log_bound) if log_bound < 709 else math.inf


@dataclass(frozen=True)
class ConcentrationReport:
    skipped: bool
    w_star: float
    epsilon: float
    pi_k: float = math.nan
    bound: float = math.nan
    log_z: float = math.nan
    free_energy_pi: float = math.nan
    max_free_energy_random: float = math.nan
    notice: str = ""

    @property
    def holds(self) -> bool:
        return self.skipped or (
            self.pi_k <= self.bound
            and self.max_free_energy_random <= self.log_z + 1e-9
            and abs(self.free_energy_pi - self.log_z) <= 1e-9
        )


def free_energy(mu, state_weights) -> float:
    """``E_mu[W] + H(mu)`` with the convention 0 log 0 = 0."""
    mu = np.asarray(mu, dtype=float)
    s = mu > 0
    return float(mu @ state_weights - (mu[s] * np.log(mu[s])).sum())


def concentration_check(weights, epsilon: float, samples: int = 100,
                        seed: int = 0) -> ConcentrationReport:
    """Mass the stationary law puts on schedules far below the best matching."""
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    w_star = mwm(w).weight
    if w_star <= 0.0:
        return ConcentrationReport(True, w_star, epsilon,
                                   notice="maximum matching weight is 0; check skipped")
    states = enumerate_schedules(n)
    sw = np.array([state_weight(s, w) for s in states])
    log_z = float(logsumexp(sw))
    pi = np.exp(sw - log_z)
    low = sw <= (1.0 - epsilon) * w_star
    rng = np.random.default_rng(seed)
    mus = rng.dirichlet(np.ones(len(states)), size=samples)
    return ConcentrationReport(
        skipped=False,
        w_star=w_star,
        epsilon=epsilon,
        pi_k=float(pi[low].sum()),
        bound=math.log(len(states)) / (epsilon * w_star),
        log_z=log_z,
        free_energy_pi=free_energy(pi, sw),
        max_free_energy_random=max(free_energy(mu, sw) for mu in mus),
    )


@dataclass(frozen=True)
class ConvergenceReport:
    alpha_n: float
    alpha_times_tbound: float
    alpha_cap: float   # 2 N^2 f'(smallest effective queue)


def convergence_diagnostics(q_n, q_n1, config: WeightConfig | None = None) -> ConvergenceReport:
    """Weight drift between two consecutive slots against the mixing bound."""
    q_n = np.asarray(q_n, dtype=float)
    q_n1 = np.asarray(q_n1, dtype=float)
    if q_n.shape != q_n1.shape or q_n.ndim != 2 or q_n.shape[0] != q_n.shape[1]:
        raise ValueError("queue snapshots must be square matrices of equal shape")
    if (q_n < 0).any() or (q_n1 < 0).any():
        raise ValueError("queue lengths must be non-negative")
    if np.abs(q_n1 - q_n).max(initial=0.0) > 1:
        raise ValueError("consecutive snapshots may differ by at most 1 per queue")
    config = config or WeightConfig()
    n = q_n.shape[0]
    eff = [np.maximum(config.floor(q.max(), n), q) for q in (q_n, q_n1)]
    fp = [f_prime(e) for e in eff]
    if any((d > 1.0 / (1.0 + e) + 1e-15).any() for d, e in zip(fp, eff)):
        raise AssertionError("f'(x) <= 1/(1+x) violated")
    alpha = float(fp[0].sum() + fp[1].sum())
    cap = 2 * n * n * float(f_prime(min(eff[0].min(), eff[1].min())))
    if alpha > cap * (1 + 1e-12):
        raise AssertionError("alpha_n exceeds 2 N^2 f'(min queue)")
    w_max = float(f(eff[1]).max())
    return ConvergenceReport(alpha, alpha * mixing_upper_bound(n * n, w_max), cap)


MIXING_BOUND_READING = (
    "bound applied with V = N^2 vertices (one per crosspoint); the generic statement "
    "counts graph vertices, this is our reading for the switch conflict graph"
)


def analysis_report(weights, h_mode: str = "uniform-random",
                    epsilons=(0.1, 0.3, 0.5), seed: int = 0) -> dict:
    """Every exact-chain check for one frozen weight matrix, as plain data."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weights must be a square matrix")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    n = w.shape[0]
    model = build_chain(w, n, h_mode)
    rev = verify_reversibility(model.P, model.pi)
    spec = spectral_mixing(model.P, model.pi)
    phi = conductance(model.P, model.pi)
    v = n * n
    bound = mixing_upper_bound(v, float(w.max(initial=0.0)))
    conc = {}
    for eps in epsilons:
        c = concentration_check(w, eps, seed=seed)
        conc[str(eps)] = {
            "skipped": c.skipped, "notice": c.notice, "w_star": c.w_star,
            "pi_K": None if c.skipped else c.pi_k, "bound": None if c.skipped else c.bound,
            "holds": c.holds,
        }
    c0 = concentration_check(w, epsilons[0], seed=seed) if epsilons else None
    return {
        "n": n,
        "h_mode": h_mode,
        "weights": w.tolist(),
        "num_states": len(model.states),
        "states": [[list(p) for p in s] for s in model.states],
        "pi": model.pi.tolist(),
        "row_sum_error": float(np.abs(model.P.sum(axis=1) - 1.0).max()),
        "stationarity_residual": float(np.abs(model.pi @ model.P - model.pi).max()),
        "detailed_balance_residual": rev.residual,
        "irreducible": rev.irreducible,
        "reach_depth_from_empty": rev.max_depth,
        "e_max": spec.e_max,
        "t_mix": spec.t_mix,
        "conductance": phi,
        "conductance_gap_bound": None if phi is None else 1.0 - phi * phi / 2.0,
        "conductance_bound_holds": None if phi is None else spec.e_max <= 1.0 - phi * phi / 2.0 + 1e-12,
        "mixing_upper_bound": bound,
        "mixing_bound_vertices": v,
        "mixing_bound_reading": MIXING_BOUND_READING,
        "t_mix_within_bound": spec.t_mix <= bound,
        "concentration": conc,
        "log_Z": None if c0 is None or c0.skipped else c0.log_z,
        "free_energy_at_pi": None if c0 is None or c0.skipped else c0.free_energy_pi,
        "max_free_energy_random": None if c0 is None or c0.skipped else c0.max_free_energy_random,
    }
