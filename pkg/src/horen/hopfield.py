"""Hopfield attractor dynamics over a matrix of stored keys.

Two dynamics live here:

* the standard map ``T(q) = softmax(beta * K q) K`` (``standard_update`` and
  ``iterate_standard``), which descends the energy
  ``E(q) = 0.5*||q||^2 - lse_beta(K q)`` and converges into the convex hull
  of the keys;
* the damped, normalized refinement used for routing (``damped_refine`` and
  its batched twin ``refine_batch``), which moves a unit query a fraction
  ``gamma`` of the way toward ``normalize(T(q))`` for at most ``max_steps``
  steps and stays on the sphere.

``iterate_standard`` is only used by the verification checks; routing never
runs the undamped map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyCodebook, InvalidConfig, NonFiniteLoss
from .geometry import ZERO_NORM_TOL, as_matrix, as_vector, lse, softmax

DEFAULT_BETA = 20.0
DEFAULT_GAMMA = 0.1
DEFAULT_STEPS = 1
DEFAULT_EPSILON = 1e-4
DEFAULT_THRESHOLD = 0.85


@dataclass(frozen=True)
class HopfieldParams:
    """Routing hyperparameters.

    Attributes:
        beta: retrieval sharpness, > 0.
        gamma: damping in (0, 1]; fraction of the move toward the proposal.
        max_steps: number M of damped refinement steps, >= 0.
        epsilon: early-stop tolerance on ``||q_new - q||``.
        c: cosine matching threshold consumed by ``codebook.match``.
    """

    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA
    max_steps: int = DEFAULT_STEPS
    epsilon: float = DEFAULT_EPSILON
    c: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidConfig(f"beta must be > 0, got {self.beta}")
        if not 0 < self.gamma <= 1:
            raise InvalidConfig(f"gamma must lie in (0, 1], got {self.gamma}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 0:
            raise InvalidConfig(f"max_steps must be a non-negative integer, got {self.max_steps}")
        if not self.epsilon >= 0:
            raise InvalidConfig(f"epsilon must be >= 0, got {self.epsilon}")
        if not np.isfinite(self.c):
            raise InvalidConfig("threshold c must be finite")


@dataclass
class IterationTrace:
    """Iterates of one run with per-iterate energy and fixed-point residual.

    ``residuals[s]`` is ``||T(q_s) - q_s||`` for the *standard* map, whatever
    dynamics produced the iterates. ``steps_taken`` counts moves actually
    applied, so ``len(iterates) == steps_taken + 1``.
    """

    iterates: list[np.ndarray]
    energies: list[float]
    residuals: list[float]
    steps_taken: int
    stopped_early: bool
    beta: float
    n_keys: int
    degenerate: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def _check_keys(K, dim: int) -> np.ndarray:
    K = as_matrix(K, "keys")
    if K.shape[0] == 0:
        raise EmptyCodebook("no stored keys")
    if K.shape[1] != dim:
        raise DimensionMismatch(f"query has dimension {dim}, keys have {K.shape[1]}")
    return K


def _scores_state(q: np.ndarray, K: np.ndarray, beta: float, stable: bool):
    """Energy, T(q) and residual from a single pass over the keys."""
    scores = K @ q
    p = softmax(scores, beta, stable=stable)
    t = p @ K
    e = 0.5 * float(q @ q) - lse(scores, beta, stable=stable)
    r = float(np.linalg.norm(t - q))
    return e, t, r


def standard_update(q, K, beta: float, *, stable: bool = True) -> np.ndarray:
    """One step of the standard map: ``softmax(beta * K q) @ K``."""
    q = as_vector(q, "q")
    K = _check_keys(K, q.shape[0])
    return softmax(K @ q, beta, stable=stable) @ K


def energy(q, K, beta: float, *, stable: bool = True) -> float:
    """``0.5*||q||^2 - lse_beta(K q)``.

    For unit ``q`` and unit keys this is at least ``-0.5 - log(C)/beta``.
    """
    q = as_vector(q, "q")
    K = _check_keys(K, q.shape[0])
    return 0.5 * float(q @ q) - lse(K @ q, beta, stable=stable)


def energy_lower_bound(n_keys: int, beta: float) -> float:
    return -0.5 - np.log(n_keys) / beta


def damped_refine(q0, K, params: HopfieldParams) -> tuple[np.ndarray, IterationTrace]:
    """Damped, normalized refinement of a unit query, with a full trace.

    Each step computes ``q_new = normalize(softmax(beta K q) K)``; if
    ``||q_new - q|| <= epsilon`` the loop breaks *before* moving, otherwise
    ``q <- normalize((1-gamma) q + gamma q_new)``. A zero proposal or a zero
    mix cannot be normalized; the current ``q`` is returned and the trace is
    flagged ``degenerate``.
    """
    q = as_vector(q0, "q0")
    K = _check_keys(K, q.shape[0])
    beta = params.beta
    e, t, r = _scores_state(q, K, beta, True)
    iterates, energies, residuals = [q.copy()], [e], [r]
    steps = 0
    stopped = degenerate = False
    for _ in range(params.max_steps):
        n = float(np.linalg.norm(t))
        if n < ZERO_NORM_TOL:
            degenerate = True
            break
        q_new = t / n
        if float(np.linalg.norm(q_new - q)) <= params.epsilon:
            stopped = True
            break
        mix = (1.0 - params.gamma) * q + params.gamma * q_new
        nm = float(np.linalg.norm(mix))
        if nm < ZERO_NORM_TOL:
            degenerate = True
            break
        q = mix / nm
        steps += 1
        e, t, r = _scores_state(q, K, beta, True)
        iterates.append(q.copy())
        energies.append(e)
        residuals.append(r)
    trace = IterationTrace(iterates, energies, residuals, steps, stopped, beta, K.shape[0], degenerate)
    return q, trace


def refine_batch(Q0, K, params: HopfieldParams, chunk: int = 256):
    """Row-wise ``damped_refine`` for a batch of unit queries, without traces.

    Returns ``(Q, steps)`` where ``steps[i]`` is the number of damped moves
    applied to row ``i``. Degenerate rows are left where they stopped.
    """
    Q0 = as_matrix(Q0, "queries")
    K = _check_keys(K, Q0.shape[1])
    Q = Q0.copy()
    steps = np.zeros(Q.shape[0], dtype=np.int64)
    if params.max_steps == 0:
        return Q, steps
    for lo in range(0, Q.shape[0], chunk):
        hi = min(lo + chunk, Q.shape[0])
        rows = np.arange(lo, hi)
        for _ in range(params.max_steps):
            if rows.size == 0:
                break
            q = Q[rows]
            proposal = softmax(q @ K.T, params.beta) @ K
            n = np.linalg.norm(proposal, axis=1)
            ok = n >= ZERO_NORM_TOL
            q_new = proposal[ok] / n[ok, None]
            q, rows = q[ok], rows[ok]
            moving = np.linalg.norm(q_new - q, axis=1) > params.epsilon
            q, q_new, rows = q[moving], q_new[moving], rows[moving]
            mix = (1.0 - params.gamma) * q + params.gamma * q_new
            nm = np.linalg.norm(mix, axis=1)
            ok = nm >= ZERO_NORM_TOL
            rows = rows[ok]
            Q[rows] = mix[ok] / nm[ok, None]
            steps[rows] += 1
    return Q, steps


def iterate_standard(
    q0,
    K,
    beta: float,
    max_steps: int = 10_000,
    tol: float = 1e-8,
    *,
    stable: bool = True,
) -> IterationTrace:
    """Iterate the undamped, unnormalized map ``q <- T(q)``.

    Stops once the residual ``||T(q) - q||`` of the current iterate is at most
    ``tol`` or after ``max_steps`` applications of T. The residual of the last
    recorded iterate is always evaluated.

    Raises:
        NonFiniteLoss: if an energy or iterate overflows to NaN/Inf.
    """
    q = as_vector(q0, "q0")
    K = _check_keys(K, q.shape[0])
    iterates, energies, residuals = [q.copy()], [], []
    s = 0
    while True:
        e, t, r = _scores_state(q, K, beta, stable)
        if not (np.isfinite(e) and np.isfinite(r)):
            raise NonFiniteLoss(f"non-finite energy/residual at step {s} (beta={beta})")
        energies.append(e)
        residuals.append(r)
        if r <= tol or s >= max_steps:
            break
        q = t
        s += 1
        iterates.append(q.copy())
    return IterationTrace(iterates, energies, residuals, s, residuals[-1] <= tol, beta, K.shape[0])


def random_unit(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """``n`` rows drawn uniformly from the unit sphere in ``R^d``."""
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass
class RandomInstance:
    keys: np.ndarray
    q0: np.ndarray
    beta: float
    meta: dict = field(default_factory=dict)


def random_instances(
    n: int,
    seed: int = 0,
    c_range: tuple[int, int] = (1, 64),
    d_range: tuple[int, int] = (2, 32),
    betas: tuple[float, ...] = (1.0, 5.0, 20.0),
):
    """Yield random (keys, unit start, beta) triples for the theory checks."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        c = int(rng.integers(c_range[0], c_range[1] + 1))
        d = int(rng.integers(d_range[0], d_range[1] + 1))
        beta = float(rng.choice(betas))
        yield RandomInstance(random_unit(rng, c, d), random_unit(rng, 1, d)[0], beta)
