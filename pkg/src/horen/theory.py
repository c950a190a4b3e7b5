"""Executable checks of the energy-descent and convergence properties.

These functions consume traces from ``hopfield.iterate_standard`` and report
margins rather than raising, so a caller can aggregate worst cases over many
random instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hopfield import (
    HopfieldParams,
    IterationTrace,
    energy_lower_bound,
    iterate_standard,
    random_unit,
    refine_batch,
    standard_update,
)

DESCENT_SLACK = 1e-9
CUMULATIVE_SLACK = 1e-8


@dataclass
class DescentReport:
    n_pairs: int
    violations: int
    worst_margin: float  # max over s of (E_{s+1} - E_s) + 0.5*||dq||^2; <= 0 in theory
    cumulative_margin: float  # sum ||dq||^2 - 2*(E_0 - E_M); <= 0 in theory
    cumulative_ok: bool

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.cumulative_ok


def check_descent(trace: IterationTrace, slack: float = DESCENT_SLACK) -> DescentReport:
    """Per-step descent ``E_{s+1} - E_s <= -0.5*||q_{s+1} - q_s||^2`` and its sum."""
    q = np.asarray(trace.iterates)
    e = np.asarray(trace.energies[: len(q)])
    if len(q) < 2:
        return DescentReport(0, 0, -np.inf, 0.0, True)
    sq = np.sum(np.diff(q, axis=0) ** 2, axis=1)
    margins = np.diff(e) + 0.5 * sq
    cumulative = float(sq.sum() - 2.0 * (e[0] - e[-1]))
    return DescentReport(
        n_pairs=len(margins),
        violations=int(np.sum(margins > slack)),
        worst_margin=float(margins.max()),
        cumulative_margin=cumulative,
        cumulative_ok=cumulative <= CUMULATIVE_SLACK,
    )


@dataclass
class BoundReport:
    steps: int
    min_residual: float
    bound: float
    energy_gap: float  # E(q0) - (-1/2 - log C / beta); at most 2 for unit inputs

    @property
    def residual_ok(self) -> bool:
        return self.min_residual <= self.bound

    @property
    def gap_ok(self) -> bool:
        return self.energy_gap <= 2.0 + DESCENT_SLACK

    @property
    def ok(self) -> bool:
        return self.residual_ok and self.gap_ok


def check_residual_bound(trace: IterationTrace, steps: Optional[int] = None) -> BoundReport:
    """Best-iterate residual over the first M standard steps against ``2/sqrt(M)``.

    M defaults to the number of steps recorded in the trace (at least 1). A
    trace that stopped before M steps ended on a residual below its
    tolerance, so the minimum over what was recorded is used. The bound is on
    the *minimum* residual; the last iterate carries no such guarantee.
    """
    m = max(trace.steps_taken if steps is None else steps, 1)
    min_res = float(np.min(trace.residuals[:m]))
    gap = trace.energies[0] - energy_lower_bound(trace.n_keys, trace.beta)
    return BoundReport(steps=m, min_residual=min_res, bound=2.0 / np.sqrt(m), energy_gap=float(gap))


def hull_reconstruction_error(q, K, beta: float) -> float:
    """``||softmax(beta K q) K - q||``: zero iff q is reproduced by its own convex weights."""
    return float(np.linalg.norm(standard_update(q, K, beta) - np.asarray(q)))


@dataclass
class OverAttractionReport:
    n_queries: int
    threshold: float
    converged_exceed_fraction: float
    damped_exceed_fraction: float
    not_converged: int
    mean_converged_cosine: float
    mean_damped_cosine: float
    mean_damped_displacement: float

    @property
    def ratio_ok(self) -> bool:
        """Converged exceed-fraction at least 10x the single-damped-step one."""
        return self.converged_exceed_fraction >= 10.0 * self.damped_exceed_fraction


def well_separated_keys(n: int, d: int, seed: int = 0) -> np.ndarray:
    """``n <= d`` orthonormal keys (pairwise cosine 0)."""
    if n > d:
        raise ValueError(f"cannot place {n} orthonormal keys in dimension {d}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, n)))
    return q.T.copy()


def demonstrate_over_attraction(
    K,
    beta: float = 20.0,
    n_unrelated_queries: int = 1000,
    c: float = 0.85,
    gamma: float = 0.1,
    seed: int = 0,
    max_steps: int = 10_000,
    tol: float = 1e-8,
) -> OverAttractionReport:
    """Compare full standard iteration against one damped step on random queries.

    For each unrelated unit query the standard map is run to convergence and
    the fixed point renormalized; its best cosine to the keys is compared with
    ``c``. The same queries are also refined by a single damped step.
    """
    K = np.asarray(K, dtype=np.float64)
    rng = np.random.default_rng(seed)
    Q = random_unit(rng, n_unrelated_queries, K.shape[1])

    conv_cos = np.empty(len(Q))
    not_converged = 0
    for i, q in enumerate(Q):
        tr = iterate_standard(q, K, beta, max_steps=max_steps, tol=tol)
        not_converged += not tr.stopped_early
        fp = tr.final
        n = np.linalg.norm(fp)
        conv_cos[i] = (K @ (fp / n)).max() if n > 0 else -1.0

    damped, _ = refine_batch(Q, K, HopfieldParams(beta=beta, gamma=gamma, max_steps=1, epsilon=0.0, c=c))
    damped_cos = (damped @ K.T).max(axis=1)
    return OverAttractionReport(
        n_queries=len(Q),
        threshold=c,
        converged_exceed_fraction=float(np.mean(conv_cos > c)),
        damped_exceed_fraction=float(np.mean(damped_cos > c)),
        not_converged=int(not_converged),
        mean_converged_cosine=float(conv_cos.mean()),
        mean_damped_cosine=float(damped_cos.mean()),
        mean_damped_displacement=float(np.linalg.norm(damped - Q, axis=1).mean()),
    )


def damped_displacements(Q0, K, gamma: float, beta: float = 20.0) -> np.ndarray:
    """``||q1 - q0||`` after one damped step (M=1, no early stop) for each row."""
    params = HopfieldParams(beta=beta, gamma=gamma, max_steps=1, epsilon=0.0)
    Q, _ = refine_batch(Q0, K, params)
    return np.linalg.norm(Q - np.asarray(Q0), axis=1)




@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str


def run_verification(
    n_instances: int = 200,
    seed: int = 0,
    *,
    descent_steps: int = 100,
    bound_steps: tuple[int, ...] = (1, 4, 16, 100),
    long_run_steps: int = 10_000,
    long_run_instances: int = 3,
    displacement_pairs: int = 10_000,
    inject_bug: bool = False,
) -> list[PropertyResult]:
    """Run every dynamics property over random instances and collect verdicts.

    ``inject_bug`` replaces the overflow-safe softmax with the naive one at
    ``beta = 1e6``; the run must then fail with a non-finite energy.
    """
    from .errors import NonFiniteLoss
    from .hopfield import random_instances

    results: list[PropertyResult] = []
    if inject_bug:
        rng = np.random.default_rng(seed)
        K, q0 = random_unit(rng, 8, 8), random_unit(rng, 1, 8)[0]
        try:
            iterate_standard(q0, K, 1e6, max_steps=descent_steps, stable=False)
        except NonFiniteLoss as exc:
            return [PropertyResult("finite-energies", False, f"NonFiniteLoss: {exc}")]
        return [PropertyResult("finite-energies", True, "naive softmax did not overflow")]

    instances = list(random_instances(n_instances, seed))
    worst_step, worst_cum, step_viol, cum_viol = -np.inf, -np.inf, 0, 0
    bound_worst = {m: -np.inf for m in bound_steps}
    bound_viol = {m: 0 for m in bound_steps}
    gap_worst, gap_viol = -np.inf, 0
    for inst in instances:
        tr = iterate_standard(inst.q0, inst.keys, inst.beta, max_steps=max(descent_steps, *bound_steps), tol=0.0)
        short = IterationTrace(
            tr.iterates[: descent_steps + 1], tr.energies[: descent_steps + 1], tr.residuals[: descent_steps + 1],
            min(tr.steps_taken, descent_steps), tr.stopped_early, tr.beta, tr.n_keys,
        )
        rep = check_descent(short)
        worst_step, worst_cum = max(worst_step, rep.worst_margin), max(worst_cum, rep.cumulative_margin)
        step_viol += rep.violations
        cum_viol += not rep.cumulative_ok
        for m in bound_steps:
            b = check_residual_bound(tr, steps=m)
            bound_worst[m] = max(bound_worst[m], b.min_residual - b.bound)
            bound_viol[m] += not b.residual_ok
        b = check_residual_bound(tr)
        gap_worst = max(gap_worst, b.energy_gap)
        gap_viol += not b.gap_ok

    results.append(PropertyResult("energy-descent", step_viol == 0,
                                  f"{step_viol} violations, worst margin {worst_step:.3e}"))
    results.append(PropertyResult("cumulative-descent", cum_viol == 0,
                                  f"{cum_viol} violations, worst margin {worst_cum:.3e}"))
    for m in bound_steps:
        results.append(PropertyResult(f"residual-bound M={m}", bound_viol[m] == 0,
                                      f"bound {2.0 / np.sqrt(m):.4g}, worst (min residual - bound) {bound_worst[m]:.3e}"))
    results.append(PropertyResult("energy-gap", gap_viol == 0, f"worst E(q0) - E_inf {gap_worst:.6f} (limit 2)"))

    long_viol, long_worst = 0, -np.inf
    for inst in instances[:long_run_instances]:
        tr = iterate_standard(inst.q0, inst.keys, inst.beta, max_steps=long_run_steps, tol=0.0)
        b = check_residual_bound(tr, steps=long_run_steps)
        long_viol += not b.residual_ok
        long_worst = max(long_worst, b.min_residual)
    results.append(PropertyResult(f"residual-bound M={long_run_steps}", long_viol == 0,
                                  f"bound {2.0 / np.sqrt(long_run_steps):.4g}, worst min residual {long_worst:.3e}"))

    converged, hull_worst = 0, 0.0
    for inst in instances:
        tr = iterate_standard(inst.q0, inst.keys, inst.beta, max_steps=10_000, tol=1e-8)
        if tr.stopped_early:
            converged += 1
            hull_worst = max(hull_worst, hull_reconstruction_error(tr.final, inst.keys, inst.beta))
    frac = converged / len(instances)
    results.append(PropertyResult("convergence", frac >= 0.99 and hull_worst <= 1e-6,
                                  f"{frac:.3f} converged to residual <= 1e-8, worst hull error {hull_worst:.2e}"))

    oa = demonstrate_over_attraction(well_separated_keys(8, 16, seed), 20.0, 1000, 0.85, 0.1, seed)
    results.append(PropertyResult("over-attraction", oa.ratio_ok,
                                  f"converged exceed {oa.converged_exceed_fraction:.3f} vs "
                                  f"one damped step {oa.damped_exceed_fraction:.3f}"))

    rng = np.random.default_rng(seed + 7)
    for gamma in (0.05, 0.1, 0.5):
        worst = max_displacement(rng, displacement_pairs, gamma)
        results.append(PropertyResult(f"damped-displacement gamma={gamma}", worst <= 4 * gamma,
                                      f"max {worst:.4f} <= {4 * gamma:.2f}"))
    return results


def max_displacement(rng: np.random.Generator, n_pairs: int, gamma: float, per_codebook: int = 100) -> float:
    """Largest single damped-step displacement over ``n_pairs`` random (query, keys) pairs."""
    worst = 0.0
    for _ in range(max(n_pairs // per_codebook, 1)):
        c = int(rng.integers(1, 65))
        d = int(rng.integers(2, 33))
        beta = float(rng.choice([1.0, 5.0, 20.0]))
        K = random_unit(rng, c, d)
        Q = random_unit(rng, per_codebook, d)
        worst = max(worst, float(damped_displacements(Q, K, gamma, beta).max()))
    return worst


__all__ = [
    "BoundReport",
    "DescentReport",
    "OverAttractionReport",
    "check_descent",
    "check_residual_bound",
    "damped_displacements",
    "demonstrate_over_attraction",
    "hull_reconstruction_error",
    "max_displacement",
    "run_verification",
    "well_separated_keys",
]
