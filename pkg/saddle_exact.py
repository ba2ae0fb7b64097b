#
# Deterministic composite mirror descent and Mirror Prox on the
# simplex-constrained saddle-point problem, with the budget-derived constant
# stepsize, iterate averaging and gap checkpoints.
#
# The loop in run_mirror_descent is shared with the dense stochastic solvers:
# they differ only in the gradient oracle and in the update ordering.
#

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from saddle_core import AugmentedView, Dataset, LossKind, ProblemGeometry, fold, geometry_from
from saddle_exceptions import InvalidProblemError
from saddle_losses import GapReport, duality_gap
from saddle_prox import dual_step, primal_md_step

STEPSIZE_MODES = ("theorem", "constant", "decaying")
RADIUS_TOLERANCE = 0.05
MAX_RADIUS_STAGES = 10


@dataclass(frozen=True)
class SolverConfig:
    iterations: int
    stepsize_mode: str = "theorem"
    gamma: Optional[float] = None
    seed: int = 0
    gap_every: Optional[int] = None
    flush_every: int = 10_000
    sparse_output: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidProblemError(f"Iteration budget must be at least 1, got {self.iterations}.")
        if self.stepsize_mode not in STEPSIZE_MODES:
            raise InvalidProblemError(f"Unknown stepsize mode '{self.stepsize_mode}'.")
        if self.stepsize_mode == "constant" and not (self.gamma is not None and self.gamma > 0):
            raise InvalidProblemError("Constant stepsize mode needs gamma > 0.")
        if self.gap_every is not None and self.gap_every < 1:
            raise InvalidProblemError(f"gap_every must be positive, got {self.gap_every}.")
        if self.flush_every < 1:
            raise InvalidProblemError(f"flush_every must be positive, got {self.flush_every}.")


@dataclass
class SaddleIterate:
    U: np.ndarray
    V: np.ndarray
    U_avg: np.ndarray
    V_avg: np.ndarray
    t: int


@dataclass
class SolveResult:
    iterate: SaddleIterate
    reports: List[GapReport] = field(default_factory=list)

    @property
    def final_report(self) -> GapReport:
        return self.reports[-1]


def initial_point(geometry: ProblemGeometry):
    """U0 = R*/(2dk) on every entry, V0 = 1/k on every entry."""
    d, k, n = geometry.d, geometry.k, geometry.n
    U0 = np.full((2 * d, k), geometry.radius / (2 * d * k))
    V0 = np.full((n, k), 1.0 / k)
    return U0, V0


def stepsize_deterministic(geometry: ProblemGeometry, T: int) -> float:
    """gamma = 1 / (Lip * sqrt(5 T Omega_U Omega_V))."""
    if T < 1:
        raise InvalidProblemError(f"Iteration budget must be at least 1, got {T}.")
    if not geometry.lipschitz > 0:
        raise InvalidProblemError("Lipschitz constant is zero (all-zero features); no stepsize exists.")
    return 1.0 / (geometry.lipschitz * math.sqrt(5.0 * T * geometry.omega_U * geometry.omega_V))


def deterministic_gap_bound(geometry: ProblemGeometry, T: int) -> float:
    """2 sqrt(5) Lip sqrt(Omega_U Omega_V) / sqrt(T) + r / T."""
    return (2.0 * math.sqrt(5.0) * geometry.lipschitz * math.sqrt(geometry.omega_U * geometry.omega_V) / math.sqrt(T)
            + geometry.residual / T)


def stepsize_schedule(config: SolverConfig, geometry: ProblemGeometry, rule: Callable) -> Callable[[int], float]:
    """Maps the iteration index t to gamma_t for the configured mode."""
    if config.stepsize_mode == "constant":
        gamma = float(config.gamma)
        return lambda t: gamma
    if config.stepsize_mode == "decaying":
        base = rule(geometry, 1)
        return lambda t: base / math.sqrt(t + 1)
    gamma = rule(geometry, config.iterations)
    return lambda t: gamma


def checkpoint_schedule(T: int, gap_every: Optional[int] = None) -> List[int]:
    """Iteration counts at which gaps are reported; T is always included."""
    if gap_every:
        points = set(range(gap_every, T + 1, gap_every))
    else:
        points = set()
        c = 1
        while c < T:
            points.add(c)
            c *= 2
    points.add(T)
    return sorted(points)


class ExactOracle:
    """Exact matrix products, O(dnk) each."""
    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.view = AugmentedView(dataset)

    def xi(self, U: np.ndarray) -> np.ndarray:
        """X_hat U."""
        return self.view.matmul(U)

    def eta(self, V: np.ndarray) -> np.ndarray:
        """X_hat^T (V - Y)."""
        return self.view.rmatmul(V - self.dataset.Y)


class _GapTracker:
    """Running sums of iterates plus timed gap reports."""
    def __init__(self, dataset, geometry, loss, checkpoints, callback):
        self.dataset = dataset
        self.geometry = geometry
        self.loss = loss
        self.checkpoints = set(checkpoints)
        self.callback = callback
        self.U_sum = None
        self.V_sum = None
        self.count = 0
        self.reports = []
        self.started = time.perf_counter()
        self.paused = 0.0

    def add(self, U, V):
        if self.U_sum is None:
            self.U_sum = U.copy()
            self.V_sum = V.copy()
        else:
            self.U_sum += U
            self.V_sum += V
        self.count += 1

    def averages(self):
        return self.U_sum / self.count, self.V_sum / self.count

    def report(self, iterations):
        pause_start = time.perf_counter()
        U_avg, V_avg = self.averages()
        elapsed = pause_start - self.started - self.paused
        report = duality_gap(U_avg, V_avg, self.dataset, self.geometry, self.loss,
                             iterations=iterations, elapsed_seconds=elapsed, averaged_points=self.count)
        self.reports.append(report)
        if self.callback:
            self.callback(report)
        self.paused += time.perf_counter() - pause_start


def run_mirror_descent(dataset: Dataset, geometry: ProblemGeometry, loss: LossKind, config: SolverConfig,
                       oracle, gamma_at: Callable[[int], float], sequential: bool, include_last: bool,
                       callback=None, on_iterate=None) -> SolveResult:
    """
    Shared (stochastic) mirror descent loop.

    sequential=False evaluates both gradients at W^t (plain mirror descent);
    sequential=True uses the interleaved order
        eta(V^t) -> primal step -> xi(U^{t+1}) -> dual step.
    include_last selects the averaging window: iterates 0..T when True,
    0..T-1 otherwise.
    """
    loss = LossKind.parse(loss)
    n, Y = dataset.n, dataset.Y
    T = config.iterations
    U, V = initial_point(geometry)
    tracker = _GapTracker(dataset, geometry, loss, checkpoint_schedule(T, config.gap_every), callback)
    if on_iterate:
        on_iterate(0, U, V)

    for t in range(T + 1):
        if include_last:
            tracker.add(U, V)
            if t >= 1 and t in tracker.checkpoints:
                tracker.report(t)
        elif t < T:
            tracker.add(U, V)
            if t + 1 in tracker.checkpoints:
                tracker.report(t + 1)
        if t == T:
            break

        gamma = gamma_at(t)
        if sequential:
            U_next = primal_md_step(U, oracle.eta(V) / n, gamma, geometry)
            V_next = dual_step(loss, V, oracle.xi(U_next), Y, gamma)
        else:
            eta, xi = oracle.eta(V), oracle.xi(U)
            U_next = primal_md_step(U, eta / n, gamma, geometry)
            V_next = dual_step(loss, V, xi, Y, gamma)
        U, V = U_next, V_next
        if on_iterate:
            on_iterate(t + 1, U, V)

    U_avg, V_avg = tracker.averages()
    return SolveResult(SaddleIterate(U=U, V=V, U_avg=U_avg, V_avg=V_avg, t=T), tracker.reports)


def md_solve(dataset: Dataset, geometry: ProblemGeometry, loss, config: SolverConfig,
             callback=None, on_iterate=None) -> SolveResult:
    """Composite mirror descent with exact gradients; averages iterates 0..T-1."""
    gamma_at = stepsize_schedule(config, geometry, stepsize_deterministic)
    return run_mirror_descent(dataset, geometry, loss, config, ExactOracle(dataset), gamma_at,
                              sequential=False, include_last=False, callback=callback, on_iterate=on_iterate)


def mp_solve(dataset: Dataset, geometry: ProblemGeometry, loss, config: SolverConfig,
             callback=None, on_iterate=None) -> SolveResult:
    """
    Mirror Prox: a leader step from W^t with gradients at W^t, then the
    corrector step from W^t with gradients at the leader.

    The leader points are averaged, not the corrector points: the gap
    guarantee holds for the points where the corrector's gradients were
    taken. Averaging the correctors instead would not be a certified output.
    """
    loss = LossKind.parse(loss)
    n, Y = dataset.n, dataset.Y
    T = config.iterations
    oracle = ExactOracle(dataset)
    gamma_at = stepsize_schedule(config, geometry, stepsize_deterministic)
    U, V = initial_point(geometry)
    tracker = _GapTracker(dataset, geometry, loss, checkpoint_schedule(T, config.gap_every), callback)
    if on_iterate:
        on_iterate(0, U, V)

    for t in range(T):
        gamma = gamma_at(t)
        U_lead = primal_md_step(U, oracle.eta(V) / n, gamma, geometry)
        V_lead = dual_step(loss, V, oracle.xi(U), Y, gamma)
        U_next = primal_md_step(U, oracle.eta(V_lead) / n, gamma, geometry)
        V_next = dual_step(loss, V, oracle.xi(U_lead), Y, gamma)
        U, V = U_next, V_next
        tracker.add(U_lead, V_lead)
        if on_iterate:
            on_iterate(t + 1, U, V)
        if t + 1 in tracker.checkpoints:
            tracker.report(t + 1)

    U_avg, V_avg = tracker.averages()
    return SolveResult(SaddleIterate(U=U, V=V, U_avg=U_avg, V_avg=V_avg, t=T), tracker.reports)


@dataclass(frozen=True)
class RadiusEstimate:
    radius: float
    stages: int
    on_boundary: bool
    folded_mass: float


def estimate_radius(dataset: Dataset, lam: float, loss, base_radius: float, factor: float = 2.0,
                    iterations: int = 2000, max_stages: int = MAX_RADIUS_STAGES,
                    tolerance: float = RADIUS_TOLERANCE) -> RadiusEstimate:
    """
    Grows the l1 radius by `factor` until the averaged mirror-descent solution
    leaves the boundary, i.e. ||U1 - U2||_1 < (1 - tolerance) R.
    """
    if not base_radius > 0:
        raise InvalidProblemError(f"Base radius must be positive, got {base_radius}.")
    if not factor > 1:
        raise InvalidProblemError(f"Radius growth factor must exceed 1, got {factor}.")
    config = SolverConfig(iterations=iterations, gap_every=iterations)
    radius = float(base_radius)
    mass = 0.0
    for stage in range(1, max_stages + 1):
        geometry = geometry_from(dataset, radius, lam, loss)
        result = md_solve(dataset, geometry, loss, config)
        mass = float(np.abs(fold(result.iterate.U_avg)).sum())
        if mass < (1.0 - tolerance) * radius:
            return RadiusEstimate(radius, stage, False, mass)
        if stage < max_stages:
            radius *= factor
    return RadiusEstimate(radius, max_stages, True, mass)
