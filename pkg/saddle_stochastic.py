#
# Stochastic mirror descent with dense iterates under the partial and full
# sampling schemes, and the l1-composite stochastic subgradient baseline.
#

import math
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from saddle_core import Dataset, LossKind, ProblemGeometry
from saddle_exact import SolveResult, SolverConfig, checkpoint_schedule, run_mirror_descent, stepsize_schedule
from saddle_exceptions import InvalidProblemError
from saddle_losses import primal_objective
from saddle_sampling import INDEX_STREAM, SSM_STREAM, DrawStream, ImportanceSampler

SCHEMES = ("partial", "full")


def stepsize_stochastic(geometry: ProblemGeometry, T: int) -> float:
    """
    gamma = (1 / sqrt(2T)) * min{1 / (Lip sqrt(5 Omega_U Omega_V)),
                                 1 / sqrt(Omega_U sigma2_V + Omega_V sigma2_U)}.
    """
    if T < 1:
        raise InvalidProblemError(f"Iteration budget must be at least 1, got {T}.")
    lip_term = geometry.lipschitz * math.sqrt(5.0 * geometry.omega_U * geometry.omega_V)
    noise_term = math.sqrt(geometry.omega_U * geometry.sigma2_V_bar + geometry.omega_V * geometry.sigma2_U_bar)
    if not lip_term > 0 or not noise_term > 0:
        raise InvalidProblemError("Stochastic stepsize undefined: zero Lipschitz constant or variance bound.")
    return min(1.0 / lip_term, 1.0 / noise_term) / math.sqrt(2.0 * T)


def stochastic_gap_bound(geometry: ProblemGeometry, T: int) -> float:
    """Expected-gap bound for the stochastic stepsize."""
    lip = 2.0 * math.sqrt(10.0) * geometry.lipschitz * math.sqrt(geometry.omega_U * geometry.omega_V)
    noise = 2.0 * math.sqrt(2.0) * math.sqrt(geometry.omega_U * geometry.sigma2_V_bar
                                             + geometry.omega_V * geometry.sigma2_U_bar)
    return (lip + noise) / math.sqrt(T) + geometry.residual / T


class PartialSamplingOracle:
    """Row-sampled estimates; keeps the last draws for inspection."""
    def __init__(self, dataset: Dataset, stream: DrawStream):
        self.sampler = ImportanceSampler(dataset)
        self.stream = stream
        self.last_xi = None
        self.last_eta = None

    def xi(self, U):
        self.last_xi = self.sampler.draw_xi_partial(U, self.stream)
        return self.last_xi.estimate.materialize()

    def eta(self, V):
        self.last_eta = self.sampler.draw_eta_partial(V, self.stream)
        return self.last_eta.estimate.materialize()


class FullSamplingOracle(PartialSamplingOracle):
    """Row and class sampled estimates with a single non-zero column."""
    def xi(self, U):
        self.last_xi = self.sampler.draw_xi_full(U, self.stream)
        return self.last_xi.estimate.materialize()

    def eta(self, V):
        self.last_eta = self.sampler.draw_eta_full(V, self.stream)
        return self.last_eta.estimate.materialize()


def make_oracle(dataset: Dataset, scheme: str, seed: int):
    if scheme == "partial":
        return PartialSamplingOracle(dataset, DrawStream(seed, INDEX_STREAM))
    if scheme == "full":
        return FullSamplingOracle(dataset, DrawStream(seed, INDEX_STREAM))
    raise InvalidProblemError(f"Unknown sampling scheme '{scheme}'. Use one of {SCHEMES}.")


def smd_solve(dataset: Dataset, geometry: ProblemGeometry, loss, scheme: str, config: SolverConfig,
              callback=None, on_iterate=None, oracle=None, sequential: bool = True) -> SolveResult:
    """
    Stochastic mirror descent with dense U, V. Iterates 0..T are averaged.

    `oracle` replaces the sampling oracle (an ExactOracle with
    sequential=False reproduces md_solve's trajectory).
    """
    loss = LossKind.parse(loss)
    if oracle is None:
        oracle = make_oracle(dataset, scheme, config.seed)
    gamma_at = stepsize_schedule(config, geometry, stepsize_stochastic)
    return run_mirror_descent(dataset, geometry, loss, config, oracle, gamma_at,
                              sequential=sequential, include_last=True, callback=callback, on_iterate=on_iterate)


def soft_threshold(U: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(U) * np.maximum(np.abs(U) - threshold, 0.0)


def hinge_subgradient(U: np.ndarray, x: np.ndarray, label: int) -> np.ndarray:
    """x (e_l* - e_y)^T with l* = argmax_l {1[l != y] + U_l^T x}; first index on ties."""
    scores = x @ U + 1.0
    scores[label] -= 1.0
    best = int(np.argmax(scores))
    g = np.zeros_like(U)
    if best != label:
        g[:, best] += x
        g[:, label] -= x
    return g


@dataclass
class SsmResult:
    U: np.ndarray
    U_last: np.ndarray
    objectives: List[tuple] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objectives[-1][1]


def ssm_stepsize(dataset: Dataset, radius: float, T: int) -> float:
    """R / (G sqrt(T)) with G = sqrt(2) max_i ||x_i||_2."""
    G = math.sqrt(2.0) * float(np.linalg.norm(dataset.X, axis=1).max())
    if not G > 0:
        raise InvalidProblemError("Subgradient bound is zero (all-zero features).")
    return radius / (G * math.sqrt(T))


def ssm_solve(dataset: Dataset, lam: float, radius: float, config: SolverConfig, loss="hinge",
              callback=None) -> SsmResult:
    """
    Composite stochastic subgradient method: one uniformly drawn example per
    step, then soft-thresholding. Reports the primal objective of the running
    average of iterates 1..t at the checkpoints.
    """
    if LossKind.parse(loss) is not LossKind.HINGE:
        raise InvalidProblemError("The subgradient baseline supports the hinge loss only.")
    T = config.iterations
    gamma = float(config.gamma) if config.stepsize_mode == "constant" else ssm_stepsize(dataset, radius, T)
    stream = DrawStream(config.seed, SSM_STREAM)
    checkpoints = set(checkpoint_schedule(T, config.gap_every))
    n = dataset.n
    U = np.zeros((dataset.d, dataset.k))
    U_sum = np.zeros_like(U)
    result = SsmResult(U=U_sum, U_last=U)
    started, paused = time.perf_counter(), 0.0

    for t in range(T):
        i = min(int(stream.uniform() * n), n - 1)
        g = hinge_subgradient(U, dataset.X[i], int(dataset.y[i]))
        U = soft_threshold(U - gamma * g, gamma * lam)
        U_sum += U
        if t + 1 in checkpoints:
            pause_start = time.perf_counter()
            objective = primal_objective(U_sum / (t + 1), dataset, lam, loss)
            seconds = pause_start - started - paused
            result.objectives.append((t + 1, objective, seconds))
            if callback:
                callback(t + 1, objective, seconds)
            paused += time.perf_counter() - pause_start

    result.U = U_sum / T
    result.U_last = U
    return result
