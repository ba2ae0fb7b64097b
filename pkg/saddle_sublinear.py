#
# Sublinear-time solver for the l1-regularized multiclass hinge problem.
#
# The iterates are never stored explicitly:
#     U^t(i, :) = U_tilde(i, :) * alpha_i      V^t(j, :) = V_tilde(j, :) * beta_j
# Every primal step rewrites one column of U_tilde plus the scale vector,
# every dual step rewrites at most two entries per row of V_tilde plus the
# row scales. Cumulative sums for the averages are kept with per-entry
# stamps of the scale sums (A_pr, B_pr), so an entry is only visited when
# it changes.
#
# The scales drift geometrically; flush() folds them back into the stored
# matrices every `flush_every` iterations or as soon as any scale leaves
# [SCALE_MIN, SCALE_MAX].
#

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from saddle_core import AugmentedView, Dataset, LossKind, ProblemGeometry
from saddle_exact import SolverConfig, checkpoint_schedule, stepsize_schedule
from saddle_exceptions import InvalidProblemError, NumericalError
from saddle_losses import GapReport, duality_gap
from saddle_sampling import INDEX_STREAM, DrawStream, sample_index
from saddle_stochastic import stepsize_stochastic

SCALE_MIN = 1e-120
SCALE_MAX = 1e120
INITIAL_SLOTS = 16


class ColumnStore:
    """
    U_tilde together with its cumulative sums U_sum and stamps A_pr, kept per
    column slot.

    Dense mode allocates every column up front. Sparse mode allocates a slot
    the first time a column is touched; until then all its entries share the
    value `default` and the cumulative sum `untouched_sum`.
    """
    def __init__(self, rows: int, k: int, initial: float, sparse: bool = False):
        self.rows = rows
        self.k = k
        self.sparse = sparse
        self.default = float(initial)
        self.untouched_sum = 0.0
        capacity = min(k, INITIAL_SLOTS) if sparse else k
        self.values = np.full((rows, capacity), self.default)
        self.sums = np.zeros((rows, capacity))
        self.stamps = np.zeros((rows, capacity))
        if sparse:
            self.slot_of = np.full(k, -1, dtype=np.int64)
            self.columns = np.full(capacity, -1, dtype=np.int64)
            self.used = 0
        else:
            self.slot_of = np.arange(k, dtype=np.int64)
            self.columns = np.arange(k, dtype=np.int64)
            self.used = k

    def slot(self, l: int) -> int:
        """Slot of column l, allocated on first touch."""
        s = int(self.slot_of[l])
        if s >= 0:
            return s
        if self.used == self.values.shape[1]:
            self._grow()
        s = self.used
        self.values[:, s] = self.default
        self.sums[:, s] = self.untouched_sum
        self.stamps[:, s] = 0.0
        self.slot_of[l] = s
        self.columns[s] = l
        self.used += 1
        return s

    def _grow(self):
        capacity = min(self.k, 2 * self.values.shape[1])
        extra = capacity - self.values.shape[1]
        pad = ((0, 0), (0, extra))
        self.values = np.pad(self.values, pad)
        self.sums = np.pad(self.sums, pad)
        self.stamps = np.pad(self.stamps, pad)
        self.columns = np.pad(self.columns, (0, extra), constant_values=-1)

    def row(self, i: int) -> np.ndarray:
        if not self.sparse:
            return self.values[i].copy()
        out = np.full(self.k, self.default)
        out[self.columns[:self.used]] = self.values[i, :self.used]
        return out

    def rebase(self, alpha: np.ndarray, A: np.ndarray):
        """Flushes pending sums and folds alpha into the stored values."""
        m = self.used
        self.sums[:, :m] += self.values[:, :m] * (A[:, None] - self.stamps[:, :m])
        self.values[:, :m] *= alpha[:, None]
        self.stamps[:, :m] = 0.0
        # alpha and A are uniform across rows
        self.untouched_sum += self.default * float(A[0])
        self.default *= float(alpha[0])

    def dense(self) -> np.ndarray:
        out = np.full((self.rows, self.k), self.default)
        out[:, self.columns[:self.used]] = self.values[:, :self.used]
        return out

    def totals(self, alpha: np.ndarray, A: np.ndarray):
        """
        Cumulative sums including the current iterate: (columns, per-column
        totals for touched slots, total of an untouched entry).
        """
        m = self.used
        touched = self.sums[:, :m] + self.values[:, :m] * (alpha[:, None] + A[:, None] - self.stamps[:, :m])
        untouched = self.untouched_sum + self.default * (float(alpha[0]) + float(A[0]))
        return self.columns[:m].copy(), touched, untouched


@dataclass
class LazyState:
    U_tilde: ColumnStore
    alpha: np.ndarray
    V_tilde: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    y: np.ndarray
    ops: int = 0

    @property
    def log_dim(self) -> float:
        return math.log(self.U_tilde.rows * self.U_tilde.k)

    def materialize_U(self) -> np.ndarray:
        return self.U_tilde.dense() * self.alpha[:, None]

    def materialize_V(self) -> np.ndarray:
        return self.V_tilde * self.beta[:, None]


@dataclass
class AverageTracker:
    """Scale sums for the averages; U_sum and A_pr live in the ColumnStore."""
    A: np.ndarray
    V_sum: np.ndarray
    B: np.ndarray
    B_pr: np.ndarray
    flushes: int = 0


def init_lazy_state(dataset: Dataset, geometry: ProblemGeometry, sparse: bool = False):
    n, d, k = dataset.n, dataset.d, dataset.k
    view = AugmentedView(dataset)
    u0 = geometry.radius / (2 * d * k)
    state = LazyState(
        U_tilde=ColumnStore(2 * d, k, u0, sparse=sparse),
        alpha=np.ones(2 * d),
        V_tilde=np.full((n, k), 1.0 / k),
        beta=np.ones(n),
        pi=np.full(2 * d, k * u0),
        rho=np.full(n, 2.0 - 2.0 / k),
        sigma=view.column_norms(),
        tau=view.row_norms_inf(),
        y=dataset.y,
    )
    tracker = AverageTracker(A=np.zeros(2 * d), V_sum=np.zeros((n, k)), B=np.zeros(n), B_pr=np.zeros((n, k)))
    return state, tracker


def flush(state: LazyState, tracker: AverageTracker):
    """Folds alpha and beta into U_tilde and V_tilde and restarts the scale sums."""
    store = state.U_tilde
    state.ops += 3 * store.rows * store.used + 3 * state.V_tilde.size
    state.U_tilde.rebase(state.alpha, tracker.A)
    tracker.V_sum += state.V_tilde * (tracker.B[:, None] - tracker.B_pr)
    state.V_tilde *= state.beta[:, None]
    state.alpha[:] = 1.0
    state.beta[:] = 1.0
    tracker.A[:] = 0.0
    tracker.B[:] = 0.0
    tracker.B_pr[:] = 0.0
    tracker.flushes += 1


def scales_out_of_range(state: LazyState) -> bool:
    lo = min(float(state.alpha.min()), float(state.beta.min()))
    hi = max(float(state.alpha.max()), float(state.beta.max()))
    return lo < SCALE_MIN or hi > SCALE_MAX


def track_primal(tracker: AverageTracker, state: LazyState, l: Optional[int]):
    """Closes the running sums of column l up to the current iterate, then A += alpha."""
    A_next = tracker.A + state.alpha
    state.ops += A_next.size
    if l is not None:
        store = state.U_tilde
        state.ops += 3 * store.rows
        s = store.slot(l)
        store.sums[:, s] += store.values[:, s] * (A_next - store.stamps[:, s])
        store.stamps[:, s] = A_next
    tracker.A = A_next


def track_dual(tracker: AverageTracker, state: LazyState, ell: Optional[int], y: np.ndarray):
    """Same for the entries (j, ell) and (j, y_j) of every row, then B += beta."""
    B_next = tracker.B + state.beta
    V_tilde = state.V_tilde
    state.ops += B_next.size
    if ell is None:
        # zero estimate: only the label entries move
        rows = np.arange(len(y))
    else:
        tracker.V_sum[:, ell] += V_tilde[:, ell] * (B_next - tracker.B_pr[:, ell])
        tracker.B_pr[:, ell] = B_next
        state.ops += 3 * len(y)
        rows = np.flatnonzero(y != ell)
    cols = y[rows]
    tracker.V_sum[rows, cols] += V_tilde[rows, cols] * (B_next[rows] - tracker.B_pr[rows, cols])
    tracker.B_pr[rows, cols] = B_next[rows]
    state.ops += 3 * rows.size
    tracker.B = B_next


def update_primal_lazy(state: LazyState, tracker: AverageTracker, eta_col: Optional[np.ndarray], l: Optional[int],
                       gamma: float, lam: float, radius: float):
    """
    Primal step for an estimate whose only non-zero column is l:
        mu_i = pi_i - alpha_i U_tilde(i, l) (1 - exp(-c eta_i / n))
        nu = min{exp(-c lam), R / sum(mu)}
        U_tilde(:, l) *= exp(-c eta / n); alpha *= nu; pi = nu mu
    with c = 2 gamma L R. l = None is the zero-estimate step.
    """
    n = state.V_tilde.shape[0]
    c = 2.0 * gamma * state.log_dim * radius
    store = state.U_tilde
    s = store.slot(l) if l is not None else None
    factors = np.exp(-c * eta_col / n) if l is not None else None
    if factors is not None:
        state.ops += factors.size

    for attempt in range(2):
        if l is None:
            mu = state.pi.copy()
        else:
            mu = state.pi - state.alpha * store.values[:, s] * (1.0 - factors)
        state.ops += mu.size
        mass = float(mu.sum())
        if mass > 0 and math.isfinite(mass):
            break
        if attempt == 0:
            flush(state, tracker)
    else:
        raise NumericalError(f"Primal mass collapsed to {mass} after rescaling.")

    nu = min(math.exp(-c * lam), radius / mass)
    if l is not None:
        store.values[:, s] *= factors
        state.ops += store.rows
    state.alpha *= nu
    state.pi = nu * mu
    state.ops += state.alpha.size + state.pi.size


def update_dual_lazy(state: LazyState, tracker: AverageTracker, xi_col: Optional[np.ndarray], ell: Optional[int],
                     gamma: float):
    """
    Dual step for an estimate whose only non-zero column is ell. Per row,
    V_tilde(j, ell) takes the factor omega_j eps_j and, when ell != y_j,
    V_tilde(j, y_j) takes theta; chi_j renormalises through beta.
    """
    V_tilde, y = state.V_tilde, state.y
    rows = np.arange(V_tilde.shape[0])
    k = V_tilde.shape[1]
    a = 2.0 * gamma * math.log(k)
    theta = math.exp(-a)
    if ell is None:
        # Z = -Y: only the label entries move
        ell_mask = np.zeros(len(rows), dtype=bool)
    else:
        ell_mask = y == ell

    for attempt in range(2):
        v_y = state.beta * V_tilde[rows, y]
        if ell is None:
            chi = 1.0 - v_y * (1.0 - theta)
        else:
            omega_eps = np.exp(a * xi_col) * np.where(ell_mask, theta, 1.0)
            v_l = state.beta * V_tilde[:, ell]
            chi = 1.0 - v_l * (1.0 - omega_eps) - np.where(ell_mask, 0.0, v_y * (1.0 - theta))
        state.ops += 3 * len(rows)
        if np.all(chi > 0) and np.all(np.isfinite(chi)):
            break
        if attempt == 0:
            flush(state, tracker)
    else:
        raise NumericalError("Dual normaliser became non-positive after rescaling.")

    state.beta = state.beta / chi
    if ell is None:
        V_tilde[rows, y] *= theta
        touched = len(rows)
    else:
        V_tilde[:, ell] *= omega_eps
        off = ~ell_mask
        V_tilde[rows[off], y[off]] *= theta
        touched = len(rows) + int(off.sum())
    state.rho = 2.0 - 2.0 * state.beta * V_tilde[rows, y]
    state.ops += touched + 2 * len(rows)


def dual_average(tracker: AverageTracker, state: LazyState, T: int) -> np.ndarray:
    V_sum = tracker.V_sum + state.V_tilde * (state.beta[:, None] + tracker.B[:, None] - tracker.B_pr)
    return V_sum / (T + 1)


def finalize_averages(tracker: AverageTracker, state: LazyState, T: int):
    """Dense averages of iterates 0..T."""
    columns, touched, untouched = state.U_tilde.totals(state.alpha, tracker.A)
    U_avg = np.full((state.U_tilde.rows, state.U_tilde.k), untouched)
    U_avg[:, columns] = touched
    return U_avg / (T + 1), dual_average(tracker, state, T)


def finalize_folded_triplets(tracker: AverageTracker, state: LazyState, T: int):
    """
    Non-zero entries (i, l, value) of the averaged folded model U1 - U2,
    0-based, sorted by (i, l). Untouched columns fold to zero and are skipped.
    """
    columns, touched, _ = state.U_tilde.totals(state.alpha, tracker.A)
    d = state.U_tilde.rows // 2
    folded = (touched[:d] - touched[d:]) / (T + 1)
    rows, slots = np.nonzero(folded)
    triplets = [(int(i), int(columns[s]), float(folded[i, s])) for i, s in zip(rows, slots)]
    triplets.sort()
    return triplets


def triplets_to_dense(triplets, d: int, k: int) -> np.ndarray:
    U = np.zeros((d, k))
    for i, l, value in triplets:
        U[i, l] = value
    return U


@dataclass
class SublinearResult:
    V_avg: np.ndarray
    reports: List[GapReport] = field(default_factory=list)
    U_avg: Optional[np.ndarray] = None
    triplets: Optional[list] = None
    ops_per_iter: float = 0.0
    flushes: int = 0
    iterations: int = 0
    solve_seconds: float = 0.0

    @property
    def final_report(self) -> GapReport:
        return self.reports[-1]

    def folded_model(self, d: int, k: int) -> np.ndarray:
        if self.U_avg is not None:
            return self.U_avg[:d] - self.U_avg[d:]
        return triplets_to_dense(self.triplets, d, k)


class SublinearSolver:
    """
    One run of the lazy solver. Per iteration:
        j ~ tau * rho, l ~ |V(j, :) - Y(j, :)|  -> track_primal, update_primal
        i ~ sigma * pi, ell ~ U(i, :)           -> track_dual, update_dual
    Four uniforms are drawn per iteration, in that order.
    """
    def __init__(self, dataset: Dataset, geometry: ProblemGeometry, config: SolverConfig):
        self.dataset = dataset
        self.geometry = geometry
        self.config = config
        self.view = AugmentedView(dataset)
        self.stream = DrawStream(config.seed, INDEX_STREAM)
        self.state, self.tracker = init_lazy_state(dataset, geometry, sparse=config.sparse_output)

    def primal_draw(self):
        """(l, eta column) for the primal step; (None, None) on the zero path."""
        state, Y = self.state, self.dataset.Y
        u_row, u_class = self.stream.uniform(), self.stream.uniform()
        weights = state.tau * np.maximum(state.rho, 0.0)
        total = float(weights.sum())
        state.ops += weights.size
        if total <= 0:
            return None, None
        j = sample_index(weights, u_row)
        residual = state.beta[j] * state.V_tilde[j] - Y[j]
        magnitudes = np.abs(residual)
        state.ops += magnitudes.size
        if magnitudes.sum() <= 0:
            return None, None
        l = sample_index(magnitudes, u_class)
        eta_col = self.view.row(j) * (np.sign(residual[l]) * total / state.tau[j])
        state.ops += eta_col.size
        return l, eta_col

    def dual_draw(self):
        state = self.state
        u_row, u_class = self.stream.uniform(), self.stream.uniform()
        weights = state.sigma * state.pi
        total = float(weights.sum())
        state.ops += weights.size
        if total <= 0:
            return None, None
        i = sample_index(weights, u_row)
        class_weights = state.U_tilde.row(i) * state.alpha[i]
        state.ops += class_weights.size
        ell = sample_index(class_weights, u_class)
        xi_col = self.view.column(i) * (total / state.sigma[i])
        state.ops += xi_col.size
        return ell, xi_col

    def step(self, gamma: float):
        state, tracker, y = self.state, self.tracker, self.dataset.y
        l, eta_col = self.primal_draw()
        track_primal(tracker, state, l)
        update_primal_lazy(state, tracker, eta_col, l, gamma, self.geometry.lam, self.geometry.radius)
        ell, xi_col = self.dual_draw()
        track_dual(tracker, state, ell, y)
        update_dual_lazy(state, tracker, xi_col, ell, gamma)

    def current_report(self, t: int, elapsed: float) -> GapReport:
        if self.config.sparse_output:
            triplets = finalize_folded_triplets(self.tracker, self.state, t)
            U_avg = triplets_to_dense(triplets, self.dataset.d, self.dataset.k)
            V_avg = dual_average(self.tracker, self.state, t)
        else:
            U_avg, V_avg = finalize_averages(self.tracker, self.state, t)
        return duality_gap(U_avg, V_avg, self.dataset, self.geometry, LossKind.HINGE,
                           iterations=t, elapsed_seconds=elapsed, averaged_points=t + 1)

    def run(self, callback=None, on_iterate=None, evaluate_gaps=True) -> SublinearResult:
        """evaluate_gaps=False skips the O(dnk) checkpoint reports (timing runs)."""
        config = self.config
        T = config.iterations
        gamma_at = stepsize_schedule(config, self.geometry, stepsize_stochastic)
        checkpoints = set(checkpoint_schedule(T, config.gap_every)) if evaluate_gaps else set()
        reports = []
        if on_iterate:
            on_iterate(0, self.state.materialize_U(), self.state.materialize_V())

        started, paused = time.perf_counter(), 0.0
        for t in range(T):
            if t > 0 and t % config.flush_every == 0:
                flush(self.state, self.tracker)
            self.step(gamma_at(t))
            if scales_out_of_range(self.state):
                flush(self.state, self.tracker)
            if on_iterate:
                on_iterate(t + 1, self.state.materialize_U(), self.state.materialize_V())
            if t + 1 in checkpoints:
                pause_start = time.perf_counter()
                report = self.current_report(t + 1, pause_start - started - paused)
                reports.append(report)
                if callback:
                    callback(report)
                paused += time.perf_counter() - pause_start
        solve_seconds = time.perf_counter() - started - paused

        result = SublinearResult(V_avg=dual_average(self.tracker, self.state, T), reports=reports,
                                 ops_per_iter=self.state.ops / T, flushes=self.tracker.flushes, iterations=T,
                                 solve_seconds=solve_seconds)
        if config.sparse_output:
            result.triplets = finalize_folded_triplets(self.tracker, self.state, T)
        else:
            result.U_avg, result.V_avg = finalize_averages(self.tracker, self.state, T)
        return result


def sublinear_solve(dataset: Dataset, geometry: ProblemGeometry, config: SolverConfig,
                    callback=None, on_iterate=None) -> SublinearResult:
    """Lazy-update stochastic mirror descent for the hinge loss; averages iterates 0..T."""
    if geometry.loss is not LossKind.HINGE:
        raise InvalidProblemError("The sublinear solver supports the hinge loss only.")
    return SublinearSolver(dataset, geometry, config).run(callback=callback, on_iterate=on_iterate)
