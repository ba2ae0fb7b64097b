#
# Unbiased rank-one estimates of X_hat U (xi) and X_hat^T (V - Y) (eta).
#
# Partial scheme: sample one row of U (resp. V - Y).
# Full scheme:    additionally sample one column of that row, so each
#                 estimate has a single non-zero column.
#
# Draw-stream convention: every side of a draw consumes its uniforms up
# front (one per side for the partial scheme, two for the full scheme), also
# when the sampling weights are all zero. Solvers fed the same DrawStream
# therefore stay aligned draw-for-draw.
#

from dataclasses import dataclass
from typing import Optional

import numpy as np

from saddle_core import AugmentedView, Dataset, ProblemGeometry
from saddle_exceptions import InvalidProblemError

INDEX_STREAM = 0
DATA_STREAM = 1
SSM_STREAM = 2


class DrawStream:
    """
    Seeded counter-based (Philox) uniform source. Streams with the same seed
    and different stream ids are independent.
    """
    def __init__(self, seed: int, stream: int = INDEX_STREAM):
        if seed < 0 or seed >= 2 ** 64:
            raise InvalidProblemError(f"Seed must be a 64-bit unsigned integer, got {seed}.")
        self.seed = int(seed)
        self.stream = int(stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def uniform(self) -> float:
        return float(self.generator.random())


def sample_index(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF by a linear prefix-sum scan. Zero-weight entries are never returned."""
    cumulative = np.cumsum(weights)
    total = cumulative[-1]
    index = int(np.searchsorted(cumulative, u * total, side="right"))
    if index >= len(weights) or weights[index] <= 0:
        index = int(np.flatnonzero(weights > 0)[-1])
    return index


@dataclass(frozen=True)
class RankOneEstimate:
    """scale * outer(column, row), kept in factored form."""
    column: np.ndarray
    row: np.ndarray
    scale: float

    @classmethod
    def zero(cls, rows: int, k: int) -> "RankOneEstimate":
        return cls(column=np.zeros(rows), row=np.zeros(k), scale=0.0)

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0

    def materialize(self) -> np.ndarray:
        return self.scale * np.outer(self.column, self.row)


@dataclass(frozen=True)
class SideDraw:
    """One sampled estimate. index = -1 marks the zero-gradient path."""
    index: int
    probability: float
    estimate: RankOneEstimate
    cls: int = -1
    class_probability: float = 1.0


@dataclass(frozen=True)
class PartialDraw:
    xi: SideDraw
    eta: SideDraw


@dataclass(frozen=True)
class FullDraw(PartialDraw):
    """Same layout as PartialDraw; each estimate has one non-zero column."""
    pass


class ImportanceSampler:
    """
    Holds the precomputed norms sigma_i = ||X_hat(:, i)||_2 and
    tau_j = ||X_hat(j, :)||_inf and produces the optimal distributions.
    """
    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.view = AugmentedView(dataset)
        self.sigma = self.view.column_norms()
        self.tau = self.view.row_norms_inf()

    # --- distributions -------------------------------------------------

    @staticmethod
    def _normalize(weights: np.ndarray) -> Optional[np.ndarray]:
        total = float(weights.sum())
        if total <= 0:
            return None
        return weights / total

    def partial_distributions(self, U: np.ndarray, V: np.ndarray):
        """(p, q) with p_i ~ sigma_i ||U(i,:)||_inf and q_j ~ tau_j ||V(j,:) - Y(j,:)||_inf."""
        residual = V - self.dataset.Y
        p = self._normalize(self.sigma * np.abs(U).max(axis=1))
        q = self._normalize(self.tau * np.abs(residual).max(axis=1))
        return p, q

    def full_distributions(self, U: np.ndarray, V: np.ndarray):
        """(p, P, q, Q): l1 row weights followed by the within-row conditionals."""
        residual = np.abs(V - self.dataset.Y)
        U_abs = np.abs(U)
        p = self._normalize(self.sigma * U_abs.sum(axis=1))
        q = self._normalize(self.tau * residual.sum(axis=1))
        P = _row_conditionals(U_abs)
        Q = _row_conditionals(residual)
        return p, P, q, Q

    # --- estimates at a given outcome -----------------------------------

    def xi_partial_estimate(self, U, i, p_i) -> RankOneEstimate:
        return RankOneEstimate(column=self.view.column(i), row=U[i].copy(), scale=1.0 / p_i)

    def eta_partial_estimate(self, V, j, q_j) -> RankOneEstimate:
        return RankOneEstimate(column=self.view.row(j), row=V[j] - self.dataset.Y[j], scale=1.0 / q_j)

    def xi_full_estimate(self, U, i, l, p_i, P_il) -> RankOneEstimate:
        row = np.zeros(self.dataset.k)
        row[l] = 1.0
        return RankOneEstimate(column=self.view.column(i), row=row, scale=U[i, l] / (p_i * P_il))

    def eta_full_estimate(self, V, j, l, q_j, Q_jl) -> RankOneEstimate:
        row = np.zeros(self.dataset.k)
        row[l] = 1.0
        value = V[j, l] - self.dataset.Y[j, l]
        return RankOneEstimate(column=self.view.row(j), row=row, scale=value / (q_j * Q_jl))

    # --- draws ------------------------------------------------------------

    def draw_xi_partial(self, U, stream: DrawStream) -> SideDraw:
        u = stream.uniform()
        weights = self.sigma * np.abs(U).max(axis=1)
        total = float(weights.sum())
        if total <= 0:
            return SideDraw(-1, 0.0, RankOneEstimate.zero(self.dataset.n, self.dataset.k))
        i = sample_index(weights, u)
        p_i = weights[i] / total
        return SideDraw(i, p_i, self.xi_partial_estimate(U, i, p_i))

    def draw_eta_partial(self, V, stream: DrawStream) -> SideDraw:
        u = stream.uniform()
        weights = self.tau * np.abs(V - self.dataset.Y).max(axis=1)
        total = float(weights.sum())
        if total <= 0:
            return SideDraw(-1, 0.0, RankOneEstimate.zero(2 * self.dataset.d, self.dataset.k))
        j = sample_index(weights, u)
        q_j = weights[j] / total
        return SideDraw(j, q_j, self.eta_partial_estimate(V, j, q_j))

    def draw_xi_full(self, U, stream: DrawStream) -> SideDraw:
        u_row, u_class = stream.uniform(), stream.uniform()
        row_mass = np.abs(U).sum(axis=1)
        weights = self.sigma * row_mass
        total = float(weights.sum())
        if total <= 0:
            return SideDraw(-1, 0.0, RankOneEstimate.zero(self.dataset.n, self.dataset.k))
        i = sample_index(weights, u_row)
        class_weights = np.abs(U[i])
        l = sample_index(class_weights, u_class)
        p_i = weights[i] / total
        P_il = class_weights[l] / row_mass[i]
        return SideDraw(i, p_i, self.xi_full_estimate(U, i, l, p_i, P_il), l, P_il)

    def draw_eta_full(self, V, stream: DrawStream) -> SideDraw:
        u_row, u_class = stream.uniform(), stream.uniform()
        residual = np.abs(V - self.dataset.Y)
        row_mass = residual.sum(axis=1)
        weights = self.tau * row_mass
        total = float(weights.sum())
        if total <= 0:
            return SideDraw(-1, 0.0, RankOneEstimate.zero(2 * self.dataset.d, self.dataset.k))
        j = sample_index(weights, u_row)
        l = sample_index(residual[j], u_class)
        q_j = weights[j] / total
        Q_jl = residual[j, l] / row_mass[j]
        return SideDraw(j, q_j, self.eta_full_estimate(V, j, l, q_j, Q_jl), l, Q_jl)


def _row_conditionals(weights: np.ndarray) -> np.ndarray:
    """Rows normalised to sum to one; all-zero rows are left at zero."""
    sums = weights.sum(axis=1, keepdims=True)
    out = np.zeros_like(weights)
    np.divide(weights, sums, out=out, where=sums > 0)
    return out


def partial_distributions(dataset: Dataset, U, V):
    return ImportanceSampler(dataset).partial_distributions(U, V)


def full_distributions(dataset: Dataset, U, V):
    return ImportanceSampler(dataset).full_distributions(U, V)


def draw_partial(dataset: Dataset, U, V, stream: DrawStream) -> PartialDraw:
    sampler = ImportanceSampler(dataset)
    eta = sampler.draw_eta_partial(V, stream)
    xi = sampler.draw_xi_partial(U, stream)
    return PartialDraw(xi=xi, eta=eta)


def draw_full(dataset: Dataset, U, V, stream: DrawStream) -> FullDraw:
    sampler = ImportanceSampler(dataset)
    eta = sampler.draw_eta_full(V, stream)
    xi = sampler.draw_xi_full(U, stream)
    return FullDraw(xi=xi, eta=eta)


def variance_bounds(geometry: ProblemGeometry):
    """Upper bounds (sigma2_U_bar, sigma2_V_bar) on the variance proxies."""
    return geometry.sigma2_U_bar, geometry.sigma2_V_bar
