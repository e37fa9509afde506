"""Linear-chain CRF over the 7 roles: scoring, exact inference, NLL gradients.

Path score for labels y on emissions E:

    start[y_0] + sum_t E[t, y_t] + sum_{t>=1} T[y_{t-1}, y_t] + end[y_{m-1}]

All dynamic programs run in log space with max-shifted logsumexp through the
kernels module. The label axis is fixed at 7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, NumericError
from .roles import NUM_ROLES


@dataclass
class CrfParams:
    W_e: np.ndarray  # (context_dim, 7) emission projection
    b_e: np.ndarray  # (7,)
    T: np.ndarray  # (7, 7), T[a, b] scores a -> b
    start: np.ndarray  # (7,)
    end: np.ndarray  # (7,)

    def __post_init__(self) -> None:
        if self.T.shape != (NUM_ROLES, NUM_ROLES):
            raise DataError(f"transition matrix must be 7x7, got {self.T.shape}")
        for name, vec in (("start", self.start), ("end", self.end), ("b_e", self.b_e)):
            if vec.shape != (NUM_ROLES,):
                raise DataError(f"{name} must have length 7, got {vec.shape}")
        if self.W_e.shape[1] != NUM_ROLES:
            raise DataError(f"emission projection must have 7 columns, got {self.W_e.shape}")

    @property
    def context_dim(self) -> int:
        return self.W_e.shape[0]


@dataclass
class CrfGrad:
    """Gradients of the structured blocks; emission-projection gradients are
    assembled by the caller from grad_E and the context features."""

    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray


def init_crf_params(context_dim: int, rng: np.random.Generator) -> CrfParams:
    bound = 1.0 / math.sqrt(context_dim)
    return CrfParams(
        W_e=rng.uniform(-bound, bound, size=(context_dim, NUM_ROLES)),
        b_e=np.zeros(NUM_ROLES),
        T=np.zeros((NUM_ROLES, NUM_ROLES)),
        start=np.zeros(NUM_ROLES),
        end=np.zeros(NUM_ROLES),
    )


def emissions(H: np.ndarray, p: CrfParams) -> np.ndarray:
    """Project context features to per-label scores: E = H W_e + b_e."""
    if H.shape[1] != p.context_dim:
        raise DataError(f"context width {H.shape[1]} != emission projection rows {p.context_dim}")
    return H @ p.W_e + p.b_e


def _validate_labels(E: np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (E.shape[0],):
        raise DataError(f"label sequence length {y.shape} does not match emissions {E.shape[0]}")
    if y.size and (y.min() < 0 or y.max() >= NUM_ROLES):
        raise DataError(f"label ids must lie in 0..{NUM_ROLES - 1}")
    return y


def sequence_score(E: np.ndarray, y, p: CrfParams) -> float:
    y = _validate_labels(E, y)
    m = E.shape[0]
    score = p.start[y[0]] + p.end[y[m - 1]] + E[np.arange(m), y].sum()
    if m > 1:
        score += p.T[y[:-1], y[1:]].sum()
    return float(score)


def log_partition(E: np.ndarray, p: CrfParams) -> float:
    log_z, _ = kernels.crf_forward(E, p.T, p.start, p.end)
    if not np.isfinite(log_z):
        raise NumericError("non-finite log partition")
    return float(log_z)


def marginals(E: np.ndarray, p: CrfParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior node (m, 7) and edge (m-1, 7, 7) marginals."""
    m = E.shape[0]
    log_z, alpha = kernels.crf_forward(E, p.T, p.start, p.end)
    beta = kernels.crf_backward(E, p.T, p.end)
    node = np.exp(alpha + beta - log_z)
    if m > 1:
        # edge[t, a, b] = P(y_t = a, y_{t+1} = b)
        edge = np.exp(
            alpha[:-1, :, None]
            + p.T[None, :, :]
            + (E[1:, None, :] + beta[1:, None, :])
            - log_z
        )
    else:
        edge = np.zeros((0, NUM_ROLES, NUM_ROLES))
    if not (np.all(np.isfinite(node)) and np.all(np.isfinite(edge))):
        raise NumericError("non-finite marginals")
    return node, edge


def nll_and_grad(E: np.ndarray, y, p: CrfParams) -> tuple[float, np.ndarray, CrfGrad]:
    """Negative log-likelihood of y plus exact gradients.

    grad_E = node_marginals - onehot(y); transition/start/end gradients are
    expected counts minus empirical counts.
    """
    y = _validate_labels(E, y)
    m = E.shape[0]
    loss = log_partition(E, p) - sequence_score(E, y, p)
    node, edge = marginals(E, p)
    grad_E = node.copy()
    grad_E[np.arange(m), y] -= 1.0
    dT = edge.sum(axis=0)
    np.add.at(dT, (y[:-1], y[1:]), -1.0)
    d_start = node[0].copy()
    d_start[y[0]] -= 1.0
    d_end = node[-1].copy()
    d_end[y[-1]] -= 1.0
    if not np.isfinite(loss):
        raise NumericError("non-finite CRF loss")
    return float(loss), grad_E, CrfGrad(transitions=dT, start=d_start, end=d_end)


def viterbi_decode(E: np.ndarray, p: CrfParams) -> tuple[list[int], float]:
    """Highest-scoring label sequence; ties break toward the lowest label id.

    The returned score is recomputed with sequence_score on the decoded path
    so it matches that function exactly.
    """
    path = kernels.crf_viterbi(E, p.T, p.start, p.end)
    labels = [int(v) for v in path]
    return labels, sequence_score(E, labels, p)
