"""First-order matrix autoregression ``X_t = A X_{t-1} B^T + E_t``.

Fitted by alternating least squares on ``1/2 sum_{t=2..T} ||X_t - A X_{t-1} B^T||_F^2``.
With B fixed the A-subproblem has normal equations
``A (sum Z_t Z_t^T) = sum X_t Z_t^T`` where ``Z_t = X_{t-1} B^T``; with A fixed
``B (sum W_t^T W_t) = sum X_t^T W_t`` where ``W_t = A X_{t-1}``. Both sums are
formed as one matrix product over the time-stacked snapshots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.linalg

from gridcast.errors import NonFiniteError, ShapeError, SingularGramError
from gridcast.tensor.dense import DenseTensor, as_tensor

if TYPE_CHECKING:
    from gridcast.ingest.series import FieldSeries

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 500
DEFAULT_REL_TOL = 1e-10

Init = Literal["identity", "random"]


@dataclass(frozen=True)
class MarModel:
    """Coefficient matrices ``a`` (M x M) and ``b`` (N x N) with fit diagnostics."""

    a: np.ndarray
    b: np.ndarray
    loss_history: tuple[float, ...] = ()
    iterations_run: int = 0
    converged: bool = False
    ridge: float = 0.0
    fit_info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"A must be square, got {a.shape}")
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ShapeError(f"B must be square, got {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NonFiniteError("MAR coefficients must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "loss_history", tuple(float(v) for v in self.loss_history))

    @property
    def field_shape(self) -> tuple[int, int]:
        return self.a.shape[0], self.b.shape[0]

    @property
    def parameter_count(self) -> int:
        """``M^2 + N^2``."""
        return int(self.a.size + self.b.size)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")


def _series_array(series: FieldSeries | DenseTensor | np.ndarray) -> np.ndarray:
    values = getattr(series, "values", series)
    tensor = as_tensor(values)
    if tensor.order != 3:
        raise ShapeError(f"MAR needs an M x N x T series, got shape {tensor.shape}")
    if tensor.shape[2] < 2:
        raise ShapeError(f"MAR needs at least 2 time steps, got {tensor.shape[2]}")
    return tensor.require_finite().data


def _apply(a: np.ndarray, b: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """``A F_t B^T`` for every slice of an ``M x N x T`` stack."""
    left = np.tensordot(a, fields, axes=(1, 0))
    return np.einsum("mnt,kn->mkt", left, b)


def _loss(a: np.ndarray, b: np.ndarray, prev: np.ndarray, cur: np.ndarray) -> float:
    residual = cur - _apply(a, b, prev)
    return 0.5 * float(np.sum(residual * residual))


def mar_loss(model: MarModel, series: FieldSeries | DenseTensor | np.ndarray) -> float:
    """``1/2 sum_{t=2..T} ||X_t - A X_{t-1} B^T||_F^2``."""
    data = _series_array(series)
    if data.shape[:2] != model.field_shape:
        raise ShapeError(f"series fields {data.shape[:2]} do not match model {model.field_shape}")
    return _loss(model.a, model.b, data[:, :, :-1], data[:, :, 1:])


def _solve_gram(gram: np.ndarray, rhs: np.ndarray, ridge: float,
                iteration: int, block: str) -> np.ndarray:
    """Solve ``X gram = rhs`` for X with a symmetric positive definite ``gram``."""
    if ridge:
        gram = gram + ridge * np.eye(gram.shape[0])
    try:
        solution = scipy.linalg.solve(gram, rhs.T, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise SingularGramError(
            f"Gram matrix for {block} is singular at iteration {iteration}; "
            f"consider a ridge term",
            iteration=iteration,
            block=block,
        ) from exc
    return solution.T


def _update_a(b: np.ndarray, prev: np.ndarray, cur: np.ndarray, ridge: float,
              iteration: int) -> np.ndarray:
    m = prev.shape[0]
    z = np.einsum("mnt,kn->mkt", prev, b).reshape(m, -1)
    stacked = cur.reshape(m, -1)
    return _solve_gram(z @ z.T, stacked @ z.T, ridge, iteration, "A")


def _update_b(a: np.ndarray, prev: np.ndarray, cur: np.ndarray, ridge: float,
              iteration: int) -> np.ndarray:
    n = prev.shape[1]
    w = np.tensordot(a, prev, axes=(1, 0)).transpose(1, 0, 2).reshape(n, -1)
    stacked = cur.transpose(1, 0, 2).reshape(n, -1)
    return _solve_gram(w @ w.T, stacked @ w.T, ridge, iteration, "B")


def mar_fit_als(
    series: FieldSeries | DenseTensor | np.ndarray,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    init: Init = "identity",
    seed: int | None = None,
    ridge: float = 0.0,
) -> MarModel:
    """Fit ``A`` and ``B`` by alternating least squares.

    Parameters
    ----------
    series:
        ``M x N x T`` field series, ``T >= 2``.
    max_iters:
        Maximum number of full sweeps (A update then B update).
    rel_tol:
        Stop when ``|L_{i-1} - L_i| / L_{i-1}`` drops below this.
    init:
        ``"identity"`` or ``"random"`` (Gaussian scaled by ``1/sqrt(dim)``, drawn
        from ``seed``).
    ridge:
        ``eps`` added to the diagonal of both Gram matrices.

    Returns
    -------
    MarModel
        ``loss_history[0]`` is the loss of the initial guess; one entry per sweep
        follows.

    Raises
    ------
    SingularGramError
        A Gram matrix cannot be factorized (carries the sweep index).
    """
    data = _series_array(series)
    if max_iters < 0:
        raise ValueError(f"max_iters must be >= 0, got {max_iters}")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    m, n, steps = data.shape
    prev = data[:, :, :-1]
    cur = data[:, :, 1:]

    if init == "identity":
        a, b = np.eye(m), np.eye(n)
    elif init == "random":
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((m, m)) / np.sqrt(m)
        b = rng.standard_normal((n, n)) / np.sqrt(n)
    else:
        raise ValueError(f"unknown init {init!r}")

    history = [_loss(a, b, prev, cur)]
    converged = history[0] == 0.0
    iteration = 0
    while not converged and iteration < max_iters:
        iteration += 1
        a = _update_a(b, prev, cur, ridge, iteration)
        b = _update_b(a, prev, cur, ridge, iteration)
        history.append(_loss(a, b, prev, cur))
        before, after = history[-2], history[-1]
        if after == 0.0 or abs(before - after) <= rel_tol * before:
            converged = True

    if converged:
        logger.info("MAR ALS converged after %d sweeps, loss %.6e", iteration, history[-1])
    else:
        logger.warning("MAR ALS stopped at max_iters=%d, loss %.6e", max_iters, history[-1])

    return MarModel(
        a=a,
        b=b,
        loss_history=tuple(history),
        iterations_run=iteration,
        converged=converged,
        ridge=ridge,
        fit_info={"shape": [m, n, steps], "init": init, "seed": seed},
    )


def mar_predict(model: MarModel, x_last: np.ndarray, steps: int) -> DenseTensor:
    """Recursive forecast: slice 1 is ``A x_last B^T``, slice t+1 is ``A (slice t) B^T``."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    state = np.asarray(x_last, dtype=float)
    if state.shape != model.field_shape:
        raise ShapeError(f"x_last has shape {state.shape}, model expects {model.field_shape}")
    out = np.empty(model.field_shape + (steps,))
    for t in range(steps):
        state = model.a @ state @ model.b.T
        out[:, :, t] = state
    return DenseTensor(out)
