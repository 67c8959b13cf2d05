from dataclasses import dataclass

import numpy as np

from phdae_cli import create_logger
from phdae_cli.error import (DimensionMismatch, InvalidParameter, NoConvergence, SingularAlgebraicBlock,
                             SingularJacobian, SingularMatrix)
from phdae_cli.model import PhDaeModel
from phdae_cli.numerics import LuFactors, lu_factor, lu_solve, lu_solve_transposed, norm2

console_logger = create_logger(__name__)

DEFAULT_EPSILON = 1e-10
DEFAULT_MAX_NEWTON_ITERS = 20


@dataclass(frozen=True)
class SolverConfig:
    h: float
    epsilon: float = DEFAULT_EPSILON
    max_newton_iters: int = DEFAULT_MAX_NEWTON_ITERS

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidParameter(f"Step size h must be positive, got {self.h}.")
        if not self.epsilon > 0:
            raise InvalidParameter(f"Newton tolerance epsilon must be positive, got {self.epsilon}.")
        if self.max_newton_iters < 1:
            raise InvalidParameter(f"max_newton_iters must be at least 1, got {self.max_newton_iters}.")


@dataclass(frozen=True)
class Trajectory:
    """
    states[k] and outputs[k] belong to sample index times[k]; outputs[k] = G^T Q states[k].
    """
    states: np.ndarray
    outputs: np.ndarray
    times: np.ndarray
    newton_iterations: np.ndarray

    def __len__(self):
        return self.states.shape[0]


def _as_state(model: PhDaeModel, x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != model.n:
        raise DimensionMismatch(name, f'state with {model.n} rows', x.shape)
    return x


def _as_input(model: PhDaeModel, u, name):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 0:
        u = u.reshape(1)
    if u.shape[0] != model.m:
        raise DimensionMismatch(name, f'input with {model.m} rows', u.shape)
    return u


def residual(model: PhDaeModel, x_n, x_prev, u_n, h: float) -> np.ndarray:
    x_n = _as_state(model, x_n, 'residual')
    x_prev = _as_state(model, x_prev, 'residual')
    u_n = _as_input(model, u_n, 'residual')
    e_h = model.e / h
    return e_h @ x_n - e_h @ x_prev - (model.j - model.r) @ model.q @ x_n - model.g @ u_n


def residual_jacobian(model: PhDaeModel, h: float) -> np.ndarray:
    return model.e / h - model.j @ model.q + model.r @ model.q


class StepMap:
    """
    Backward Euler step of a linear pH-DAE at a fixed step size.

    The residual Jacobian is state independent, so it is factorized once and shared by
    every step, every Newton iteration and every column of a batch.
    """

    def __init__(self, model: PhDaeModel, h: float):
        self.model = model
        self.h = h
        self.e_h = model.e / h
        self.jacobian = residual_jacobian(model, h)
        try:
            self.factors: LuFactors = lu_factor(self.jacobian)
        except SingularMatrix as e:
            raise SingularJacobian(e)

    def solve(self, rhs) -> np.ndarray:
        return lu_solve(self.factors, rhs)

    def solve_transposed(self, rhs) -> np.ndarray:
        return lu_solve_transposed(self.factors, rhs)

    def advance(self, x_prev, u_n) -> np.ndarray:
        """
        Exact solution of the step equation J_r x_n = (E/h) x_prev + G u_n.
        Columns of ``x_prev``/``u_n`` are independent trajectories.
        """
        return self.solve(self.e_h @ x_prev + self.model.g @ u_n)

    def run(self, x0, inputs) -> np.ndarray:
        """
        States for every row of ``inputs`` starting from x0 at row 0.
        """
        inputs = np.asarray(inputs, dtype=np.float64).reshape(len(inputs), -1)
        states = np.empty((inputs.shape[0], self.model.n))
        if inputs.shape[0] == 0:
            return states
        states[0] = x0
        for k in range(1, inputs.shape[0]):
            states[k] = self.advance(states[k - 1], inputs[k])
        return states


def newton_step(model: PhDaeModel, x_prev, u_n, h: float, config: SolverConfig, x_init=None,
                step_map: StepMap = None, step: int = None):
    """
    Solve one backward Euler step with Newton's method.

    Returns (x_n, iterations): the number of corrections applied before the update norm dropped
    below ``config.epsilon``, counting the confirming solve when it is the only one. A linear
    model reports 1, and so does a step that starts at its solution.
    """
    if step_map is None:
        try:
            step_map = StepMap(model, h)
        except SingularJacobian as e:
            raise e.at_step(step)
    x_prev = _as_state(model, x_prev, 'newton_step')
    u_n = _as_input(model, u_n, 'newton_step')
    x = x_prev.copy() if x_init is None else _as_state(model, x_init, 'newton_step').copy()

    dx_norm = float('inf')
    for applied in range(config.max_newton_iters + 1):
        dx = -step_map.solve(residual(model, x, x_prev, u_n, h))
        dx_norm = norm2(dx)
        if dx_norm < config.epsilon:
            return x + dx, max(applied, 1)
        if applied == config.max_newton_iters:
            break
        x = x + dx

    raise NoConvergence(config.max_newton_iters, dx_norm, step=step)


def simulate(model: PhDaeModel, x0, inputs, config: SolverConfig) -> Trajectory:
    """
    Backward Euler over ``inputs`` (one row per sample). Row 0 pairs with x0; each later row k
    is the input at the new time of step k.
    """
    x0 = _as_state(model, x0, 'simulate')
    inputs = np.asarray(inputs, dtype=np.float64).reshape(len(inputs), -1)
    if inputs.shape[1] != model.m:
        raise DimensionMismatch('simulate', f'{model.m} input channels', inputs.shape[1])

    n_samples = inputs.shape[0]
    states = np.empty((n_samples, model.n))
    iterations = np.zeros(n_samples, dtype=int)
    if n_samples:
        states[0] = x0

    if n_samples > 1:
        try:
            step_map = StepMap(model, config.h)
        except SingularJacobian as e:
            raise e.at_step(1)
        for k in range(1, n_samples):
            states[k], iterations[k] = newton_step(model, states[k - 1], inputs[k], config.h, config,
                                                   step_map=step_map, step=k)

    console_logger.debug(f'simulated {n_samples} samples at h={config.h}')
    outputs = states @ (model.g.T @ model.q).T
    return Trajectory(states=states, outputs=outputs, times=np.arange(n_samples), newton_iterations=iterations)


def consistent_initialize(model: PhDaeModel, x_diff, u0) -> np.ndarray:
    """
    Complete a differential-state guess with algebraic states that satisfy the zero rows of E.

    ``x_diff`` holds either the differential states only or a full state vector whose
    algebraic entries are ignored.
    """
    alg = model.algebraic_rows
    diff = np.setdiff1d(np.arange(model.n), alg)
    x_diff = np.asarray(x_diff, dtype=np.float64).ravel()
    if x_diff.shape[0] == model.n:
        x_diff = x_diff[diff]
    if x_diff.shape[0] != diff.shape[0]:
        raise DimensionMismatch('consistent_initialize', f'{diff.shape[0]} or {model.n} states', x_diff.shape[0])
    u0 = _as_input(model, u0, 'consistent_initialize')

    x = np.zeros(model.n)
    x[diff] = x_diff
    if alg.size == 0:
        return x

    a = (model.j - model.r) @ model.q
    rhs = -(a[np.ix_(alg, diff)] @ x_diff + model.g[alg] @ u0)
    try:
        factors = lu_factor(a[np.ix_(alg, alg)])
    except SingularMatrix:
        raise SingularAlgebraicBlock(alg)
    x[alg] = lu_solve(factors, rhs)
    return x
