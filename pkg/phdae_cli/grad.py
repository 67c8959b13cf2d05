from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from phdae_cli.error import DimensionMismatch
from phdae_cli.ident.encoder import LinearEncoder, encoder_windows
from phdae_cli.model import PhDaeParams, assemble, flatten, gather_free, output_matrix, unflatten
from phdae_cli.solver import StepMap


@dataclass(frozen=True)
class SubsectionBatch:
    """
    Subsections sharing one truncation length, stored column-wise.

    windows: (nz, B) encoder windows; inputs: (T, m, B) with inputs[k] = u[tau + k];
    targets: (T, p, B) with targets[k] = y[tau + k].
    """
    windows: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray

    @property
    def size(self) -> int:
        return self.windows.shape[1]

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_record(cls, inputs, outputs, starts, horizon: int, n_lag: int) -> 'SubsectionBatch':
        inputs = np.asarray(inputs, dtype=np.float64).reshape(len(inputs), -1)
        outputs = np.asarray(outputs, dtype=np.float64).reshape(len(outputs), -1)
        starts = np.asarray(starts, dtype=int).ravel()
        steps = np.arange(horizon)
        idx = starts[None, :] + steps[:, None]
        return cls(
            windows=encoder_windows(inputs, outputs, starts, n_lag),
            inputs=inputs[idx].transpose(0, 2, 1).copy(),
            targets=outputs[idx].transpose(0, 2, 1).copy(),
            starts=starts,
        )

    def take(self, columns) -> 'SubsectionBatch':
        return SubsectionBatch(self.windows[:, columns], self.inputs[:, :, columns],
                               self.targets[:, :, columns], self.starts[columns])


@dataclass(frozen=True)
class TapeRecord:
    x_prev: np.ndarray
    u_n: np.ndarray
    x_n: np.ndarray


@dataclass(frozen=True)
class AdjointTape:
    """
    Forward states of a batch and the shared factorization of the residual Jacobian.
    """
    step_map: StepMap
    states: np.ndarray
    inputs: np.ndarray

    def __len__(self):
        return max(self.states.shape[0] - 1, 0)

    def record(self, k: int) -> TapeRecord:
        # step k maps states[k-1] to states[k], k = 1 .. T-1
        return TapeRecord(self.states[k - 1], self.inputs[k], self.states[k])


@dataclass(frozen=True)
class StepContribution:
    e: np.ndarray
    j: np.ndarray
    r: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class Gradient:
    d_theta: np.ndarray
    d_eta: np.ndarray
    fields: Dict[str, np.ndarray]


def step_adjoint(step_map: StepMap, record: TapeRecord, x_bar_n) -> Tuple[np.ndarray, StepContribution]:
    """
    Pull an adjoint back through J_r x_n = (E/h) x_prev + G u_n.

    Returns the adjoint of x_prev and the adjoints of E, J, R, G for this step.
    """
    model = step_map.model
    lam = step_map.solve_transposed(x_bar_n)
    x_bar_prev = step_map.e_h.T @ lam
    qx = model.q @ record.x_n
    lam2 = lam.reshape(model.n, -1)

    def outer(a):
        return lam2 @ np.asarray(a).reshape(a.shape[0], lam2.shape[1]).T

    jr = outer(qx)
    contribution = StepContribution(
        e=outer((record.x_prev - record.x_n) / step_map.h),
        j=jr,
        r=-jr,
        g=outer(record.u_n),
    )
    return x_bar_prev, contribution


def _factor_gradients(params: PhDaeParams, e_bar, j_bar, r_bar, g_bar) -> Dict[str, np.ndarray]:
    fields = {
        'm_j': 0.5 * (j_bar - j_bar.T),
        'l_r': (r_bar + r_bar.T) @ params.l_r,
        'l_e': (e_bar + e_bar.T) @ params.l_e,
        'g': g_bar,
    }
    return {name: np.where(mask.pattern, fields[name], 0.0) for name, mask in params.masks.items()}


def _forward(params: PhDaeParams, encoder: LinearEncoder, batch: SubsectionBatch, h: float, selector):
    model = assemble(params)
    c = output_matrix(model, selector)
    if batch.targets.shape[1] != c.shape[0]:
        raise DimensionMismatch('subsection targets', f'{c.shape[0]} output channels', batch.targets.shape[1])
    if batch.inputs.shape[1] != model.m:
        raise DimensionMismatch('subsection inputs', f'{model.m} input channels', batch.inputs.shape[1])

    step_map = StepMap(model, h)
    horizon = batch.horizon
    states = np.empty((horizon, model.n, batch.size))
    errors = np.empty((horizon, c.shape[0], batch.size))
    if horizon:
        states[0] = encoder.encode_windows(batch.windows)
    for k in range(1, horizon):
        states[k] = step_map.advance(states[k - 1], batch.inputs[k])
    for k in range(horizon):
        errors[k] = batch.targets[k] - c @ states[k]
    return step_map, c, states, errors


def _loss_sum(errors: np.ndarray) -> float:
    horizon = errors.shape[0]
    if horizon == 0:
        return 0.0
    per_subsection = np.sum(errors * errors, axis=(0, 1)) / horizon
    return float(np.sum(per_subsection))


def batch_loss(params: PhDaeParams, encoder: LinearEncoder, batch: SubsectionBatch, h: float,
               selector=None) -> float:
    """
    Sum over the batch of per-subsection losses sum_k |y - y_hat|^2 / T.
    """
    if batch.horizon == 0 or batch.size == 0:
        return 0.0
    _, _, _, errors = _forward(params, encoder, batch, h, selector)
    return _loss_sum(errors)


def batch_loss_and_gradient(params: PhDaeParams, encoder: LinearEncoder, batch: SubsectionBatch, h: float,
                            selector=None) -> Tuple[float, Gradient]:
    """
    ``batch_loss`` together with its gradient with respect to the free parameters and the
    encoder, by reverse accumulation through the backward Euler steps.
    """
    n_eta = encoder.n_eta
    if batch.horizon == 0 or batch.size == 0:
        fields = {name: np.zeros(mask.shape) for name, mask in params.masks.items()}
        return 0.0, Gradient(np.zeros(params.n_theta), np.zeros(n_eta), fields)

    step_map, c, states, errors = _forward(params, encoder, batch, h, selector)
    loss = _loss_sum(errors)
    model = step_map.model
    horizon = batch.horizon

    y_bar = -2.0 * errors / horizon
    x_bar = np.einsum('pn,kpb->knb', c, y_bar)
    c_bar = np.einsum('kpb,knb->pn', y_bar, states)

    e_bar = np.zeros((model.n, model.n))
    j_bar = np.zeros((model.n, model.n))
    r_bar = np.zeros((model.n, model.n))
    g_bar = np.zeros((model.n, model.m))

    tape = AdjointTape(step_map, states, batch.inputs)
    for k in range(len(tape), 0, -1):
        x_bar_prev, contribution = step_adjoint(step_map, tape.record(k), x_bar[k])
        x_bar[k - 1] += x_bar_prev
        e_bar += contribution.e
        j_bar += contribution.j
        r_bar += contribution.r
        g_bar += contribution.g

    # port rows of the output map are G^T Q
    g_bar += model.q @ c_bar[:model.m].T

    fields = _factor_gradients(params, e_bar, j_bar, r_bar, g_bar)
    w_bar = x_bar[0] @ batch.windows.T
    b_bar = x_bar[0].sum(axis=1)
    d_eta = np.concatenate([w_bar.ravel(), b_bar])
    return loss, Gradient(gather_free(fields, params.masks), d_eta, fields)


def subsection_gradient(params: PhDaeParams, encoder: LinearEncoder, subsection: SubsectionBatch, h: float,
                        selector=None) -> Tuple[float, Gradient]:
    """
    Loss and gradient of a single subsection (a batch with one column).
    """
    if subsection.size != 1:
        raise DimensionMismatch('subsection_gradient', 'one subsection', subsection.size)
    return batch_loss_and_gradient(params, encoder, subsection, h, selector)


def central_difference(fn: Callable[[np.ndarray], float], x, delta: float, relative: bool = False) -> np.ndarray:
    """
    (fn(x + d e_i) - fn(x - d e_i)) / (2 d) for every coordinate. With ``relative`` the step is
    scaled by max(1, |x_i|).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        d = delta * max(1.0, abs(x[i])) if relative else delta
        xp = x.copy()
        xm = x.copy()
        xp[i] += d
        xm[i] -= d
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * d)
    return grad


def finite_difference_gradient(params: PhDaeParams, encoder: LinearEncoder, subsection: SubsectionBatch, h: float,
                               delta: float = 1e-6, selector=None, relative: bool = True) -> Gradient:
    theta = flatten(params)
    eta = encoder.to_vector()

    def loss_theta(t):
        return batch_loss(unflatten(t, params.masks), encoder, subsection, h, selector)

    def loss_eta(e):
        return batch_loss(params, encoder.from_vector(e), subsection, h, selector)

    d_theta = central_difference(loss_theta, theta, delta, relative)
    d_eta = central_difference(loss_eta, eta, delta, relative)
    fields = {}
    offset = 0
    for name, mask in params.masks.items():
        f = np.zeros(mask.shape)
        f[mask.pattern] = d_theta[offset:offset + mask.n_free]
        offset += mask.n_free
        fields[name] = f
    return Gradient(d_theta, d_eta, fields)


def max_relative_discrepancy(a, b, floor: float = 1e-8) -> float:
    """
    Largest |a - b| / |b| over entries where |b| exceeds ``floor``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    keep = np.abs(b) > floor
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(a[keep] - b[keep]) / np.abs(b[keep])))

