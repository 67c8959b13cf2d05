import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Union

import numpy as np

from phdae_cli import create_logger
from phdae_cli.error import (DegenerateSignal, DimensionMismatch, InsufficientData, InvalidParameter, NoConvergence,
                             SingularJacobian, SolverFailure)
from phdae_cli.grad import SubsectionBatch, batch_loss, batch_loss_and_gradient
from phdae_cli.ident.adam import AdamState, adam_step
from phdae_cli.ident.encoder import LinearEncoder
from phdae_cli.ident.event import DefaultTrainEventHandler, TrainEventHandler
from phdae_cli.model import (PhDaeModel, PhDaeParams, ParamMasks, assemble, flatten, gather_free, output_matrix,
                            unflatten)
from phdae_cli.numerics import NonFiniteValue
from phdae_cli.signals import Dataset
from phdae_cli.solver import SolverConfig, StepMap

console_logger = create_logger(__name__)

# subsections per work item; fixed so the reduction order does not depend on the worker count
CHUNK_SIZE = 64

SOLVER_ERRORS = (SingularJacobian, NoConvergence, NonFiniteValue)


@dataclass(frozen=True)
class TrainConfig:
    truncation_length: int = 40
    n_lag: Optional[int] = None
    batch_size: int = 256
    lr_start: float = 1e-2
    lr_end: float = 1e-3
    epochs: int = 300
    seed: int = 0
    log_diagonal: bool = True
    solver: Optional[SolverConfig] = None

    def __post_init__(self):
        if self.truncation_length < 1:
            raise InvalidParameter(f"truncation_length must be at least 1, got {self.truncation_length}.")
        if self.n_lag is not None and self.n_lag < 1:
            raise InvalidParameter(f"n_lag must be at least 1, got {self.n_lag}.")
        if self.batch_size < 1:
            raise InvalidParameter(f"batch_size must be at least 1, got {self.batch_size}.")
        if not (self.lr_start >= self.lr_end > 0):
            raise InvalidParameter(f"Learning rates must satisfy lr_start >= lr_end > 0, "
                                   f"got {self.lr_start} and {self.lr_end}.")
        if self.epochs < 0:
            raise InvalidParameter(f"epochs must not be negative, got {self.epochs}.")

    def lag_for(self, n: int) -> int:
        return self.n_lag if self.n_lag is not None else n

    def solver_for(self, t_s: float) -> SolverConfig:
        if self.solver is None:
            return SolverConfig(h=t_s)
        return replace(self.solver, h=t_s)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_nrms: float
    lr: float


@dataclass
class TrainState:
    masks: ParamMasks
    encoder_template: LinearEncoder
    theta: np.ndarray
    eta: np.ndarray
    adam: AdamState
    step: int = 0
    best_theta: Optional[np.ndarray] = None
    best_eta: Optional[np.ndarray] = None
    best_val_nrms: float = math.inf
    best_epoch: Optional[int] = None
    history: List[EpochRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, params: PhDaeParams, encoder: LinearEncoder) -> 'TrainState':
        theta = flatten(params)
        eta = encoder.to_vector()
        return cls(masks=params.masks, encoder_template=encoder, theta=theta, eta=eta,
                   adam=AdamState.zeros(theta.size + eta.size), best_theta=theta.copy(), best_eta=eta.copy())

    def params(self) -> PhDaeParams:
        return unflatten(self.theta, self.masks)

    def encoder(self) -> LinearEncoder:
        return self.encoder_template.from_vector(self.eta)

    def best_params(self) -> PhDaeParams:
        return unflatten(self.best_theta, self.masks)

    def best_encoder(self) -> LinearEncoder:
        return self.encoder_template.from_vector(self.best_eta)


def lr_schedule(config: TrainConfig, epoch: int) -> float:
    """
    Geometric decay from lr_start at the first epoch to lr_end at the last.
    """
    if config.epochs <= 1:
        return config.lr_start
    ratio = config.lr_end / config.lr_start
    return config.lr_start * ratio ** (epoch / (config.epochs - 1))


def valid_starts(n_samples: int, horizon: int, n_lag: int) -> np.ndarray:
    """
    Start indices tau with n_lag past samples before and horizon targets from tau on.
    """
    last = n_samples - horizon
    if last < n_lag:
        raise InsufficientData(f"A record of {n_samples} samples cannot hold a subsection of {horizon} samples "
                               f"after {n_lag} encoder samples.")
    return np.arange(n_lag, last + 1)


def sample_batch(dataset: Union[Dataset, int], horizon: int, n_lag: int, batch_size: int,
                 rng: np.random.Generator) -> np.ndarray:
    n_samples = dataset if isinstance(dataset, int) else len(dataset)
    starts = valid_starts(n_samples, horizon, n_lag)
    if batch_size > starts.size:
        raise InsufficientData(f"Batch size {batch_size} exceeds the {starts.size} valid subsections.")
    return np.sort(rng.choice(starts, size=batch_size, replace=False))


def epoch_batches(n_samples: int, config: TrainConfig, n_lag: int, rng: np.random.Generator) -> List[np.ndarray]:
    """
    A shuffled pass over the valid subsections, cut into full batches of sorted start indices.
    """
    starts = valid_starts(n_samples, config.truncation_length, n_lag)
    if config.batch_size > starts.size:
        raise InsufficientData(f"Batch size {config.batch_size} exceeds the {starts.size} valid subsections.")
    order = rng.permutation(starts)
    n_batches = starts.size // config.batch_size
    return [np.sort(order[b * config.batch_size:(b + 1) * config.batch_size]) for b in range(n_batches)]


def _chunks(starts):
    return [starts[i:i + CHUNK_SIZE] for i in range(0, len(starts), CHUNK_SIZE)]


def _map(executor, fn, items):
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def mean_loss_and_gradient(params: PhDaeParams, encoder: LinearEncoder, dataset: Dataset, starts, horizon: int,
                           h: float, selector=None, executor: ThreadPoolExecutor = None):
    """
    Batch loss (mean over subsections of sum_k |e_k|^2 / T) and its gradient in (theta, eta).
    """
    def work(chunk):
        batch = SubsectionBatch.from_record(dataset.inputs, dataset.outputs, chunk, horizon, encoder.n_lag)
        return batch_loss_and_gradient(params, encoder, batch, h, selector)

    results = _map(executor, work, _chunks(starts))
    loss = 0.0
    d_theta = np.zeros(params.n_theta)
    d_eta = np.zeros(encoder.n_eta)
    for chunk_loss, grad in results:
        loss += chunk_loss
        d_theta += grad.d_theta
        d_eta += grad.d_eta
    count = len(starts)
    return loss / count, np.concatenate([d_theta, d_eta]) / count


def subsection_loss(params: PhDaeParams, encoder: LinearEncoder, subsection: SubsectionBatch, h: float,
                    selector=None) -> float:
    if subsection.size != 1:
        raise DimensionMismatch('subsection_loss', 'one subsection', subsection.size)
    return batch_loss(params, encoder, subsection, h, selector)


def full_loss(params: PhDaeParams, encoder: LinearEncoder, dataset: Dataset, horizon: int, selector=None,
              h: float = None, executor: ThreadPoolExecutor = None) -> float:
    """
    Output-error loss over every valid subsection, normalized by (number of subsections) * T.
    """
    h = dataset.t_s if h is None else h
    starts = valid_starts(len(dataset), horizon, encoder.n_lag)

    def work(chunk):
        batch = SubsectionBatch.from_record(dataset.inputs, dataset.outputs, chunk, horizon, encoder.n_lag)
        return batch_loss(params, encoder, batch, h, selector)

    return sum(_map(executor, work, _chunks(starts))) / starts.size


def _as_model(model: Union[PhDaeModel, PhDaeParams]) -> PhDaeModel:
    return assemble(model) if isinstance(model, PhDaeParams) else model


def predict(model: Union[PhDaeModel, PhDaeParams], encoder: LinearEncoder, dataset: Dataset, selector=None,
            h: float = None) -> np.ndarray:
    """
    Simulated outputs for samples n_lag .. N-1 from one encoder estimate at tau = n_lag.
    """
    model = _as_model(model)
    h = dataset.t_s if h is None else h
    n_lag = encoder.n_lag
    if len(dataset) <= n_lag:
        raise InsufficientData(f"A record of {len(dataset)} samples is too short for an encoder lag of {n_lag}.")
    c = output_matrix(model, selector)
    if c.shape[0] != dataset.m_y:
        raise DimensionMismatch('predict', f'{c.shape[0]} output channels', dataset.m_y)

    x0 = encoder.encode(dataset.inputs[:n_lag], dataset.outputs[:n_lag + 1])
    try:
        states = StepMap(model, h).run(x0, dataset.inputs[n_lag:])
    except SOLVER_ERRORS as e:
        raise SolverFailure(e)
    return states @ c.T


def nrms(y, y_hat) -> float:
    """
    Per-channel RMS error over the population std of the measurement, combined as the root
    mean of the squared channel values.
    """
    y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(y.shape)
    sigma = np.std(y, axis=0)
    if np.any(sigma == 0.0):
        raise DegenerateSignal("NRMS is undefined for a constant measured output.")
    per_channel = np.sqrt(np.mean((y - y_hat) ** 2, axis=0)) / sigma
    return float(np.sqrt(np.mean(per_channel ** 2)))


def evaluate_nrms(model: Union[PhDaeModel, PhDaeParams], encoder: LinearEncoder, dataset: Dataset,
                  selector=None, h: float = None) -> float:
    y_hat = predict(model, encoder, dataset, selector, h)
    return nrms(dataset.outputs[encoder.n_lag:], y_hat)


def positive_diagonal(params: PhDaeParams) -> np.ndarray:
    """
    Free diagonal entries of L_E and L_R with a positive value, in ``flatten`` order.
    """
    fields = {}
    for name, mask in params.masks.items():
        diag = np.zeros(mask.shape, dtype=bool)
        if name in ('l_e', 'l_r'):
            np.fill_diagonal(diag, True)
        fields[name] = diag & (params.field(name) > 0.0)
    return gather_free(fields, params.masks)


def to_search_space(theta, log_entries) -> np.ndarray:
    return np.where(log_entries, np.log(np.where(log_entries, theta, 1.0)), theta)


def from_search_space(v, log_entries) -> np.ndarray:
    return np.where(log_entries, np.exp(np.where(log_entries, v, 0.0)), v)


def _check_step(theta, masks: ParamMasks, h: float):
    StepMap(assemble(unflatten(theta, masks)), h)


def train(dataset_train: Dataset, dataset_val: Dataset, params: PhDaeParams, encoder: LinearEncoder,
          config: TrainConfig, selector=None, handler: TrainEventHandler = None, workers: int = 1) -> TrainState:
    """
    Minimize the batch output-error loss with Adam and keep the parameters with the best
    validation NRMS.
    """
    handler = handler or DefaultTrainEventHandler()
    n_lag = config.lag_for(params.n)
    if encoder.n_lag != n_lag or encoder.n != params.n:
        raise DimensionMismatch('train', f'encoder with lag {n_lag} and {params.n} states',
                                f'lag {encoder.n_lag} and {encoder.n} states')
    if not math.isclose(dataset_train.t_s, dataset_val.t_s, rel_tol=1e-9):
        console_logger.warning(f'training and validation sampling periods differ '
                               f'({dataset_train.t_s} vs {dataset_val.t_s})')

    h = config.solver_for(dataset_train.t_s).h
    state = TrainState.initial(params, encoder)
    n_theta = params.n_theta
    # Adam sees log(theta) on these entries, so their steps are relative and they stay positive
    log_entries = positive_diagonal(params) if config.log_diagonal else np.zeros(n_theta, dtype=bool)
    if np.any(log_entries):
        console_logger.debug(f'{int(np.count_nonzero(log_entries))} diagonal factor entries trained in log scale')
    rng = np.random.default_rng(config.seed)

    # validates the record length even when no epoch runs
    starts = valid_starts(len(dataset_train), config.truncation_length, n_lag)
    if config.batch_size > starts.size:
        raise InsufficientData(f"Batch size {config.batch_size} exceeds the {starts.size} valid subsections.")
    handler.handle_run_start(config.epochs, starts.size // config.batch_size)

    executor = ThreadPoolExecutor(max_workers=workers) if workers and workers > 1 else None
    try:
        for epoch in range(config.epochs):
            lr = lr_schedule(config, epoch)
            handler.handle_epoch_start(epoch, lr)
            losses = []
            for b, batch_starts in enumerate(epoch_batches(len(dataset_train), config, n_lag, rng)):
                current = state.params()
                try:
                    loss, grad = mean_loss_and_gradient(current, state.encoder(), dataset_train, batch_starts,
                                                        config.truncation_length, h, selector, executor)
                except SOLVER_ERRORS as e:
                    raise SolverFailure(e, epoch=epoch, batch=b)

                vector = np.concatenate([to_search_space(state.theta, log_entries), state.eta])
                grad = grad.copy()
                grad[:n_theta] = np.where(log_entries, grad[:n_theta] * state.theta, grad[:n_theta])
                new_vector, new_adam = adam_step(vector, grad, state.adam, lr)
                new_theta = from_search_space(new_vector[:n_theta], log_entries)
                try:
                    _check_step(new_theta, state.masks, h)
                except SOLVER_ERRORS as e:
                    handler.handle_retry(epoch, b, lr / 2.0, e)
                    new_vector, new_adam = adam_step(vector, grad, state.adam, lr / 2.0)
                    new_theta = from_search_space(new_vector[:n_theta], log_entries)
                    try:
                        _check_step(new_theta, state.masks, h)
                    except SOLVER_ERRORS as e2:
                        raise SolverFailure(e2, epoch=epoch, batch=b)

                state.theta = new_theta
                state.eta = new_vector[n_theta:]
                state.adam = new_adam
                state.step += 1
                losses.append(loss)
                handler.handle_batch_end(epoch, b, loss)

            try:
                val = evaluate_nrms(state.params(), state.encoder(), dataset_val, selector, h)
            except SolverFailure as e:
                raise SolverFailure(e.cause, epoch=epoch)
            record = EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)), val_nrms=val, lr=lr)
            state.history.append(record)
            improved = val < state.best_val_nrms
            if improved:
                state.best_val_nrms = val
                state.best_epoch = epoch
                state.best_theta = state.theta.copy()
                state.best_eta = state.eta.copy()
            handler.handle_epoch_end(record, improved)
    finally:
        if executor is not None:
            executor.shutdown()
        handler.handle_run_end(state)

    return state
