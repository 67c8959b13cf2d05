from dataclasses import dataclass

import numpy as np

from phdae_cli.error import DimensionMismatch, InsufficientData


def window_size(n_lag: int, m_u: int, m_y: int) -> int:
    return n_lag * (m_u + m_y) + m_y


def encoder_windows(inputs, outputs, starts, n_lag: int) -> np.ndarray:
    """
    Encoder inputs for the subsections starting at ``starts``, one window per column.

    The window of start tau stacks u[tau-n_lag .. tau-1] then y[tau-n_lag .. tau], each
    flattened in time order.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    starts = np.asarray(starts, dtype=int)
    if starts.size and (starts.min() < n_lag or starts.max() >= outputs.shape[0]):
        raise InsufficientData(f"Encoder window of {n_lag} past samples does not fit the start indices "
                               f"[{starts.min()}, {starts.max()}] of a record with {outputs.shape[0]} samples.")
    lags_u = np.arange(-n_lag, 0)
    lags_y = np.arange(-n_lag, 1)
    u_win = inputs[starts[:, None] + lags_u[None, :]]
    y_win = outputs[starts[:, None] + lags_y[None, :]]
    z = np.concatenate([u_win.reshape(len(starts), -1), y_win.reshape(len(starts), -1)], axis=1)
    return z.T.copy()


@dataclass
class LinearEncoder:
    """
    Affine initial-state estimator x = weight @ z + bias over a past input/output window.
    """
    weight: np.ndarray
    bias: np.ndarray
    n_lag: int
    m_u: int
    m_y: int

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()
        nz = window_size(self.n_lag, self.m_u, self.m_y)
        if self.weight.shape != (self.bias.shape[0], nz):
            raise DimensionMismatch('LinearEncoder', (self.bias.shape[0], nz), self.weight.shape)

    @classmethod
    def zeros(cls, n: int, n_lag: int, m_u: int, m_y: int) -> 'LinearEncoder':
        return cls(np.zeros((n, window_size(n_lag, m_u, m_y))), np.zeros(n), n_lag, m_u, m_y)

    @property
    def n(self) -> int:
        return self.bias.shape[0]

    @property
    def n_eta(self) -> int:
        return self.weight.size + self.bias.size

    def encode(self, past_inputs, past_outputs) -> np.ndarray:
        past_inputs = np.asarray(past_inputs, dtype=np.float64).reshape(-1, self.m_u)
        past_outputs = np.asarray(past_outputs, dtype=np.float64).reshape(-1, self.m_y)
        if past_inputs.shape[0] != self.n_lag:
            raise DimensionMismatch('encode', f'{self.n_lag} past inputs', past_inputs.shape[0])
        if past_outputs.shape[0] != self.n_lag + 1:
            raise DimensionMismatch('encode', f'{self.n_lag + 1} past outputs', past_outputs.shape[0])
        z = np.concatenate([past_inputs.ravel(), past_outputs.ravel()])
        return self.weight @ z + self.bias

    def encode_windows(self, z) -> np.ndarray:
        return self.weight @ z + self.bias[:, None]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.weight.ravel(), self.bias])

    def from_vector(self, eta) -> 'LinearEncoder':
        eta = np.asarray(eta, dtype=np.float64).ravel()
        if eta.shape[0] != self.n_eta:
            raise DimensionMismatch('LinearEncoder.from_vector', self.n_eta, eta.shape[0])
        split = self.weight.size
        return LinearEncoder(eta[:split].reshape(self.weight.shape), eta[split:].copy(),
                             self.n_lag, self.m_u, self.m_y)

    def to_dict(self) -> dict:
        return {
            'n_lag': self.n_lag,
            'm_u': self.m_u,
            'm_y': self.m_y,
            'weight': self.weight.ravel().tolist(),
            'bias': self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'LinearEncoder':
        bias = np.asarray(d['bias'], dtype=np.float64)
        weight = np.asarray(d['weight'], dtype=np.float64).reshape(bias.shape[0], -1)
        return cls(weight, bias, int(d['n_lag']), int(d['m_u']), int(d['m_y']))
