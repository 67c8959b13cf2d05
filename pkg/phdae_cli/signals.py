import csv
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from phdae_cli import create_logger
from phdae_cli.error import (DatasetIoError, DatasetParseError, DegenerateSignal, DimensionMismatch, InsufficientData,
                             InvalidParameter)

console_logger = create_logger(__name__)

NOISELESS = math.inf


@dataclass(frozen=True)
class MultisineSpec:
    f0: float = 0.1
    n_sines: int = 40
    phases: Optional[np.ndarray] = None
    amplitude: float = 1.0

    def __post_init__(self):
        phases = np.zeros(self.n_sines) if self.phases is None else np.asarray(self.phases, dtype=np.float64)
        if phases.shape != (self.n_sines,):
            raise DimensionMismatch('MultisineSpec', f'{self.n_sines} phases', phases.shape)
        if np.any(phases < 0.0) or np.any(phases >= 2.0 * np.pi):
            raise InvalidParameter('Multisine phases must lie in [0, 2*pi).')
        object.__setattr__(self, 'phases', phases)

    @classmethod
    def random(cls, rng: np.random.Generator, f0: float = 0.1, n_sines: int = 40, amplitude: float = 1.0):
        return cls(f0=f0, n_sines=n_sines, phases=rng.uniform(0.0, 2.0 * np.pi, size=n_sines), amplitude=amplitude)


def multisine(spec: MultisineSpec, t):
    """
    u(t) = A * sum_i sin(2 pi i f0 t + phi_i), i = 1 .. n_sines. ``t`` may be an array.
    """
    t = np.asarray(t, dtype=np.float64)
    harmonics = np.arange(1, spec.n_sines + 1)
    angles = 2.0 * np.pi * spec.f0 * np.multiply.outer(t, harmonics) + spec.phases
    u = spec.amplitude * np.sum(np.sin(angles), axis=-1)
    return float(u) if u.ndim == 0 else u


def population_std(signal) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    return np.std(signal, axis=0)


def add_noise(signal, snr_db: float, rng: np.random.Generator):
    """
    Add white Gaussian noise with std sigma_y * 10^(-snr/20) per channel, where sigma_y is the
    population std of each clean channel.

    Returns (noisy signal, noise std per channel).
    """
    signal = np.asarray(signal, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return signal.copy(), np.zeros(signal.shape[1:]) if signal.ndim > 1 else 0.0

    sigma = population_std(signal)
    if np.any(sigma == 0.0):
        raise DegenerateSignal("Cannot set an SNR on a constant signal.")
    noise_std = sigma * 10.0 ** (-snr_db / 20.0)
    noise = rng.normal(0.0, 1.0, size=signal.shape) * noise_std
    return signal + noise, (float(noise_std) if np.ndim(noise_std) == 0 else noise_std)


@dataclass
class Dataset:
    """
    Uniformly sampled record, one row per sample.
    """
    t_s: float
    inputs: np.ndarray
    outputs: np.ndarray
    clean_outputs: Optional[np.ndarray] = None
    snr_db: Optional[float] = None
    noise_std: Optional[np.ndarray] = None
    seed: Optional[int] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64).reshape(len(self.inputs), -1)
        self.outputs = np.asarray(self.outputs, dtype=np.float64).reshape(len(self.outputs), -1)
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise DimensionMismatch('Dataset', f'{self.inputs.shape[0]} output samples', self.outputs.shape[0])
        if self.clean_outputs is not None:
            self.clean_outputs = np.asarray(self.clean_outputs, dtype=np.float64).reshape(self.outputs.shape)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def m_u(self) -> int:
        return self.inputs.shape[1]

    @property
    def m_y(self) -> int:
        return self.outputs.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.t_s

    def header(self):
        cols = ['t'] + [f'u{i + 1}' for i in range(self.m_u)] + [f'y{i + 1}' for i in range(self.m_y)]
        if self.clean_outputs is not None:
            cols += [f'y_clean{i + 1}' for i in range(self.m_y)]
        return cols


def write_csv(dataset: Dataset, path):
    blocks = [dataset.times[:, None], dataset.inputs, dataset.outputs]
    if dataset.clean_outputs is not None:
        blocks.append(dataset.clean_outputs)
    table = np.hstack(blocks)
    try:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(dataset.header())
            # python floats print the shortest string that round-trips
            writer.writerows(table.tolist())
    except OSError as e:
        raise DatasetIoError(path, e.strerror or str(e))
    console_logger.debug(f'wrote {len(dataset)} samples to {path}')


def _parse_header(path, header):
    if not header or header[0] != 't':
        raise DatasetParseError(path, 1, "the first column must be 't'")
    groups = {'u': [], 'y': [], 'y_clean': []}
    for name in header[1:]:
        for prefix in ('y_clean', 'u', 'y'):
            suffix = name[len(prefix):]
            if name.startswith(prefix) and suffix.isdigit():
                groups[prefix].append(int(suffix))
                break
        else:
            raise DatasetParseError(path, 1, f"unknown column '{name}'")

    m_u = len(groups['u'])
    m_y = len(groups['y'])
    expected = ['t'] + [f'u{i + 1}' for i in range(m_u)] + [f'y{i + 1}' for i in range(m_y)]
    if groups['y_clean']:
        expected += [f'y_clean{i + 1}' for i in range(m_y)]
    if header != expected:
        raise DatasetParseError(path, 1, f"expected columns {','.join(expected)}")
    if m_u == 0 or m_y == 0:
        raise DatasetParseError(path, 1, 'at least one input and one output column are required')
    return m_u, m_y, bool(groups['y_clean'])


def read_csv(path) -> Dataset:
    if not os.path.exists(path):
        raise DatasetIoError(path, 'file not found')
    try:
        with open(path, 'r', newline='', encoding='utf-8') as f:
            reader = csv.reader(f)
            try:
                header = [c.strip() for c in next(reader)]
            except StopIteration:
                raise InsufficientData(f"Dataset '{path}' is empty.")
            m_u, m_y, has_clean = _parse_header(path, header)

            rows = []
            for row in reader:
                line = reader.line_num
                if not row:
                    continue
                if len(row) != len(header):
                    raise DatasetParseError(path, line, f'expected {len(header)} columns, found {len(row)}')
                try:
                    values = [float(v) for v in row]
                except ValueError as e:
                    raise DatasetParseError(path, line, str(e))
                if not all(math.isfinite(v) for v in values):
                    raise DatasetParseError(path, line, 'non-finite value')
                rows.append(values)
    except OSError as e:
        raise DatasetIoError(path, e.strerror or str(e))

    if len(rows) < 2:
        raise InsufficientData(f"Dataset '{path}' has {len(rows)} samples; at least 2 are needed to "
                               f"determine the sampling period.")

    table = np.asarray(rows, dtype=np.float64)
    t_s = float(table[1, 0] - table[0, 0])
    if not t_s > 0:
        raise DatasetParseError(path, 3, 'time column must be strictly increasing')
    inputs = table[:, 1:1 + m_u]
    outputs = table[:, 1 + m_u:1 + m_u + m_y]
    clean = table[:, 1 + m_u + m_y:] if has_clean else None
    return Dataset(t_s=t_s, inputs=inputs, outputs=outputs, clean_outputs=clean)


@dataclass(frozen=True)
class DataSpec:
    """
    Recipe of one generated experiment: record length, excitation, noise level and seeds.
    """
    samples: int = 10000
    t_s: float = 0.005
    f0: float = 0.1
    n_sines: int = 40
    snr_db: float = 20.0
    seeds: Dict[str, int] = field(default_factory=lambda: {'train': 1, 'val': 2, 'test': 3})
    ic_range: float = 0.5
    oversample: int = 1
