import json
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from phdae_cli import create_logger, dump_json
from phdae_cli.error import DimensionMismatch, InvalidParameter, ModelFileError

console_logger = create_logger(__name__)

PARAM_FIELDS = ('m_j', 'l_r', 'l_e', 'g')
MODEL_FORMAT = 'phdae-model'
MODEL_FORMAT_VERSION = 1

PSD_TOLERANCE = 1e-10


@dataclass(frozen=True)
class StructuralMask:
    """
    Which entries of a parameter matrix are free (pattern True) and the values of the frozen ones.
    """
    pattern: np.ndarray
    frozen: np.ndarray

    def __post_init__(self):
        pattern = np.asarray(self.pattern, dtype=bool)
        frozen = np.asarray(self.frozen, dtype=np.float64)
        if pattern.shape != frozen.shape:
            raise DimensionMismatch('StructuralMask', pattern.shape, frozen.shape)
        object.__setattr__(self, 'pattern', pattern)
        object.__setattr__(self, 'frozen', frozen)

    @classmethod
    def fixed(cls, values) -> 'StructuralMask':
        values = np.asarray(values, dtype=np.float64)
        return cls(np.zeros(values.shape, dtype=bool), values)

    @classmethod
    def free(cls, pattern) -> 'StructuralMask':
        pattern = np.asarray(pattern, dtype=bool)
        return cls(pattern, np.zeros(pattern.shape))

    @property
    def shape(self):
        return self.pattern.shape

    @property
    def n_free(self) -> int:
        return int(np.count_nonzero(self.pattern))

    def apply(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.shape:
            raise DimensionMismatch('StructuralMask.apply', self.shape, values.shape)
        return np.where(self.pattern, values, self.frozen)


@dataclass(frozen=True)
class ParamMasks:
    m_j: StructuralMask
    l_r: StructuralMask
    l_e: StructuralMask
    g: StructuralMask

    def __post_init__(self):
        n = self.m_j.shape[0]
        for name in ('m_j', 'l_r', 'l_e'):
            if getattr(self, name).shape != (n, n):
                raise DimensionMismatch(f'mask {name}', (n, n), getattr(self, name).shape)
        if self.g.shape[0] != n:
            raise DimensionMismatch('mask g', f'{n} rows', self.g.shape[0])

    @property
    def n(self) -> int:
        return self.m_j.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[1]

    @property
    def n_theta(self) -> int:
        return sum(getattr(self, name).n_free for name in PARAM_FIELDS)

    def items(self):
        for name in PARAM_FIELDS:
            yield name, getattr(self, name)


@dataclass(frozen=True)
class PhDaeParams:
    """
    Raw factors of a pH-DAE: J = (M - M^T)/2, R = L_R L_R^T, E = L_E L_E^T, Q = I.

    Frozen entries are substituted from the masks on construction.
    """
    m_j: np.ndarray
    l_r: np.ndarray
    l_e: np.ndarray
    g: np.ndarray
    masks: ParamMasks

    def __post_init__(self):
        for name, mask in self.masks.items():
            object.__setattr__(self, name, mask.apply(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.masks.n

    @property
    def m(self) -> int:
        return self.masks.m

    @property
    def q(self) -> np.ndarray:
        return np.eye(self.n)

    @property
    def n_theta(self) -> int:
        return self.masks.n_theta

    def field(self, name) -> np.ndarray:
        return getattr(self, name)


@dataclass(frozen=True)
class PhDaeModel:
    e: np.ndarray
    j: np.ndarray
    r: np.ndarray
    q: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.e.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[1]

    @property
    def algebraic_rows(self) -> np.ndarray:
        return np.flatnonzero(np.all(self.e == 0.0, axis=1))

    @classmethod
    def from_matrices(cls, e, j, r, g, q=None) -> 'PhDaeModel':
        """
        Build a model from explicit matrices, checking the port-Hamiltonian structure.
        J is antisymmetrized; R and E must be symmetric positive semidefinite.
        """
        e = np.atleast_2d(np.asarray(e, dtype=np.float64))
        n = e.shape[0]
        j = np.atleast_2d(np.asarray(j, dtype=np.float64))
        r = np.atleast_2d(np.asarray(r, dtype=np.float64))
        g = np.asarray(g, dtype=np.float64).reshape(n, -1)
        q = np.eye(n) if q is None else np.atleast_2d(np.asarray(q, dtype=np.float64))
        for name, mat in (('E', e), ('J', j), ('R', r), ('Q', q)):
            if mat.shape != (n, n):
                raise DimensionMismatch(f'model matrix {name}', (n, n), mat.shape)

        _check_symmetric_psd('R', r)
        _check_symmetric_psd('E^T Q', e.T @ q)
        return cls(e=e, j=0.5 * (j - j.T), r=r, q=q, g=g)


def _check_symmetric_psd(name, a):
    if not np.allclose(a, a.T, rtol=0.0, atol=PSD_TOLERANCE):
        raise InvalidParameter(f"{name} must be symmetric.")
    if a.size and np.min(np.linalg.eigvalsh(0.5 * (a + a.T))) < -PSD_TOLERANCE:
        raise InvalidParameter(f"{name} must be positive semidefinite.")


def assemble(params: PhDaeParams) -> PhDaeModel:
    l_e = params.l_e
    l_r = params.l_r
    e = l_e @ l_e.T
    r = l_r @ l_r.T
    return PhDaeModel(
        e=0.5 * (e + e.T),
        j=0.5 * (params.m_j - params.m_j.T),
        r=0.5 * (r + r.T),
        q=params.q,
        g=params.g.copy(),
    )


def hamiltonian(model: PhDaeModel, x):
    """
    Stored energy 1/2 x^T Q^T E x. ``x`` may carry one state per column.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != model.n:
        raise DimensionMismatch('hamiltonian', f'state of length {model.n}', x.shape[0])
    qte = model.q.T @ model.e
    if x.ndim == 1:
        return 0.5 * float(x @ qte @ x)
    return 0.5 * np.einsum('ib,ij,jb->b', x, qte, x)


def output_matrix(model: PhDaeModel, selector=None) -> np.ndarray:
    """
    Rows G^T Q followed by the selector rows, if any.
    """
    c = model.g.T @ model.q
    if selector is None:
        return c
    selector = np.atleast_2d(np.asarray(selector, dtype=np.float64))
    if selector.shape[1] != model.n:
        raise DimensionMismatch('output selector', f'{model.n} columns', selector.shape[1])
    return np.vstack([c, selector])


def output(model: PhDaeModel, x, selector=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != model.n:
        raise DimensionMismatch('output', f'state of length {model.n}', x.shape[0])
    if selector is None:
        return model.g.T @ model.q @ x
    selector = np.atleast_2d(np.asarray(selector, dtype=np.float64))
    if selector.shape[1] != model.n:
        raise DimensionMismatch('output selector', f'{model.n} columns', selector.shape[1])
    return selector @ x


def power_balance(model: PhDaeModel, x, u) -> Tuple[float, float]:
    """
    Returns (supplied power y^T u, dissipated power x^T Q^T R Q x).
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u.shape[0] != model.m:
        raise DimensionMismatch('power_balance', f'input of length {model.m}', u.shape[0])
    y = output(model, x)
    qx = model.q @ x
    return float(y @ u), float(qx @ model.r @ qx)


def flatten(params: PhDaeParams) -> np.ndarray:
    parts = [params.field(name)[mask.pattern] for name, mask in params.masks.items()]
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten(theta, masks: ParamMasks) -> PhDaeParams:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != masks.n_theta:
        raise DimensionMismatch('unflatten', f'{masks.n_theta} free parameters', theta.shape[0])

    values = {}
    offset = 0
    for name, mask in masks.items():
        v = mask.frozen.copy()
        count = mask.n_free
        v[mask.pattern] = theta[offset:offset + count]
        offset += count
        values[name] = v
    return PhDaeParams(masks=masks, **values)


def gather_free(fields: Dict[str, np.ndarray], masks: ParamMasks) -> np.ndarray:
    """
    Stack the masked free entries of per-field matrices in the order used by ``flatten``.
    """
    return np.concatenate([np.asarray(fields[name])[mask.pattern] for name, mask in masks.items()])


def init_params(masks: ParamMasks, rng: np.random.Generator, diag_range=(0.1, 1.0), off_std=0.1) -> PhDaeParams:
    """
    Random free entries: diagonal entries of square factors uniform in ``diag_range``,
    everything else zero-mean normal with ``off_std``.
    """
    values = {}
    for name, mask in masks.items():
        v = mask.frozen.copy()
        diag = np.zeros(mask.shape, dtype=bool)
        if name != 'g':
            np.fill_diagonal(diag, True)
        low, high = diag_range
        draw_diag = rng.uniform(low, high, size=mask.shape)
        draw_off = rng.normal(0.0, off_std, size=mask.shape)
        v = np.where(mask.pattern & diag, draw_diag, v)
        v = np.where(mask.pattern & ~diag, draw_off, v)
        values[name] = v
    return PhDaeParams(masks=masks, **values)


def random_params(n: int, m: int, n_alg: int, rng: np.random.Generator) -> PhDaeParams:
    """
    A random valid parameter set whose last ``n_alg`` rows of L_E are frozen to zero,
    so E carries exactly ``n_alg`` algebraic rows.
    """
    if not 0 <= n_alg < n:
        raise InvalidParameter(f"n_alg must lie in [0, {n - 1}], got {n_alg}.")
    lower = np.tril(np.ones((n, n), dtype=bool))
    l_e_pattern = lower.copy()
    l_e_pattern[n - n_alg:, :] = False
    masks = ParamMasks(
        m_j=StructuralMask.free(np.ones((n, n), dtype=bool)),
        l_r=StructuralMask.free(lower),
        l_e=StructuralMask.free(l_e_pattern),
        g=StructuralMask.free(np.ones((n, m), dtype=bool)),
    )
    params = init_params(masks, rng)
    # input matrix at unit scale
    return replace(params, g=rng.normal(0.0, 1.0, size=(n, m)))


@dataclass
class ModelBundle:
    """
    Everything needed to rebuild a trained predictor: parameters, encoder and output selector.
    """
    params: PhDaeParams
    encoder: Optional[object] = None
    selector: Optional[np.ndarray] = None
    t_s: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def model(self) -> PhDaeModel:
        return assemble(self.params)


def _flat(a) -> list:
    return np.asarray(a, dtype=np.float64).ravel().tolist()


def save_model(path, bundle: ModelBundle):
    params = bundle.params
    model = bundle.model
    payload = {
        'format': MODEL_FORMAT,
        'version': MODEL_FORMAT_VERSION,
        'n': params.n,
        'm': params.m,
        'E': _flat(model.e),
        'J': _flat(model.j),
        'R': _flat(model.r),
        'Q': _flat(model.q),
        'G': _flat(model.g),
        'params': {
            name: {
                'shape': list(mask.shape),
                'values': _flat(params.field(name)),
                'pattern': mask.pattern.ravel().astype(int).tolist(),
                'frozen': _flat(mask.frozen),
            } for name, mask in params.masks.items()
        },
        'selector': None if bundle.selector is None else {
            'rows': int(np.atleast_2d(bundle.selector).shape[0]),
            'values': _flat(bundle.selector),
        },
        'encoder': None if bundle.encoder is None else bundle.encoder.to_dict(),
        't_s': bundle.t_s,
        'metadata': bundle.metadata,
    }
    dump_json(payload, path)
    console_logger.info(f'model written to {path}')


def load_model(path) -> ModelBundle:
    from phdae_cli.ident.encoder import LinearEncoder

    if not os.path.exists(path):
        raise ModelFileError(path, 'file not found')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFileError(path, str(e))

    if not isinstance(payload, dict) or payload.get('format') != MODEL_FORMAT:
        raise ModelFileError(path, f"not a '{MODEL_FORMAT}' document")
    if payload.get('version') != MODEL_FORMAT_VERSION:
        raise ModelFileError(path, f"unsupported version {payload.get('version')}")

    try:
        masks = {}
        values = {}
        for name in PARAM_FIELDS:
            entry = payload['params'][name]
            shape = tuple(entry['shape'])
            masks[name] = StructuralMask(
                np.asarray(entry['pattern'], dtype=bool).reshape(shape),
                np.asarray(entry['frozen'], dtype=np.float64).reshape(shape),
            )
            values[name] = np.asarray(entry['values'], dtype=np.float64).reshape(shape)
        params = PhDaeParams(masks=ParamMasks(**masks), **values)

        selector = None
        if payload.get('selector'):
            rows = payload['selector']['rows']
            selector = np.asarray(payload['selector']['values'], dtype=np.float64).reshape(rows, params.n)

        encoder = None
        if payload.get('encoder'):
            encoder = LinearEncoder.from_dict(payload['encoder'])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(path, f'malformed content ({e})')

    return ModelBundle(params=params, encoder=encoder, selector=selector, t_s=payload.get('t_s'),
                       metadata=payload.get('metadata') or {})
