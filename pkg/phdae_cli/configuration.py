import copy
import math
import os
from typing import Optional

import jsonschema
from deepmerge import Merger
from jsonschema.exceptions import ValidationError

from phdae_cli import create_logger, load_jinja_template, load_json
from phdae_cli import yaml as pyml
from phdae_cli.bench.dcnet import DcNetParams, dc_masks
from phdae_cli.bench.experiments import PROTOCOL, BenchSettings
from phdae_cli.error import PhDaeConfigError, PhDaeConfigTypeError, PhDaeError
from phdae_cli.ident.trainer import TrainConfig
from phdae_cli.signals import NOISELESS, DataSpec
from phdae_cli.solver import SolverConfig

console_logger = create_logger(__name__)

PHDAE_CONFIG_SCHEMA_PATH = os.path.join(os.path.dirname(__file__), 'config_schema.json')

DEFAULT_CONFIG = {
    'system': {
        'L': 2.0,
        'C1': 0.01,
        'C2': 0.02,
        'R_L': 1.0,
        'R_G': 6.0,
        'R_R': 3.0,
        'outputs': 'port',
        'free_topology': False,
    },
    'data': {
        'samples': 10000,
        't_s': 0.005,
        'f0': 0.1,
        'n_sines': 40,
        'snr_db': 20.0,
        'ic_range': 0.5,
        'oversample': 1,
        'seeds': {'train': 1, 'val': 2, 'test': 3},
    },
    'train': {
        'truncation_length': PROTOCOL.truncation_length,
        'n_lag': None,
        'batch_size': PROTOCOL.batch_size,
        'lr_start': PROTOCOL.lr_start,
        'lr_end': PROTOCOL.lr_end,
        'epochs': PROTOCOL.epochs,
        'seed': 0,
        'log_diagonal': True,
        'init_range': [0.5, 1.5],
    },
    'solver': {
        'epsilon': 1e-10,
        'max_newton_iters': 20,
    },
    'bench': {
        'snr_levels': [30.0, 20.0, 10.0],
        'runs': 10,
        'recovery_snr_db': 40.0,
        'epochs': None,
        'noiseless': {
            'outputs': 'recovery',
            'batch_size': 32,
            'n_lag': 10,
        },
    },
    # free entries per factor, replacing the default pattern of the named factors
    'masks': {},
    'workers': None,
}

# lists replace the defaults instead of extending them
config_merger = Merger(
    [(list, ['override']), (dict, ['merge']), (set, ['override'])],
    ['override'],
    ['override'],
)


def _plain(data):
    # ruamel containers to builtin dicts and lists
    if isinstance(data, dict):
        return {str(k): _plain(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [_plain(v) for v in data]
    return data


def load_config_document(path: str) -> dict:
    """
    Render the file as a jinja template, parse it as YAML and validate it against the schema.
    """
    if path is None or not os.path.isfile(path):
        raise PhDaeConfigError(path, 'file not found')
    try:
        content = load_jinja_template(path).render()
        document = pyml.safe_load(content)
    except pyml.YAMLError as e:
        raise PhDaeConfigError(path, str(e))
    except Exception as e:
        raise PhDaeConfigError(path, str(e))

    if document is None:
        document = {}
    document = _plain(document)
    if not isinstance(document, dict):
        raise PhDaeConfigTypeError(f"Configuration '{path}' must be a mapping at the top level.")
    if 'generator' in document and isinstance(document.get('config'), dict):
        # a data manifest written by `phdae generate`
        document = document['config']

    schema = load_json(PHDAE_CONFIG_SCHEMA_PATH)
    try:
        jsonschema.validate(instance=document, schema=schema)
    except ValidationError as e:
        where = '.'.join(str(p) for p in e.absolute_path) or '<root>'
        raise PhDaeConfigTypeError(f"Invalid configuration at '{where}': {e.message}")
    return document


class Configuration(object):
    """
    Experiment settings: the DC network, data generation, training, solver and benchmark sections,
    merged over the built-in defaults.
    """

    def __init__(self, document: dict = None, path: str = None):
        merged = copy.deepcopy(DEFAULT_CONFIG)
        config_merger.merge(merged, copy.deepcopy(document or {}))
        self.path = path
        self.raw = merged
        self.system = merged['system']
        self.data = merged['data']
        self.train = merged['train']
        self.solver = merged['solver']
        self.bench = merged['bench']
        self.masks = merged['masks']
        self.workers = merged['workers'] or os.cpu_count() or 1
        self._verify()

    def _verify(self):
        if self.train['lr_start'] < self.train['lr_end']:
            raise PhDaeConfigTypeError("'train.lr_start' must not be smaller than 'train.lr_end'")
        low, high = self.train['init_range']
        if low > high:
            raise PhDaeConfigTypeError("'train.init_range' must be [low, high] with low <= high")
        try:
            dc_masks(self.free_topology, self.free_entries)
        except PhDaeError as e:
            raise PhDaeConfigTypeError(f"Invalid 'masks' section: {e.message}")

    @classmethod
    def load(cls, path: Optional[str] = None, seed: Optional[int] = None, workers: Optional[int] = None):
        document = load_config_document(path) if path else {}
        config = cls(document, path)
        if seed is not None:
            config.apply_seed(seed)
        if workers is not None:
            config.workers = workers
        console_logger.debug(f'configuration loaded from {path or "<defaults>"}')
        return config

    def apply_seed(self, seed: int):
        """
        Derive every seed from one base value: data sets at seed+1.. seed+3, training at seed.
        """
        self.train['seed'] = seed
        self.data['seeds'] = {'train': seed + 1, 'val': seed + 2, 'test': seed + 3}

    def dcnet_params(self) -> DcNetParams:
        try:
            return DcNetParams(**{k: float(self.system[k]) for k in ('L', 'C1', 'C2', 'R_L', 'R_G', 'R_R')})
        except PhDaeError as e:
            raise PhDaeConfigTypeError(e.message)

    @property
    def outputs(self) -> str:
        return self.system['outputs']

    @property
    def free_topology(self) -> bool:
        return bool(self.system['free_topology'])

    @property
    def free_entries(self) -> Optional[dict]:
        return {name: entries for name, entries in self.masks.items() if entries is not None} or None

    @property
    def init_range(self):
        low, high = self.train['init_range']
        return float(low), float(high)

    def data_spec(self) -> DataSpec:
        snr = self.data['snr_db']
        return DataSpec(
            samples=int(self.data['samples']),
            t_s=float(self.data['t_s']),
            f0=float(self.data['f0']),
            n_sines=int(self.data['n_sines']),
            snr_db=NOISELESS if snr is None else float(snr),
            seeds=dict(self.data['seeds']),
            ic_range=float(self.data['ic_range']),
            oversample=int(self.data['oversample']),
        )

    def solver_config(self, h: float = None) -> SolverConfig:
        return SolverConfig(h=h if h is not None else float(self.data['t_s']),
                            epsilon=float(self.solver['epsilon']),
                            max_newton_iters=int(self.solver['max_newton_iters']))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            truncation_length=int(self.train['truncation_length']),
            n_lag=self.train['n_lag'],
            batch_size=int(self.train['batch_size']),
            lr_start=float(self.train['lr_start']),
            lr_end=float(self.train['lr_end']),
            epochs=int(self.train['epochs']),
            seed=int(self.train['seed']),
            log_diagonal=bool(self.train['log_diagonal']),
            solver=self.solver_config(),
        )

    def bench_settings(self) -> BenchSettings:
        noiseless = self.bench['noiseless']
        return BenchSettings(
            snr_levels=tuple(float(s) for s in self.bench['snr_levels']),
            runs=int(self.bench['runs']),
            recovery_snr_db=float(self.bench['recovery_snr_db']),
            epochs=self.bench['epochs'],
            free_topology=self.free_topology,
            init_range=self.init_range,
            free_entries=self.free_entries,
            noiseless_outputs=noiseless['outputs'],
            noiseless_batch_size=noiseless['batch_size'],
            noiseless_n_lag=noiseless['n_lag'],
        )

    def manifest(self) -> dict:
        """
        The merged settings, enough to regenerate the same data.
        """
        raw = copy.deepcopy(self.raw)
        raw.pop('workers', None)
        snr = raw['data']['snr_db']
        if isinstance(snr, float) and math.isinf(snr):
            raw['data']['snr_db'] = None
        return raw
