import hashlib
import json
import math

import click
from rich.console import Console

from phdae_cli import __version__, dump_json
from phdae_cli.bench.dcnet import generate_datasets
from phdae_cli.cli_utils import output_path
from phdae_cli.configuration import Configuration
from phdae_cli.signals import write_csv

MANIFEST_FILE = 'manifest.json'


def config_digest(manifest: dict) -> str:
    encoded = json.dumps(manifest, sort_keys=True).encode('utf-8')
    return hashlib.sha256(encoded).hexdigest()


class GenerateData:

    @staticmethod
    def exec(config: Configuration, out: str, console: Console = None):
        console = console or Console(stderr=True)
        spec = config.data_spec()
        console.rule('Generate datasets')
        console.print(f'DC network {config.dcnet_params().as_dict()}, outputs: {config.outputs}')

        datasets = generate_datasets(config.dcnet_params(), spec, config.outputs)

        manifest = {
            'generator': f'phdae {__version__}',
            'config': config.manifest(),
            'config_sha256': config_digest(config.manifest()),
            'sets': {},
        }
        for name, dataset in datasets.items():
            path = output_path(out, f'{name}.csv')
            write_csv(dataset, path)
            manifest['sets'][name] = {
                'file': f'{name}.csv',
                'seed': dataset.seed,
                'samples': len(dataset),
                't_s': dataset.t_s,
                'snr_db': None if math.isinf(dataset.snr_db) else dataset.snr_db,
                'noise_std': [float(s) for s in dataset.noise_std],
                'phases': dataset.meta['phases'],
                'x0': dataset.meta['x0'],
            }
            console.print(f'  {name}: {len(dataset)} samples, noise std {manifest["sets"][name]["noise_std"]}')
            click.echo(path)

        manifest_path = output_path(out, MANIFEST_FILE)
        dump_json(manifest, manifest_path)
        click.echo(manifest_path)
        return datasets
