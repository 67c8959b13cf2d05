import csv
import math
import os

import click
import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Column, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn

from phdae_cli.bench.dcnet import init_dc_params, output_selector
from phdae_cli.cli_utils import output_path
from phdae_cli.configuration import Configuration
from phdae_cli.error import DimensionMismatch
from phdae_cli.ident.encoder import LinearEncoder
from phdae_cli.ident.event import TrainEventHandler
from phdae_cli.ident.trainer import TrainState, train
from phdae_cli.model import ModelBundle, save_model
from phdae_cli.signals import read_csv

MODEL_FILE = 'model.json'
TRAIN_LOG_FILE = 'train_log.csv'


class RichTrainEventHandler(TrainEventHandler):

    def __init__(self, label: str = 'train', console: Console = None):
        text_column = TextColumn("{task.description}", table_column=Column(ratio=1))
        bar_column = BarColumn(bar_width=40, pulse_style=None)
        mofn_column = MofNCompleteColumn(table_column=Column(width=11, justify='right'))
        time_elapsed_column = TimeElapsedColumn()
        self.label = label
        self.progress = Progress(text_column, bar_column, mofn_column, time_elapsed_column,
                                 console=console or Console(stderr=True))
        self.task_id = None
        self.retries = 0

    def _description(self, loss=None, val=None):
        parts = [f'[bold]{self.label}[/bold]']
        if loss is not None:
            parts.append(f'loss {loss:.3e}')
        if val is not None:
            parts.append(f'val NRMS {val:.4f}')
        return '  '.join(parts)

    def handle_run_start(self, epochs, batches_per_epoch):
        self.progress.start()
        self.task_id = self.progress.add_task(self._description(), total=epochs)

    def handle_epoch_end(self, record, improved):
        self.progress.update(self.task_id, advance=1,
                             description=self._description(record.train_loss, record.val_nrms))

    def handle_retry(self, epoch, batch, lr, error):
        self.retries += 1
        self.progress.console.print(f'[yellow]epoch {epoch} batch {batch}[/yellow]: {error}; retrying with '
                                    f'lr={lr:.3e}')

    def handle_run_end(self, state):
        self.progress.stop()


def write_train_log(state: TrainState, path):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'train_loss', 'val_nrms', 'lr'])
        for record in state.history:
            writer.writerow([record.epoch + 1, record.train_loss, record.val_nrms, record.lr])


def resolve_data_paths(data_dir: str = None, train_path: str = None, val_path: str = None):
    data_dir = data_dir or '.'
    train_path = train_path or os.path.join(data_dir, 'train.csv')
    val_path = val_path or os.path.join(data_dir, 'val.csv')
    return train_path, val_path


class TrainModel:

    @staticmethod
    def exec(config: Configuration, train_path: str, val_path: str, out: str, console: Console = None):
        console = console or Console(stderr=True)
        dataset_train = read_csv(train_path)
        dataset_val = read_csv(val_path)

        selector = output_selector(config.outputs)
        expected = 1 + (0 if selector is None else selector.shape[0])
        if dataset_train.m_y != expected:
            raise DimensionMismatch('train', f"{expected} output columns for outputs '{config.outputs}'",
                                    dataset_train.m_y)

        train_config = config.train_config()
        low, high = config.init_range
        params = init_dc_params(np.random.default_rng(train_config.seed), config.free_topology, low, high,
                                config.free_entries, config.dcnet_params())
        n_lag = train_config.lag_for(params.n)
        encoder = LinearEncoder.zeros(params.n, n_lag, dataset_train.m_u, dataset_train.m_y)

        console.rule('Train')
        console.print(f'{len(dataset_train)} training samples, {params.n_theta} model parameters, '
                      f'{encoder.n_eta} encoder parameters, {train_config.epochs} epochs')
        handler = RichTrainEventHandler(console=console)
        state = train(dataset_train, dataset_val, params, encoder, train_config, selector=selector,
                      handler=handler, workers=config.workers)

        bundle = ModelBundle(
            params=state.best_params(),
            encoder=state.best_encoder(),
            selector=selector,
            t_s=dataset_train.t_s,
            metadata={
                'best_epoch': None if state.best_epoch is None else state.best_epoch + 1,
                'best_val_nrms': None if math.isinf(state.best_val_nrms) else state.best_val_nrms,
                'outputs': config.outputs,
                'config': config.manifest(),
            },
        )
        model_path = output_path(out, MODEL_FILE)
        save_model(model_path, bundle)
        log_path = output_path(out, TRAIN_LOG_FILE)
        write_train_log(state, log_path)

        if state.best_epoch is not None:
            console.print(f'best validation NRMS {state.best_val_nrms:.6f} at epoch {state.best_epoch + 1}')
        click.echo(model_path)
        click.echo(log_path)
        return state
