import csv

import click
import numpy as np
from rich.console import Console

from phdae_cli.cli_utils import output_path
from phdae_cli.configuration import Configuration
from phdae_cli.error import ModelFileError
from phdae_cli.ident.trainer import nrms, predict
from phdae_cli.model import load_model, output
from phdae_cli.signals import Dataset, read_csv
from phdae_cli.solver import SolverConfig, consistent_initialize, simulate

TRAJECTORY_FILE = 'trajectory.csv'
SIMULATION_FILE = 'simulation.csv'


def trajectory_header(m_y: int):
    if m_y == 1:
        return ['t', 'y_measured', 'y_simulated', 'error']
    return (['t'] + [f'y_measured{i + 1}' for i in range(m_y)] + [f'y_simulated{i + 1}' for i in range(m_y)]
            + [f'error{i + 1}' for i in range(m_y)])


def write_trajectory(dataset: Dataset, start: int, y_hat: np.ndarray, path):
    measured = dataset.outputs[start:]
    table = np.hstack([dataset.times[start:, None], measured, y_hat, measured - y_hat])
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(trajectory_header(dataset.m_y))
        writer.writerows(table.tolist())


class EvaluateModel:

    @staticmethod
    def exec(model_path: str, dataset_path: str, out: str, console: Console = None) -> float:
        console = console or Console(stderr=True)
        bundle = load_model(model_path)
        if bundle.encoder is None:
            raise ModelFileError(model_path, 'the model carries no encoder')
        dataset = read_csv(dataset_path)

        y_hat = predict(bundle.model, bundle.encoder, dataset, bundle.selector)
        value = nrms(dataset.outputs[bundle.encoder.n_lag:], y_hat)

        path = output_path(out, TRAJECTORY_FILE)
        write_trajectory(dataset, bundle.encoder.n_lag, y_hat, path)
        console.print(f'trajectory written to {path}')
        click.echo(f'nrms={value!r}')
        return value


class SimulateModel:

    @staticmethod
    def exec(model_path: str, dataset_path: str, out: str, config: Configuration = None,
             console: Console = None):
        """
        Backward Euler with Newton iterations over the inputs of a dataset, starting from rest.
        The step size is the sampling period of the dataset; tolerance and iteration cap come from
        ``config`` when given.
        """
        console = console or Console(stderr=True)
        bundle = load_model(model_path)
        dataset = read_csv(dataset_path)
        model = bundle.model
        solver = config.solver_config(h=dataset.t_s) if config is not None else SolverConfig(h=dataset.t_s)

        x0 = consistent_initialize(model, np.zeros(model.n), dataset.inputs[0])
        trajectory = simulate(model, x0, dataset.inputs, solver)
        outputs = output(model, trajectory.states.T).T

        path = output_path(out, SIMULATION_FILE)
        header = (['t'] + [f'x{i + 1}' for i in range(model.n)] + [f'y{i + 1}' for i in range(model.m)])
        table = np.hstack([dataset.times[:, None], trajectory.states, outputs])
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(table.tolist())

        iterations = trajectory.newton_iterations[1:]
        if iterations.size:
            console.print(f'{len(trajectory)} samples, Newton iterations per step: '
                          f'min {iterations.min()}, max {iterations.max()}')
        click.echo(path)
        return trajectory
