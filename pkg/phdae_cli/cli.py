import click
from rich.console import Console

from phdae_cli import __version__, set_log_level
from phdae_cli.cli_utils.command import PhDaeCommand
from phdae_cli.guide import Guide

debug_option = [
    click.option('--debug', is_flag=True, help='Print the full exception with local variables on failure.')
]

verbose_option = [
    click.option('-v', '--verbose', count=True, help='Log progress to stderr, repeat for debug output.')
]

config_options = [
    click.option('--config', '-c', default=None, type=click.STRING, metavar='PATH',
                 help='Experiment configuration (YAML, or a manifest.json written by generate).'),
    click.option('--seed', default=None, type=click.IntRange(min=0),
                 help='Base seed; overrides every seed in the configuration.'),
    click.option('--workers', default=None, type=click.IntRange(min=1),
                 help='Worker threads for batches and runs. Defaults to the number of CPUs.'),
]

out_option = [
    click.option('--out', '-o', default='.', type=click.STRING, metavar='DIR', help='Directory for the output files.')
]


def add_options(options):
    def _add_options(func):
        for option in reversed(options):
            func = option(func)
        return func

    return _add_options


def _load_config(**kwargs):
    from phdae_cli.configuration import Configuration
    set_log_level(kwargs.get('verbose') or 0)
    return Configuration.load(kwargs.get('config'), seed=kwargs.get('seed'), workers=kwargs.get('workers'))


@click.group(name='phdae', invoke_without_command=True)
@click.pass_context
def cli(ctx: click.Context):
    'Identification of linear port-Hamiltonian descriptor models from input/output data'
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        Guide().show_tips(ctx.command.name)


cli.command_class = PhDaeCommand


@cli.command(short_help='Show version information.', cls=PhDaeCommand)
def version():
    'Show version information.'
    Console().print(__version__)


@cli.command(short_help='Generate the train, validation and test datasets.', cls=PhDaeCommand)
@add_options(config_options)
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def generate(**kwargs):
    """
    Simulate the DC network under random multisine excitation and write train.csv, val.csv, test.csv
    and a manifest.json that regenerates them.
    """
    from phdae_cli.cli_utils.generate_data import GenerateData
    config = _load_config(**kwargs)
    GenerateData.exec(config, kwargs.get('out'))


@cli.command(short_help='Identify a model from the training data.', cls=PhDaeCommand)
@click.option('--data', default=None, type=click.STRING, metavar='DIR',
              help='Directory holding train.csv and val.csv.')
@click.option('--train', 'train_path', default=None, type=click.STRING, metavar='PATH', help='Training dataset.')
@click.option('--val', 'val_path', default=None, type=click.STRING, metavar='PATH', help='Validation dataset.')
@add_options(config_options)
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def train(**kwargs):
    """
    Fit the model and encoder parameters with truncated-horizon output-error training. Writes the
    best-validation model to model.json and the per-epoch log to train_log.csv.
    """
    from phdae_cli.cli_utils.train_model import TrainModel, resolve_data_paths
    config = _load_config(**kwargs)
    train_path, val_path = resolve_data_paths(kwargs.get('data'), kwargs.get('train_path'), kwargs.get('val_path'))
    TrainModel.exec(config, train_path, val_path, kwargs.get('out'))


@cli.command(name='eval', short_help='Evaluate a model on a dataset.', cls=PhDaeCommand)
@click.option('--model', 'model_path', required=True, type=click.STRING, metavar='PATH', help='Model file.')
@click.option('--dataset', 'dataset_path', required=True, type=click.STRING, metavar='PATH',
              help='Dataset to evaluate on.')
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def evaluate(**kwargs):
    """
    Simulate the model from its encoder estimate, print `nrms=<value>` and write trajectory.csv.
    """
    from phdae_cli.cli_utils.evaluate_model import EvaluateModel
    set_log_level(kwargs.get('verbose') or 0)
    EvaluateModel.exec(kwargs.get('model_path'), kwargs.get('dataset_path'), kwargs.get('out'))


@cli.command(short_help='Simulate a model with the Newton solver.', cls=PhDaeCommand)
@click.option('--model', 'model_path', required=True, type=click.STRING, metavar='PATH', help='Model file.')
@click.option('--dataset', 'dataset_path', required=True, type=click.STRING, metavar='PATH',
              help='Dataset providing the input signal and the sampling period.')
@add_options(config_options)
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def simulate(**kwargs):
    """
    Run the backward Euler solver from a consistent state at rest and write simulation.csv.
    """
    from phdae_cli.cli_utils.evaluate_model import SimulateModel
    config = _load_config(**kwargs)
    SimulateModel.exec(kwargs.get('model_path'), kwargs.get('dataset_path'), kwargs.get('out'), config=config)


@cli.group(short_help='Reproduce the DC network benchmarks.')
def bench():
    'Reproduce the DC network benchmarks.'
    pass


bench.command_class = PhDaeCommand


@bench.command(short_help='Test NRMS at each measurement noise level.', cls=PhDaeCommand)
@add_options(config_options)
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def table1(**kwargs):
    """
    Generate data, train and evaluate once per SNR level of bench.snr_levels. Writes table1.csv.
    """
    from phdae_cli.cli_utils.bench_runner import BenchRunner
    config = _load_config(**kwargs)
    BenchRunner.table1(config, kwargs.get('out'))


@bench.command(short_help='Physical parameter recovery over repeated runs.', cls=PhDaeCommand)
@add_options(config_options)
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def recovery(**kwargs):
    """
    Train bench.runs models on (I_G, V1, V2) data and report the deviation of each estimated
    network parameter. Writes param_recovery.csv and param_recovery_summary.csv.
    """
    from phdae_cli.cli_utils.bench_runner import BenchRunner
    config = _load_config(**kwargs)
    BenchRunner.recovery(config, kwargs.get('out'))


@bench.command(short_help='Identification from noiseless data.', cls=PhDaeCommand)
@add_options(config_options)
@add_options(out_option)
@add_options(verbose_option)
@add_options(debug_option)
def noiseless(**kwargs):
    """
    Train on noiseless data and print the test NRMS. Writes noiseless.csv.
    """
    from phdae_cli.cli_utils.bench_runner import BenchRunner
    config = _load_config(**kwargs)
    BenchRunner.noiseless(config, kwargs.get('out'))
