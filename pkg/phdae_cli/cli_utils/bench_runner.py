import click
from rich.console import Console
from rich.table import Table

from phdae_cli.bench.experiments import (ExperimentReport, run_noiseless, run_param_recovery, run_table1)
from phdae_cli.cli_utils import output_path
from phdae_cli.cli_utils.train_model import RichTrainEventHandler
from phdae_cli.configuration import Configuration
from phdae_cli.ident.event import DefaultTrainEventHandler

TABLE1_FILE = 'table1.csv'
RECOVERY_FILE = 'param_recovery.csv'
RECOVERY_SUMMARY_FILE = 'param_recovery_summary.csv'
NOISELESS_FILE = 'noiseless.csv'


def _handler_factory(workers: int, console: Console):
    # progress bars only make sense when runs are sequential
    if workers > 1:
        return lambda label: DefaultTrainEventHandler()
    return lambda label: RichTrainEventHandler(label, console=console)


class BenchRunner:

    @staticmethod
    def table1(config: Configuration, out: str, console: Console = None) -> ExperimentReport:
        console = console or Console(stderr=True)
        console.rule('Model accuracy under measurement noise')
        report = run_table1(config.dcnet_params(), config.data_spec(), config.train_config(),
                            config.bench_settings(), workers=config.workers,
                            handler_factory=_handler_factory(config.workers, console))

        table = Table('SNR [dB]', 'noise std', 'test NRMS')
        for r in report.records:
            table.add_row(f'{r.snr_db:g}', f'{r.noise_std:.3f}', f'{r.test_nrms:.3f}')
        console.print(table)

        path = output_path(out, TABLE1_FILE)
        report.write_table1(path)
        click.echo(path)
        return report

    @staticmethod
    def recovery(config: Configuration, out: str, console: Console = None) -> ExperimentReport:
        console = console or Console(stderr=True)
        settings = config.bench_settings()
        console.rule(f'Parameter recovery, {settings.runs} runs at {settings.recovery_snr_db:g} dB')
        report = run_param_recovery(config.dcnet_params(), config.data_spec(), config.train_config(), settings,
                                    workers=config.workers,
                                    handler_factory=_handler_factory(config.workers, console))

        table = Table('parameter', 'q1 [%]', 'median [%]', 'q3 [%]', 'max [%]')
        for name, s in report.summary().items():
            table.add_row(name, f"{s['q1']:.4f}", f"{s['median']:.4f}", f"{s['q3']:.4f}", f"{s['max']:.4f}")
        console.print(table)

        path = output_path(out, RECOVERY_FILE)
        report.write_param_recovery(path)
        summary_path = output_path(out, RECOVERY_SUMMARY_FILE)
        report.write_summary(summary_path)
        click.echo(path)
        click.echo(summary_path)
        return report

    @staticmethod
    def noiseless(config: Configuration, out: str, console: Console = None) -> ExperimentReport:
        console = console or Console(stderr=True)
        console.rule('Noiseless identification')
        report = run_noiseless(config.dcnet_params(), config.data_spec(), config.train_config(),
                               config.bench_settings(), workers=config.workers,
                               handler=RichTrainEventHandler('noiseless', console=console))
        record = report.records[0]
        console.print(f'test NRMS {record.test_nrms:.3e}')

        path = output_path(out, NOISELESS_FILE)
        report.write_table1(path)
        click.echo(f'nrms={record.test_nrms!r}')
        click.echo(path)
        return report
