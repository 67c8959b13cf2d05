import os

from phdae_cli import ensure_directory_writable
from phdae_cli.error import DatasetIoError


def prepare_output_dir(out: str) -> str:
    out = out or '.'
    if not ensure_directory_writable(out):
        raise DatasetIoError(out, 'the output directory is not writable')
    return out


def output_path(out: str, filename: str) -> str:
    return os.path.join(prepare_output_dir(out), filename)
