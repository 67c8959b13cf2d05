import json
import logging
import os
import sys

_LOG_LEVELS = {'DEBUG': logging.DEBUG, 'INFO': logging.INFO}


def create_logger(name) -> logging.Logger:
    log = logging.getLogger(name)
    log.setLevel(_LOG_LEVELS.get(os.environ.get('PHDAE_LOG_LEVEL', '').upper(), logging.WARNING))
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        log.addHandler(handler)
    return log


def set_log_level(verbosity: int):
    """
    raise the level of every package logger, used by the `-v` flag
    """
    if verbosity <= 0:
        return
    level = logging.INFO if verbosity == 1 else logging.DEBUG
    for name in list(logging.root.manager.loggerDict.keys()):
        if name == __name__ or name.startswith(f'{__name__}.'):
            logging.getLogger(name).setLevel(level)


def get_version():
    with open(os.path.join(os.path.dirname(__file__), 'VERSION')) as fh:
        return fh.read().strip()


__version__ = get_version()


def ensure_directory_writable(directory) -> bool:
    path = os.path.abspath(directory)
    if os.path.isdir(path):
        return os.access(path, os.W_OK)
    if os.path.exists(path):
        return False
    try:
        os.makedirs(path)
    except OSError:
        return False
    return True


def load_json(file_path):
    with open(file_path, 'r') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            print(f'{file_path}: {e}', file=sys.stderr)
            return None


def dump_json(payload, file_path):
    # sorted keys and a trailing newline keep reruns byte-identical
    with open(file_path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(payload, indent=2, sort_keys=True))
        f.write('\n')


def _as_number(value):
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        return int(value) if value.isnumeric() else float(value)
    return value


def _as_bool(value):
    if value is None or isinstance(value, bool):
        return value
    return str(value).lower() in ('true', 'yes', '1')


def _as_text(value):
    return None if value is None else str(value)


def load_jinja_template(path: str):
    """
    A jinja template for a config file, with `env_var(name, default)` and the `as_number`,
    `as_bool`, `as_text` filters. Undefined values render as an empty string.
    """
    from jinja2 import Environment, FileSystemLoader

    env = Environment(loader=FileSystemLoader(searchpath=os.path.dirname(os.path.abspath(path))),
                      finalize=lambda value: '' if value is None else value)
    env.globals['env_var'] = lambda name, default=None: None if name is None else os.getenv(name, default)
    env.filters.update(as_number=_as_number, as_bool=_as_bool, as_text=_as_text)
    return env.get_template(os.path.basename(path))
