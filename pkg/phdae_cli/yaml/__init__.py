from typing import Any

from ruamel import yaml

_yaml = yaml.YAML(typ='safe', pure=True)

YAMLError = yaml.YAMLError


def safe_load(stream) -> Any:
    return _yaml.load(stream)
