"""Python bindings for the dsg hashing library."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import run_pipeline_json as _run_pipeline_json


def run_pipeline(config):
    """Run the full pipeline from a config dict; returns the evaluation report."""
    return _json.loads(_run_pipeline_json(_json.dumps(
        {k: str(v) if hasattr(v, "__fspath__") else v for k, v in config.items()})))
