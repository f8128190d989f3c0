"""Penalized synthetic controls with spillovers for clustered panel data."""

import json as _json

try:
    from ._pscg import *  # noqa: F401,F403  (installed package layout)
    from . import _pscg as _core
except ImportError:  # build-tree layout: _pscg sits next to the package dir
    from _pscg import *  # noqa: F401,F403
    import _pscg as _core

__version__ = _core.__version__


def run_pipeline(config):
    """Run the batch pipeline from a config dict or a JSON file path.

    Returns the list of emitted artifact paths.
    """
    if isinstance(config, str):
        with open(config) as fh:
            text = fh.read()
    else:
        text = _json.dumps(config)
    return _core.run_pipeline_json(text)
