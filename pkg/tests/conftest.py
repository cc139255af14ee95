import sys
from pathlib import Path

import pytest

# make tests/synth.py and tests/oracles.py importable as plain modules
sys.path.insert(0, str(Path(__file__).parent))

from liftseg._kernels import available_backends, load_backend  # noqa: E402


@pytest.fixture(params=available_backends())
def backend(request):
    """Each available kernel backend module."""
    return load_backend(request.param)
