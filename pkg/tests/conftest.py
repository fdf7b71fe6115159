import numpy as np
import pytest

from sriodom.kernels import available_backends


@pytest.fixture(params=[b.BACKEND for b in available_backends()])
def backend(request):
    """Each importable kernel backend (python always, native when built)."""
    for mod in available_backends():
        if mod.BACKEND == request.param:
            return mod
    raise RuntimeError(f"backend {request.param} vanished")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
