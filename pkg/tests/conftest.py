import pytest

import stodyn.backend as backend


@pytest.fixture
def force_backend(monkeypatch):
    """Pin the kernel backend for one test; restored automatically."""

    def _force(name):
        monkeypatch.setattr(backend, "_FORCED", name)

    return _force
