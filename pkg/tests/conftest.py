import numpy as np
import pytest

from sparse_rrnn.model import RationalModel


def random_model(rng, ks, d_emb, scale=1.0):
    """Model with every parameter (biases and classifier included) random."""
    m = RationalModel.init(ks, d_emb, rng)
    for w in m.wfsas:
        w.params[:] = rng.normal(scale=scale, size=w.params.shape)
    m.classifier_weight[:] = rng.normal(size=m.d)
    m.classifier_bias[...] = rng.normal()
    return m


def random_weights(rng, n, k, signed=True):
    f = rng.uniform(0.05, 0.95, size=(n, k))
    u = rng.normal(size=(n, k)) if signed else rng.uniform(0.05, 2.0, size=(n, k))
    return f, u


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
