import numpy as np
import pytest

from cqrkit import data, net

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def synthetic_task():
    return data.SyntheticTask()


@pytest.fixture(scope="session")
def trained(synthetic_task):
    """Network trained on 20,000 synthetic rows with the default hyperparameters."""
    ds = synthetic_task.sample(20_000, seed=0)
    scaler = data.fit_scaler(ds)
    scaled = data.apply_scaler(scaler, ds)
    network = net.train(scaled.features, scaled.targets, config=net.NetConfig(seed=0))
    return network, scaler


@pytest.fixture
def acceptance_report():
    def record(criterion, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_network(rng, input_dim=3, hidden=8):
    config = net.NetConfig(hidden_units=hidden, seed=int(rng.integers(1 << 31)))
    network = net.init_network(input_dim, net.QuantileGrid(), config)
    network.b1 = rng.normal(0, 0.5, hidden)
    network.b2 = np.sort(rng.normal(0, 0.5, 101))
    return network
