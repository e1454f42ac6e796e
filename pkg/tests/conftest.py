import pytest

from symba.core import Configuration
from symba.fsrp import Processor, make_broadcast, make_policy, make_protocol


def make_config(
    n,
    t,
    inputs,
    faulty=(),
    protocol="benor-style",
    policy="per-round",
    broadcast="plain",
    round_cap=None,
    record=False,
):
    """Processors ``1..n`` with per-processor input bits."""
    pf = make_protocol(protocol, n, t)
    pol = make_policy(policy, pf, n, t)
    bc = make_broadcast(broadcast)
    procs = {
        p: Processor(p, n, t, pf, pol, bc, inputs[p - 1], p in faulty, round_cap, record)
        for p in range(1, n + 1)
    }
    return Configuration(procs, round_cap=round_cap)


@pytest.fixture
def config_factory():
    return make_config


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
