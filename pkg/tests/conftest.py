import pytest

from hbvsde import HbvConfig, ModelParams, NoiseParams, StateVec

_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def record_acceptance(number: int, name: str, ok: bool, detail: str = ""):
    _ACCEPTANCE.append((number, name, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_ACCEPTANCE):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def default_model():
    return ModelParams(), NoiseParams()


@pytest.fixture
def slow_decay():
    """A regime where y, z die out slowly (rate about 0.5) and condition (a) holds."""
    mp = ModelParams(lam=10.0, mu1=1.0, mu2=0.5, mu3=1.0, beta=0.01, eta=0.0, epsilon=0.0, p=0.4, q=0.1)
    return HbvConfig(mp, NoiseParams(0.2, 0.2, 0.2), StateVec(10.0, 5.0, 5.0))
