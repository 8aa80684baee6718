import numpy as np
import pytest

from erpbvi.model import TabularPomdp


def random_pomdp(rng, n_states=3, n_actions=2, n_obs=2, discount=0.9, sparse=False):
    T = rng.random((n_states, n_actions, n_states))
    Z = rng.random((n_actions, n_states, n_obs))
    if sparse:
        T[T < 0.3] = 0.0
        Z[Z < 0.3] = 0.0
        # keep every row stochastic
        T[..., 0] += T.sum(axis=-1) == 0
        Z[..., 0] += Z.sum(axis=-1) == 0
    T /= T.sum(axis=-1, keepdims=True)
    Z /= Z.sum(axis=-1, keepdims=True)
    R = rng.normal(size=(n_states, n_actions))
    return TabularPomdp(T, Z, R, discount)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; returns ``ok`` so tests can ``assert verdict(...)``."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _VERDICTS[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
