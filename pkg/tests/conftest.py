import numpy as np
import pytest

from maskopt import ObjectiveContext, generate_synthetic_layer, gram_precompute

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_acceptance():
    """Collect one pass/fail line per acceptance criterion for the summary."""

    def record(name: str, ok: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_ctx(d_out, d_in, B, seed, outlier_cols=0, outlier_scale=1.0):
    W, X = generate_synthetic_layer(d_out, d_in, B, seed, outlier_cols, outlier_scale)
    return ObjectiveContext(W, gram_precompute(X, W)), W, X
