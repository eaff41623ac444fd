import numpy as np
import pytest

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion of the build")


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for name, args in getattr(report, "acceptance", []):
        _ACCEPTANCE.append((args, report.outcome, report.duration))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        rep.acceptance = [("acceptance", marker.args)]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome, duration in sorted(_ACCEPTANCE):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({duration:.1f}s)")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_probs(rng, n, k, scale=2.0):
    z = rng.normal(scale=scale, size=(n, k))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sample_labels(rng, probs):
    """Draw one label per row from the row's categorical distribution."""
    cum = np.cumsum(probs, axis=1)
    draws = (rng.random(len(probs))[:, None] > cum).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)
