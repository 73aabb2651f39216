import numpy as np
import pytest

_CRITERIA = {}


def random_state(rng, dims):
    from qmcsim import PureState

    D = int(np.prod(dims))
    return PureState.normalized(rng.standard_normal(D) + 1j * rng.standard_normal(D), dims)


def random_hermitian(rng, D):
    A = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    return (A + A.conj().T) / 2


def random_unitary(rng, D):
    A = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    q, r = np.linalg.qr(A)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        _CRITERIA[marker] = "PASS" if report.passed else "FAIL"


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            number, title = mark.args
            item.user_properties.append(("criterion", f"{number:>2}. {title}"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    def order(key):
        label = key.split(".")[0].strip()
        digits = label.rstrip("abcdefghijklmnopqrstuvwxyz")
        return int(digits), label[len(digits):]

    for key in sorted(_CRITERIA, key=order):
        terminalreporter.write_line(f"[{_CRITERIA[key]}] criterion {key}")
