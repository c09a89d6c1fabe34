import numpy as np
import pytest

from reswcae.autodiff import Tensor


def central_difference(f, arrays, h=1e-5):
    """Numerical gradient of scalar ``f(*arrays)`` w.r.t. every array (64-bit)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + h
            up = f(*arrays)
            a[idx] = old - h
            down = f(*arrays)
            a[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def check_gradients(build_loss, arrays, h=1e-5):
    """Compare autodiff against central differences; returns the max relative error.

    ``build_loss(*tensors)`` must return a scalar Tensor.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build_loss(*leaves).backward()
    numeric = central_difference(lambda *xs: build_loss(*[Tensor(x) for x in xs]).item(), arrays, h)
    return max(max_rel_error(leaf.grad, n) for leaf, n in zip(leaves, numeric))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance reporting ----------------------------------------------------------
# Tests tagged ``@pytest.mark.criterion(n, title)`` are folded into one
# PASS/FAIL/SKIP line per criterion at the end of the run. ``note(n, text)``
# attaches measured values to that line.

_CRITERIA = {}


def note(n, text):
    _CRITERIA.setdefault(n, {"title": "", "status": None, "notes": []})["notes"].append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _CRITERIA.setdefault(n, {"title": title, "status": None, "notes": []})
    entry["title"] = title
    if rep.failed:
        entry["status"] = "FAIL"
    elif rep.skipped and entry["status"] is None:
        entry["status"] = "SKIP"
    elif rep.when == "call" and rep.passed and entry["status"] in (None, "SKIP"):
        entry["status"] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        detail = f"  [{'; '.join(e['notes'])}]" if e["notes"] else ""
        terminalreporter.write_line(f"{e['status'] or 'NOT RUN':<4} criterion {n}: {e['title']}{detail}")
