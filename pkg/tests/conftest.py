import numpy as np
import pytest

from calibench import kernels
from calibench.dataset import AnomalyWindowSet, SeriesFile


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    return kernels.backends()[request.param]


def make_file(values, labels=(), fmt="epoch", file_id="f", step=1):
    values = np.asarray(values, dtype=float)
    ts = np.arange(len(values), dtype=np.int64) * step
    return SeriesFile(file_id, ts, values, AnomalyWindowSet(tuple(labels)), fmt)


# acceptance criteria register here; one summary line each is printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, secs, note = ACCEPTANCE[n]
        tail = f" [{note}]" if note else ""
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title} ({secs:.2f}s){tail}")
