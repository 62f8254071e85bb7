import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from repeaterforge.engine import NetworkTopology, Node, Segment  # noqa: E402
from repeaterforge.hardware import HardwareParams, load_baseline  # noqa: E402
from repeaterforge.qstate import DensityMatrix  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


def chain(lengths=(5, 5, 5, 5), attenuation=0.2):
    """End - station - repeater - station - end, or a single link for two lengths."""
    if len(lengths) == 2:
        nodes = [Node("A", "end"), Node("H", "station"), Node("B", "end")]
        names = ["A", "H", "B"]
    else:
        nodes = [Node("A", "end"), Node("H1", "station"), Node("R", "repeater"), Node("H2", "station"), Node("B", "end")]
        names = ["A", "H1", "R", "H2", "B"]
    segs = [Segment(names[i], names[i + 1], L, attenuation) for i, L in enumerate(lengths)]
    return NetworkTopology(tuple(nodes), tuple(segs))


def random_density(rng, n_qubits=2, rank=None):
    d = 2**n_qubits
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def perfect(platform_or_baseline):
    """Baseline with every noise source switched off; durations are kept."""
    hw = load_baseline(platform_or_baseline)
    vals = {}
    for k, v in hw.values.items():
        if k.endswith(("fidelity", "_f0", "_f1")) or k in ("visibility", "p_det", "swap_quality"):
            vals[k] = 1.0
        elif k in ("p_dc", "p_dexc", "sigma_phase"):
            vals[k] = 0.0
        elif k.endswith(("T1", "T2")) or k in ("n_1e", "coherence_time"):
            vals[k] = math.inf
        else:
            vals[k] = v
    return HardwareParams(hw.platform, vals)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def topo20():
    return chain()


# ------------------------------------------------- acceptance summary lines

_CRITERIA: dict[int, tuple[list[str], str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    failed = report.failed
    if report.when == "call" or failed:
        texts, prev = _CRITERIA.get(number, ([], "PASS"))
        if text not in texts:
            texts = texts + [text]
        _CRITERIA[number] = (texts, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        texts, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}: {' | '.join(texts)}")
