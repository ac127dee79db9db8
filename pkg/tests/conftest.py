import pytest

from dnsfp import _accel
from dnsfp.synth import generate_dataset, generate_profiles
from dnsfp.trace import C2R, R2C, DnsEvent, Protocol, Trace

# filled by test_acceptance.py, printed at the end of every run
ACCEPTANCE_RESULTS: dict[str, tuple[bool | None, str]] = {}  # None marks a skip


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}")


def make_trace(sizes_times, trace_id="t0", label="app", resolver="r", protocol=Protocol.DOT):
    """Build a trace from (signed_size, t_ms) pairs."""
    events = tuple(DnsEvent(t, C2R if s < 0 else R2C, abs(s)) for s, t in sizes_times)
    return Trace(trace_id, label, resolver, protocol, "2024-01-01T00:00:00Z", events)


@pytest.fixture
def trace_factory():
    return make_trace


@pytest.fixture(scope="session")
def small_ds():
    """6 separable apps x 10 traces."""
    return generate_dataset(generate_profiles(6, seed=3), 10, seed=4)


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "HAVE_NUMBA", request.param == "numba")
    return request.param
