import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def disk_spectra_120():
    """Chiral bag spectra of the unit disk at angles 0, 0.4, 0.8 cut at 120, with build time."""
    import time

    from chiralbag.suites import DEFAULT_THETAS, disk_spectra
    t0 = time.perf_counter()
    spectra = disk_spectra(DEFAULT_THETAS, 120.0)
    return DEFAULT_THETAS, spectra, time.perf_counter() - t0


@pytest.fixture
def record_criterion():
    def record(number: int, ok: bool, detail: str, seconds: float):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.2f} s)"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
