import pytest

from czwave.grid import AffineGrid, Grid

_CRITERIA = {}


@pytest.fixture(scope="session")
def phi():
    from czwave.wavelet import make_mother_wavelet
    return make_mother_wavelet(1)


@pytest.fixture(scope="session")
def highlow(phi):
    from czwave.transform import highlow_decompose
    return highlow_decompose(phi, 1)


@pytest.fixture(scope="session")
def sparse_setup():
    """Grid, affine grid and shared intrinsic dictionaries for sparse runs."""
    from czwave.forms import IntrinsicDictionaries
    grid = Grid(1, 8.0, 1024)
    ag = AffineGrid.from_range(grid, t_min=4 * grid.h, t_max=4.0, M=16)
    return grid, ag, IntrinsicDictionaries(grid, size=12)


@pytest.fixture(scope="session")
def form_setup():
    """Small grid for intrinsic-form tests that run naive loops."""
    from czwave.forms import IntrinsicDictionaries
    grid = Grid(1, 8.0, 256)
    ag = AffineGrid.from_range(grid, t_min=0.125, t_max=2.0, M=8)
    return grid, ag, IntrinsicDictionaries(grid, size=12)


@pytest.fixture
def criterion():
    def record(number: int, title: str, ok: bool, detail: str):
        _CRITERIA[number] = (title, bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:>2} ({title}): {detail}")
