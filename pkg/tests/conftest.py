import pytest

from losplan.synthetic import write_flat_tile, write_tile

ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "tests": 0})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        e = ACCEPTANCE[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {e['title']} ({e['tests']} checks)")


@pytest.fixture(scope="session")
def flat_dem(tmp_path_factory):
    d = tmp_path_factory.mktemp("flat_dem")
    write_flat_tile(str(d), "N00E000", 0)
    return str(d)


@pytest.fixture
def tile_dir(tmp_path):
    def make(key, grid):
        write_tile(str(tmp_path), key, grid)
        return str(tmp_path)

    return make
