
import numpy as np
import pytest

from curvgap.catalog import build_catalog_entry


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full default-grid runs (minutes)")


@pytest.fixture(scope="session")
def entry():
    """Catalog entries built once per session, keyed by selector."""
    cache = {}

    def get(selector):
        if selector not in cache:
            cache[selector] = build_catalog_entry(selector)
        return cache[selector]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)




def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
        details = getattr(mod, "DETAILS", {})
        if terminalreporter.verbosity > 0 and details:
            terminalreporter.section("acceptance details")
            for number in sorted(details):
                terminalreporter.write_line(f"criterion {number}")
                for note in details[number]:
                    terminalreporter.write_line(f"    {note}")
