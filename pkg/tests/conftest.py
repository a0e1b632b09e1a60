import hashlib
import json
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from thermcorr import cavity  # noqa: E402

DEFAULT_TABLE = {"N_list": [30, 60], "samples": 2000, "seed": 0, "lo": 1e-3, "hi": 1e4,
                 "per_decade": 6}


@pytest.fixture(scope="session")
def default_table(request):
    """The default moment table (N = 30, 60; 2000 samples; 43 points over [1e-3, 1e4]).

    It takes a few minutes to build, so it is kept in the pytest cache keyed
    by its configuration; the build is deterministic, so a cached copy is
    identical to a fresh one.
    """
    key = hashlib.sha1(json.dumps(DEFAULT_TABLE, sort_keys=True).encode()).hexdigest()[:12]
    path = os.path.join(str(request.config.cache.mkdir("thermcorr")), f"table_{key}.csv")
    if os.path.exists(path):
        return cavity.MomentTable.from_csv(path)
    c = DEFAULT_TABLE
    table = cavity.build_moment_table(
        c["N_list"], cavity.log_grid(c["lo"], c["hi"], c["per_decade"]), c["samples"], c["seed"]
    )
    table.to_csv(path)
    return table


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """``record(criterion, ok, text)`` adds one PASS/FAIL line to the end-of-run report."""
    lines = request.config.stash[ACCEPTANCE]

    def record(criterion, ok, text):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {text}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
