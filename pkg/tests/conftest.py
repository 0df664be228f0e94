import numpy as np
import pytest

import audit
from illumseg import palm

_init = palm.SolveResult.__init__


def _audited_init(self, *args, **kwargs):
    _init(self, *args, **kwargs)
    entry = audit.record_run(self)
    assert audit.run_ok(entry), f"solver invariant broken: {entry}"


palm.SolveResult.__init__ = _audited_init


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if audit.RUNS:
        worst_s = max(r["simplex"] for r in audit.RUNS)
        worst_l = max(r["mean_l"] for r in audit.RUNS)
        terminalreporter.write_line(
            f"solver audit: {len(audit.RUNS)} runs, worst simplex violation {worst_s:.2e}, "
            f"worst |mean l| {worst_l:.2e}"
        )
    if audit.REPORT:
        terminalreporter.section("acceptance criteria")
        for k, status, detail in sorted(audit.REPORT):
            terminalreporter.write_line(f"criterion {k:2d} {status}: {detail}")
