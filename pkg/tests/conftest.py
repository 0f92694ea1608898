import sys
import time

import pytest

from tl3dqn import harness
from tl3dqn.config import load_config


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Desk-preset training plus the fixed 30 s baseline on the same arrivals (several minutes)."""
    out = tmp_path_factory.mktemp("desk")
    config = load_config(preset="desk", seed=0)
    start = time.perf_counter()
    trainer = harness.Trainer(config, out / "learned")
    trainer.run()
    baseline = harness.run_baseline(config, 30, out / "fixed_30")
    return dict(config=config, trainer=trainer, baseline=baseline, seconds=time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        terminalreporter.write_line(mod.RESULTS.get(n, f"FAIL criterion {n:>2}: not run or raised before a verdict"))
