import sys

import numpy as np
import pytest

from biasreduce.core import N_MONTHS, IngestSchema


def write_csv(path, rows, n_months=N_MONTHS, with_days=False, with_label=True):
    schema = IngestSchema()
    header = ["customer_id", *[f"m{t:02d}" for t in range(1, n_months + 1)]]
    if with_days:
        header += schema.days_columns
    if with_label:
        header.append("label")
    header += ["region", "customer_class"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(str(v) for v in r))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def make_row(cid, readings, label=0, region="A", cclass="res", days=None):
    row = [cid, *readings]
    if days is not None:
        row += list(days)
    if label is not None:
        row.append(label)
    return row + [region, cclass]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
