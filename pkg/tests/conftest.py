from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "trawlkit", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("trawlkit")


def within_se(sample, target, n_se=4.0):
    """|mean(sample) - target| <= n_se standard errors."""
    x = np.asarray(sample, dtype=float)
    se = x.std(ddof=1) / math.sqrt(len(x))
    return abs(x.mean() - target) <= n_se * se


def var_se(sample):
    """Standard error of the sample variance (fourth-moment formula)."""
    x = np.asarray(sample, dtype=float)
    d = x - x.mean()
    n = len(x)
    m4, m2 = np.mean(d**4), np.mean(d**2)
    return math.sqrt(max(m4 - m2 * m2, 0.0) / n)


@pytest.fixture
def rng():
    from trawlkit.rng import RngStream

    return RngStream(20261016)


# -- acceptance summary ------------------------------------------------------
# Tests marked @pytest.mark.criterion(n, title) are grouped and reported as
# one line per criterion at the end of the run.

_CRITERIA: dict = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is not None and call.when == "setup":
        item.user_properties.append(("criterion", mark.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n, title = props["criterion"]
        xfail = hasattr(report, "wasxfail")
        if xfail:
            status = "xfail"
        elif report.passed:
            status = "pass"
        elif report.skipped:
            status = "skip"
        else:
            status = "fail"
        part = report.nodeid.split("::")[-1]
        _CRITERIA.setdefault(n, (title, []))[1].append((part, status, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, parts = _CRITERIA[n]
        hard = [p for p in parts if p[1] != "xfail"]
        soft = [p for p in parts if p[1] == "xfail"]
        ok = bool(hard) and all(p[1] == "pass" for p in hard)
        # a criterion with any unattained part is not reported as a pass
        verdict = "FAIL" if not ok else "PART" if soft else "PASS"
        notes = []
        if soft:
            notes.append(f"{len(soft)} part(s) xfail strict, see decisions ledger")
        notes += [p[2] for p in parts if p[2]]
        tr.write_line(f"criterion {n:>2}  {verdict:<4}  {title}" + (f"  [{'; '.join(notes)}]" if notes else ""))
