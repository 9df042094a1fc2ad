import math

import pytest
from hypothesis import settings
from scipy.special import gamma

from favsites import kernels

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# Watson's closed form for the simple-walk Green function at the origin of Z^3
WATSON_G0 = (math.sqrt(6) / (32 * math.pi ** 3)
             * gamma(1 / 24) * gamma(5 / 24) * gamma(7 / 24) * gamma(11 / 24))


@pytest.fixture(params=kernels.available())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


# ---------------------------------------------------------------- acceptance bookkeeping

ACCEPTANCE = {}
ACCEPTANCE_TITLES = {
    1: "exact set identities", 2: "conservation of local time", 3: "Ray-Knight identity on the 4-cycle",
    4: "inverse-local-time mean", 5: "hitting oracle", 6: "theta slope", 7: "boundary favourite band",
    8: "boundary density vs q", 9: "GFF sampler covariance", 10: "GFF maximum trend",
    11: "late-point trend", 12: "rho-curve unit tests", 13: "tuple counting", 14: "determinism",
}
CONSERVATION = {"fields": 0, "violations": 0}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(autouse=True, scope="session")
def _check_every_walk():
    """Every local-time field built from a walk path must sum to n + 1."""
    from favsites.lattice import WalkPath
    original = WalkPath.local_times

    def checked(self, n=None):
        field_ = original(self, n)
        CONSERVATION["fields"] += 1
        if int(field_.counts.sum()) != field_.total_steps + 1:
            CONSERVATION["violations"] += 1
            raise AssertionError("local times do not sum to n + 1")
        return field_

    WalkPath.local_times = checked
    yield
    WalkPath.local_times = original


def pytest_collection_modifyitems(items):
    # the acceptance module runs last so the conservation tally covers the whole suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, title in ACCEPTANCE_TITLES.items():
        if k in ACCEPTANCE:
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d}. {title}: {detail}")
        else:
            terminalreporter.write_line(f"[----] {k:2d}. {title}: not run")
