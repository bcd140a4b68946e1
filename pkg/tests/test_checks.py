import pytest

from consensus_lab import checks
from consensus_lab.noise import ConfidenceFunction

KERNELS = [
    ConfidenceFunction.linear(0.5),
    ConfidenceFunction.exponential(2.0),
    ConfidenceFunction.threshold(0.5, 0.0),
    ConfidenceFunction.constant(),
]


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
@pytest.mark.parametrize("n", [2, 3])
def test_suites_pass(n, kernel):
    results = checks.run_suites(n, kernel, seed=n)
    assert [c.name for c in results] == list(checks.CHECK_NAMES)
    assert all(c.passed for c in results), [c for c in results if not c.passed]


@pytest.mark.parametrize("name", checks.CHECK_NAMES)
def test_injection_flips_exactly_one_check(name):
    results = checks.run_suites(3, ConfidenceFunction.linear(0.5), seed=1, inject=name)
    failed = [c for c in results if not c.passed]
    assert [c.name for c in failed] == [name]
    assert failed[0].margin < 0 and failed[0].details["injected"]


def test_random_injection_is_seeded():
    a = [c.name for c in checks.run_suites(2, ConfidenceFunction.linear(0.5), seed=4, inject="random") if not c.passed]
    b = [c.name for c in checks.run_suites(2, ConfidenceFunction.linear(0.5), seed=4, inject="random") if not c.passed]
    assert a == b and len(a) == 1
    with pytest.raises(ValueError):
        checks.run_suites(2, ConfidenceFunction.linear(0.5), inject="nonsense")


def test_all_upsets_count():
    assert len(checks.all_upsets(2)) == 6
