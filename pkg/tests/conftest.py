import numpy as np
import pytest

from flexpd.graph import build_topology, make_network
from flexpd.objective import LogisticObjective, random_quadratic

TOPOLOGIES = ("path", "ring", "complete", "k_regular:4@3", "erdos_renyi:0.6@1")


def random_logistic(n, rng, p=3, per_agent=6, kappa=0.5):
    feats = [rng.uniform(-1, 1, size=(per_agent, p)) for _ in range(n)]
    labels = [rng.choice([-1.0, 1.0], size=per_agent) for _ in range(n)]
    return LogisticObjective(feats, labels, kappa)


def random_problem(seed, kind=None, n=None):
    """A (network, objective) pair drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.choice([2, 5, 10]))
    kind = kind or ("quadratic" if seed % 2 == 0 else "logistic")
    tags = [t for t in TOPOLOGIES if not (t.startswith("k_regular") and n < 5)]
    net = make_network(build_topology(tags[seed % len(tags)], n), beta=float(rng.uniform(0.2, 2.0)))
    if kind == "quadratic":
        obj = random_quadratic(n, rng)
    else:
        obj = random_logistic(n, rng)
    return net, obj


@pytest.fixture
def path3():
    return make_network(build_topology("path", 3))


@pytest.fixture
def pair_problem():
    """Quadratic c=[1,1], b=[0,10] on the two-agent path; optimum 5."""
    from flexpd.objective import QuadraticObjective
    return make_network(build_topology("path", 2)), QuadraticObjective([1, 1], [0, 10])


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def _criterion_order(key):
    key = str(key)
    digits = "".join(ch for ch in key if ch.isdigit())
    return int(digits), key


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=_criterion_order):
            terminalreporter.write_line(ACCEPTANCE[key])
