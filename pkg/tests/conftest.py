import hashlib
import inspect

import numpy as np
import pytest

from cavity_pinn import cavity_solver
from cavity_pinn.cavity_solver import FlowField, SolverConfig, solve_cavity
from cavity_pinn.experiment import field_path, load_field, save_field
from cavity_pinn.physics import LidProfile


@pytest.fixture(scope="session")
def solved(request):
    """solved(re, n, lid) -> FlowField, cached in memory and in the pytest cache directory.

    The solver is deterministic, and the CSV round trip is exact, so a cached
    field is the same field a fresh solve would give.  The cache directory is
    keyed by a hash of the solver source, so editing the solver invalidates it.
    """
    digest = hashlib.sha256(inspect.getsource(cavity_solver).encode()).hexdigest()[:12]
    store = request.config.cache.mkdir(f"cavity_fields_{digest}")
    memo = {}

    def get(re, n=129, lid="regularized"):
        lid = LidProfile.parse(lid).value
        key = (float(re), n, lid)
        if key not in memo:
            path = field_path(store, re, n, lid)
            if path.is_file():
                memo[key] = load_field(path)
            else:
                f = solve_cavity(SolverConfig(n=n, re=re, lid=lid))
                save_field(path, f)
                memo[key] = load_field(path)
        return memo[key]

    return get


def make_synthetic_field(n=97, re=100.0, lid="regularized", scale=1.0):
    """Smooth stand-in for a solver field with exact wall values."""
    lid = LidProfile.parse(lid)
    c = np.linspace(0, 1, n)
    x, y = np.meshgrid(c, c, indexing="xy")
    u = scale * np.sin(np.pi * x) * y**2 * (1 - y) * 4
    u[-1, 1:-1] = lid.velocity(c[1:-1])
    u[0] = u[:, 0] = u[:, -1] = 0.0
    v = scale * np.sin(np.pi * x) * np.sin(np.pi * y) * 0.1
    v[0] = v[-1] = v[:, 0] = v[:, -1] = 0.0
    p = scale * np.cos(np.pi * x) * np.cos(np.pi * y)
    return FlowField(n, u, v, p - p.mean(), re, lid)


@pytest.fixture(scope="session")
def synthetic_field():
    return make_synthetic_field


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""

    def record(number: int, passed: bool, text: str) -> None:
        line = f"[acceptance {number}] {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
