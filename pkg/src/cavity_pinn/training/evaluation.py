from __future__ import annotations

from typing import Mapping

import numpy as np

from cavity_pinn.cavity_solver import FlowField
from cavity_pinn.network import NetworkSpec, ParameterSet, forward

VARIABLES = ("u", "v", "p")


def evaluate_test_mse(
    params: ParameterSet, spec: NetworkSpec, test_fields: Mapping[float, FlowField]
) -> dict[tuple[float, str], float]:
    """Separate mean squared error of u, v and p on every node of each test field."""
    out = {}
    for re in sorted(test_fields):
        f = test_fields[re]
        x, y = f.mesh()
        pred = forward(params, spec, x.ravel(), y.ravel(), re if spec.uses_re else None)
        for name, values in zip(VARIABLES, pred):
            out[(float(re), name)] = float(np.mean((values - getattr(f, name).ravel()) ** 2))
    return out
