"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Lists are comma separated and
``none`` clears an optional value.  Keys left out take the defaults of the
chosen case; :meth:`ExperimentConfig.dumps` writes every key back so a run can
be reproduced from its resolved config alone.

Keys
----
case            lambda_sweep | multi_re_continuity | multi_re_full | noisy_sparse | transfer
seed            base seed; replicate r trains with seed + r
replicates      number of replicates per group
threads         worker processes across replicates
lid             regularized | constant
solver_n        reference solver resolution (nodes per side)
solver_tol      Newton tolerance of the reference solver
train_grid      nodes per side of the training grid
test_grid       nodes per side of the test grid
interior_m      nodes per side of the collocation grid (interior nodes are used)
boundary_m      collocation points per wall, corners shared
re_train        Re values that carry data
re_physics      Re values with physics collocation (defaults to re_train)
re_test         Re values the test MSE is reported for
re_new          transfer targets (transfer case only)
strategies      transfer strategies to run
lambdas         physics weights
physics         full | continuity
noise           uniform noise amplitude added to the training data
subsample       fraction of training points kept per Re
width, trunk_depth, head_depth   network shape
lr              ADAM learning rate
max_epochs      epoch cap per stage
loss_threshold  stop once the total loss is at or below this (none = fixed budget)
track_physics   also record physics terms when lambda = 0
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from cavity_pinn.network import NetworkSpec
from cavity_pinn.physics import LidProfile
from cavity_pinn.training.losses import PhysicsMode
from cavity_pinn.training.strategies import STRATEGY_NAMES

CASES = ("lambda_sweep", "multi_re_continuity", "multi_re_full", "noisy_sparse", "transfer")


class ConfigError(ValueError):
    pass


_MULTI_RE = dict(
    re_train=(50.0, 150.0),
    re_test=(50.0, 100.0, 150.0, 200.0),
    lambdas=(0.0, 1.0),
    train_grid=96,
)

CASE_DEFAULTS = {
    "lambda_sweep": dict(
        re_train=(100.0,),
        re_test=(100.0,),
        lambdas=(0.0, 1e-3, 1e-2, 1e-1, 1.0),
        train_grid=96,
        physics="full",
        loss_threshold=None,
    ),
    "multi_re_continuity": dict(_MULTI_RE, physics="continuity", loss_threshold=2e-4),
    "multi_re_full": dict(_MULTI_RE, physics="full", loss_threshold=5e-4),
    "noisy_sparse": dict(_MULTI_RE, physics="full", loss_threshold=5e-4, noise=0.01, subsample=0.1),
    "transfer": dict(
        re_train=(50.0, 100.0),
        re_new=(150.0, 200.0, 300.0),
        re_test=(50.0, 100.0, 150.0, 200.0, 300.0),
        lambdas=(1.0,),
        train_grid=32,
        physics="full",
        loss_threshold=5e-4,
    ),
}


@dataclass
class ExperimentConfig:
    case: str
    seed: int = 0
    replicates: int = 10
    threads: int = 1
    lid: str = "regularized"
    solver_n: int = 257
    solver_tol: float = 1e-8
    train_grid: int = 96
    test_grid: int = 128
    interior_m: Optional[int] = None
    boundary_m: Optional[int] = None
    re_train: tuple = ()
    re_physics: Optional[tuple] = None
    re_test: tuple = ()
    re_new: tuple = ()
    strategies: tuple = STRATEGY_NAMES
    lambdas: tuple = (1.0,)
    physics: str = "full"
    noise: float = 0.0
    subsample: float = 1.0
    width: int = 100
    trunk_depth: int = 3
    head_depth: int = 3
    lr: float = 1e-3
    max_epochs: int = 50_000
    loss_threshold: Optional[float] = None
    track_physics: bool = False

    # -- derived ---------------------------------------------------------------

    @property
    def uses_re_input(self) -> bool:
        res = {*self.re_train, *self.re_test, *self.re_new, *(self.re_physics or ())}
        return len(res) > 1

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(3 if self.uses_re_input else 2, self.trunk_depth, self.head_depth, self.width)

    def solver_res(self) -> list[float]:
        """Every Re that needs a reference solution (data or test)."""
        return sorted({*self.re_train, *self.re_test})

    @property
    def lid_profile(self) -> LidProfile:
        return LidProfile.parse(self.lid)

    @property
    def physics_mode(self) -> PhysicsMode:
        return PhysicsMode.parse(self.physics)

    # -- resolution ------------------------------------------------------------

    def resolve(self) -> "ExperimentConfig":
        if self.interior_m is None:
            self.interior_m = self.train_grid
        if self.boundary_m is None:
            self.boundary_m = self.train_grid
        if self.re_physics is None:
            self.re_physics = tuple(self.re_train)
        self.validate()
        return self

    def validate(self) -> None:
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {', '.join(CASES)}")
        for name in ("replicates", "threads", "max_epochs", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("train_grid", "test_grid", "interior_m", "boundary_m"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        if self.solver_n < 17:
            raise ConfigError("solver_n must be >= 17")
        if self.trunk_depth < 1 or self.head_depth < 0:
            raise ConfigError("trunk_depth must be >= 1 and head_depth >= 0")
        for name in ("re_train", "re_test", "re_physics", "re_new"):
            if any(r <= 0 for r in getattr(self, name)):
                raise ConfigError(f"{name}: Reynolds numbers must be positive")
        if not self.re_train and self.case != "transfer":
            raise ConfigError("re_train is empty")
        if not self.re_test:
            raise ConfigError("re_test is empty")
        if not self.lambdas or any(l < 0 for l in self.lambdas):
            raise ConfigError("lambdas must be a non-empty list of non-negative values")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must lie in (0, 1]")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.loss_threshold is not None and self.loss_threshold < 0:
            raise ConfigError("loss_threshold must be >= 0")
        if self.case == "transfer":
            if not self.re_new:
                raise ConfigError("transfer case needs re_new")
            bad = [s for s in self.strategies if s not in STRATEGY_NAMES]
            if bad:
                raise ConfigError(f"unknown strategies {bad}")
        try:
            self.lid_profile, self.physics_mode
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- text format -----------------------------------------------------------

    def dumps(self) -> str:
        lines = ["# resolved experiment configuration"]
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_FLOAT_LISTS = {"re_train", "re_physics", "re_test", "re_new", "lambdas"}
_INTS = {"seed", "replicates", "threads", "solver_n", "train_grid", "test_grid", "interior_m",
         "boundary_m", "width", "trunk_depth", "head_depth", "max_epochs"}
_FLOATS = {"solver_tol", "noise", "subsample", "lr", "loss_threshold"}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _convert(key: str, raw: str):
    text = raw.strip()
    if text.lower() == "none" and key in {"interior_m", "boundary_m", "re_physics", "loss_threshold"}:
        return None
    try:
        if key in _FLOAT_LISTS:
            return tuple(float(t) for t in text.split(",") if t.strip())
        if key == "strategies":
            return tuple(t.strip().upper() for t in text.split(",") if t.strip())
        if key in _INTS:
            return int(text)
        if key in _FLOATS:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw.strip()!r}") from None
    if key == "track_physics":
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"track_physics: expected true or false, got {text!r}")
    return text.lower()


def parse_config(text: str, source: str = "<config>", **overrides) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    case = values.get("case")
    if case is None:
        raise ConfigError(f"{source}: missing required key 'case'")
    if case not in CASES:
        raise ConfigError(f"{source}: unknown case {case!r}; expected one of {', '.join(CASES)}")
    merged = dict(CASE_DEFAULTS[case])
    merged.update(values)
    return ExperimentConfig(**merged).resolve()


def load_config(path, **overrides) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p), **overrides)
