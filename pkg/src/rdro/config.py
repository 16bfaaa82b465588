"""JSON run configurations (schema 1) and their translation to problems.

A configuration looks like::

    {"schema": 1,
     "problem": "investment",
     "instance": {"n": 50, "volatility": 0.5, ...},
     "solver": {"theta": 1.0, "epsilon": 0.01, "step_size": 20.0, ...}}

Exactly one of ``solver.theta``, ``solver.theta_grid`` and
``solver.eta_target`` must be present.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import applications as apps
from .errors import ConfigurationError
from .projection import BoxBudget, BudgetOrthant
from .solver import Direction, OuterConfig, PenalizedProblem
from .transport import ScalingConfig
from .utility import CARAUtility, LinearUtility

SCHEMA_VERSION = 1
PROBLEMS = ("investment", "healthcare", "facility", "custom")
TARGET_KEYS = ("theta", "theta_grid", "eta_target")

SOLVER_DEFAULTS = dict(
    epsilon=1e-2,
    step_size=0.1,
    outer_tolerance=1e-8,
    max_outer_iterations=5000,
    scaling_tolerance=1e-9,
    scaling_max_iterations=10_000,
    direction="ascent",
    backtracking=True,
    seed=0,
    random_start=False,
    theta_bracket=[1e-3, 1e3],
    dual_tolerance=1e-6,
)

PRESETS = {
    "investment73": {
        "schema": 1,
        "problem": "investment",
        "instance": {k: apps.INVESTMENT73[k] for k in
                     ("n", "volatility", "initial_wealth", "risk_aversion")}
        | {"y_values": list(apps.INVESTMENT73["y_values"])},
        "solver": {
            "theta": apps.INVESTMENT73["theta"],
            "epsilon": apps.INVESTMENT73["epsilon"],
            "step_size": apps.INVESTMENT73["step_size"],
            "outer_tolerance": apps.INVESTMENT73["outer_tolerance"],
            "max_outer_iterations": apps.INVESTMENT73["max_outer_iterations"],
            "scaling_tolerance": apps.INVESTMENT73["scaling_tolerance"],
            "scaling_max_iterations": apps.INVESTMENT73["scaling_max_iterations"],
        },
    },
}


@dataclass(frozen=True)
class RunConfig:
    problem: str
    instance: dict
    solver: dict

    @property
    def target(self) -> str:
        return next(k for k in TARGET_KEYS if k in self.solver)

    @property
    def seed(self) -> int:
        return int(self.solver["seed"])

    def outer_config(self) -> OuterConfig:
        s = self.solver
        return OuterConfig(
            step_size=s["step_size"],
            max_outer_iterations=s["max_outer_iterations"],
            outer_tolerance=s["outer_tolerance"],
            direction=Direction(s["direction"]),
            seed=self.seed if s["random_start"] else None,
            backtracking=s["backtracking"],
        )

    def scaling_config(self) -> ScalingConfig:
        s = self.solver
        return ScalingConfig(epsilon=s["epsilon"], tolerance=s["scaling_tolerance"],
                             max_iterations=s["scaling_max_iterations"])

    def problem_template(self, theta: Optional[float] = None) -> PenalizedProblem:
        s = self.solver
        if theta is None:
            theta = s.get("theta", 1.0)
        try:
            return _BUILDERS[self.problem](self.instance, float(theta), s["epsilon"], self.seed)
        except KeyError as exc:
            raise ConfigurationError(f"instance: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"instance: {exc}") from None

    def as_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "problem": self.problem,
                "instance": self.instance, "solver": self.solver}


def merge(base: dict, override: dict) -> dict:
    """Recursive dict update; ``override`` wins."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None


def _positive(solver, key):
    v = solver[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
        raise ConfigurationError(f"solver.{key}: must be a positive number, got {v!r}")


def validate(raw: Any, *, env_seed: Optional[str] = None) -> RunConfig:
    """Check a parsed configuration and fill in solver defaults."""
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a JSON object")
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigurationError(f"schema: expected {SCHEMA_VERSION}, got {raw.get('schema')!r}")
    unknown = set(raw) - {"schema", "problem", "instance", "solver"}
    if unknown:
        raise ConfigurationError(f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        raise ConfigurationError(f"problem: must be one of {', '.join(PROBLEMS)}, got {problem!r}")
    instance = raw.get("instance", {})
    if not isinstance(instance, dict):
        raise ConfigurationError("instance: must be an object")
    given = raw.get("solver", {})
    if not isinstance(given, dict):
        raise ConfigurationError("solver: must be an object")
    unknown = set(given) - set(SOLVER_DEFAULTS) - set(TARGET_KEYS)
    if unknown:
        raise ConfigurationError(f"solver: unknown field(s): {', '.join(sorted(unknown))}")

    present = [k for k in TARGET_KEYS if k in given]
    if len(present) != 1:
        names = ", ".join(f"solver.{k}" for k in (present or TARGET_KEYS))
        detail = "are mutually exclusive" if present else "none given"
        raise ConfigurationError(f"exactly one of theta, theta_grid, eta_target is required; {names} {detail}")

    solver = dict(SOLVER_DEFAULTS) | dict(given)
    for key in ("epsilon", "step_size", "outer_tolerance", "scaling_tolerance", "dual_tolerance",
                "max_outer_iterations", "scaling_max_iterations"):
        _positive(solver, key)
    for key in ("max_outer_iterations", "scaling_max_iterations"):
        if not isinstance(solver[key], int):
            raise ConfigurationError(f"solver.{key}: must be an integer")
    try:
        Direction(solver["direction"])
    except ValueError:
        raise ConfigurationError(
            f"solver.direction: must be 'ascent' or 'paper_descent', got {solver['direction']!r}") from None
    if env_seed is not None:
        try:
            solver["seed"] = int(env_seed)
        except ValueError:
            raise ConfigurationError(f"RDRO_SEED: not an integer: {env_seed!r}") from None
    if isinstance(solver["seed"], bool) or not isinstance(solver["seed"], int):
        raise ConfigurationError("solver.seed: must be an integer")

    if "theta" in solver:
        t = solver["theta"]
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not (t >= 0 and math.isfinite(t)):
            raise ConfigurationError(f"solver.theta: must be a nonnegative number, got {t!r}")
    if "theta_grid" in solver:
        grid = solver["theta_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigurationError("solver.theta_grid: must be a nonempty list")
        if not all(isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in grid):
            raise ConfigurationError("solver.theta_grid: entries must be positive numbers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("solver.theta_grid: must be strictly increasing")
    if "eta_target" in solver:
        e = solver["eta_target"]
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not e >= 0:
            raise ConfigurationError(f"solver.eta_target: must be a nonnegative number, got {e!r}")
        br = solver["theta_bracket"]
        if not (isinstance(br, list) and len(br) == 2 and 0 < br[0] < br[1]):
            raise ConfigurationError("solver.theta_bracket: must be [low, high] with 0 < low < high")
    cfg = RunConfig(problem, instance, solver)
    cfg.problem_template()          # surfaces instance errors early
    return cfg


# builders -----------------------------------------------------------------

def _investment(inst, theta, epsilon, seed):
    kwargs = {k: inst[k] for k in ("initial_wealth", "risk_aversion", "nu0", "p") if k in inst}
    if "y_values" in inst:
        kwargs["y_values"] = np.asarray(inst["y_values"], dtype=float)
    if "pricing_kernel" in inst:
        instance = apps.InvestmentInstance(np.asarray(inst["pricing_kernel"]), **kwargs)
    else:
        instance = apps.InvestmentInstance.generate(int(inst.get("n", 50)), float(inst.get("volatility", 0.5)),
                                                    seed, **kwargs)
    return apps.make_investment_problem(instance, theta, epsilon)


def _healthcare(inst, theta, epsilon, seed):
    M = np.asarray(inst["max_demands"], dtype=float)
    atoms = inst.get("demand_atoms")
    if atoms is None:
        atoms = apps.sample_demand_atoms(M, int(inst.get("scenarios", 5)), seed)
    n = int(inst.get("n", 1))
    instance = apps.HealthcareInstance(M, float(inst["capacity"]), float(inst["coverage"]),
                                       np.asarray(atoms, dtype=float), nu0=inst.get("nu0"),
                                       p=inst.get("p", [1.0 / n] * n))
    return apps.make_healthcare_problem(instance, theta, epsilon)


def _facility(inst, theta, epsilon, seed):
    if "random" in inst:
        r = inst["random"]
        instance = apps.random_facility_instance(int(r["facilities"]), int(r["customers"]), seed,
                                                 scenarios=int(r.get("scenarios", 4)))
    else:
        instance = apps.FacilityInstance(
            opening_cost=inst["opening_cost"], capacity=inst["capacity"], demand=inst["demand"],
            service_cost=inst["service_cost"], budget=float(inst["budget"]),
            failure_atoms=inst["failure_atoms"], nu0=inst.get("nu0"))
    return apps.make_facility_problem(instance, theta, epsilon, inst.get("p"))


def _custom(inst, theta, epsilon, seed):
    u = inst["utility"]
    kind = u.get("kind")
    if kind == "cara":
        utility = CARAUtility(float(u["risk_aversion"]))
    elif kind == "linear":
        utility = LinearUtility()
    else:
        raise ConfigurationError(f"instance.utility.kind: must be 'cara' or 'linear', got {kind!r}")
    ds = inst["decision_set"]
    if ds.get("kind") == "budget_orthant":
        dset = BudgetOrthant(ds["weights"], float(ds["budget"]))
    elif ds.get("kind") == "box_budget":
        dset = BoxBudget(ds["upper"], float(ds["capacity"]), ds.get("weights"))
    else:
        raise ConfigurationError("instance.decision_set.kind: must be 'budget_orthant' or 'box_budget'")
    return PenalizedProblem(utility, inst["p"], inst["nu0"], inst["y_values"], theta, dset, epsilon)


_BUILDERS = {"investment": _investment, "healthcare": _healthcare,
             "facility": _facility, "custom": _custom}
