"""
Scenario – parse, validate and execute one run of the solvers.

A scenario file is flat text with dotted keys:

    mode = pullin
    domain.shape = interval
    domain.size = 1
    nonlinearity.p = 2
    forcing.kind = constant
    run.tol_lambda = 1e-3

Every value is validated by ScenarioConfig before any solve starts; a bad
key surfaces as ConfigError carrying its dotted path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydField, ValidationError, field_validator

from mems_app import __version__
from mems_app.config.settings import settings
from mems_app.errors import ConfigError
from mems_app.solvers.eigen import ball_eigenfunction, cached_eigenpair
from mems_app.solvers.evolution import (
    EvolutionControls,
    EvolutionTrace,
    energy_inequality_check,
    evolve,
    picard_local,
    touchdown_bounds,
    touchdown_report,
)
from mems_app.solvers.grid import Ball, Field, GridDomain, Interval, build_grid
from mems_app.solvers.model import (
    ForcingProfile,
    NonlinearityProfile,
    check_hypotheses,
    forcing_stats,
)
from mems_app.solvers.stationary import (
    lambda_bounds,
    linearized_eigenvalue,
    minimal_solution,
    pull_in_voltage,
)
from mems_app.verify import run_verify_all

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

Mode = Literal["stationary", "pullin", "bounds", "evolve", "picard", "verify-all"]
MODES: tuple[str, ...] = ("stationary", "pullin", "bounds", "evolve", "picard", "verify-all")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ASSERTION = 2


# ─── Config schema ──────────────────────────────────────────────────────
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Section):
    shape: Literal["interval", "ball"] = "interval"
    size: float = PydField(1.0, gt=0)
    n: int = PydField(2, ge=2)
    N: int = PydField(default_factory=lambda: settings.grid_n, ge=8)


class NonlinearityConfig(_Section):
    kind: Literal["power", "exp", "constant", "damped-power"] = "power"
    p: float = PydField(2.0, gt=0)
    kappa: float = PydField(1.0, ge=0)


class ForcingConfig(_Section):
    kind: Literal["constant", "bump", "polynomial"] = "constant"
    amplitude: float = PydField(1.0, ge=0)
    center: Optional[float] = None
    width: float = PydField(0.25, gt=0)
    base: float = PydField(0.0, ge=0)
    coefficients: list[float] = PydField(default_factory=lambda: [1.0], min_length=1)

    @field_validator("coefficients", mode="before")
    @classmethod
    def _scalar_to_list(cls, value: Any) -> Any:
        return [value] if isinstance(value, (int, float)) else value


class InitialConfig(_Section):
    """u0 = value (constant) or value · principal profile (sine: max-one mode shape)."""

    kind: Literal["constant", "sine"] = "constant"
    value: float = PydField(0.0, lt=1)


class RunConfig(_Section):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lam: Optional[float] = PydField(None, alias="lambda", ge=0)
    t_end: float = PydField(1.0, gt=0)
    tol_lambda: float = PydField(default_factory=lambda: settings.bisection_rel_tol, gt=0, lt=1)
    k_iter: int = PydField(8, ge=1)
    dt_max: Optional[float] = PydField(None, gt=0)


class ScenarioConfig(_Section):
    mode: Mode = "bounds"
    out: str = PydField(default_factory=lambda: settings.output_dir)
    domain: DomainConfig = PydField(default_factory=DomainConfig)
    nonlinearity: NonlinearityConfig = PydField(default_factory=NonlinearityConfig)
    forcing: ForcingConfig = PydField(default_factory=ForcingConfig)
    initial: InitialConfig = PydField(default_factory=InitialConfig)
    run: RunConfig = PydField(default_factory=RunConfig)

    # --- builders -------------------------------------------------------
    def build_grid(self) -> GridDomain:
        d = self.domain
        shape = Interval(length=d.size) if d.shape == "interval" else Ball(n=d.n, radius=d.size)
        return build_grid(shape, d.N)

    def nonlinearity_profile(self) -> NonlinearityProfile:
        c = self.nonlinearity
        return NonlinearityProfile(kind=c.kind, p=c.p, kappa=c.kappa)

    def forcing_profile(self) -> ForcingProfile:
        c = self.forcing
        return ForcingProfile(
            kind=c.kind,
            amplitude=c.amplitude,
            center=c.center,
            width=c.width,
            base=c.base,
            coefficients=tuple(c.coefficients),
        )

    def initial_field(self, grid: GridDomain) -> Field:
        c = self.initial
        if c.kind == "constant":
            return Field.constant(grid, c.value)
        shape = grid.shape
        if shape.kind == "interval":
            profile = np.sin(np.pi * (grid.nodes - shape.left) / shape.length)
        else:
            profile = ball_eigenfunction(shape.n, shape.radius, grid.nodes)
        return Field(grid, c.value * profile)


# ─── Parsing ────────────────────────────────────────────────────────────
def _coerce(raw: str) -> Any:
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    if "," in text:
        return [_coerce(part) for part in text.split(",")]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    """Flat `a.b = value` lines into a nested dict; `#` starts a comment."""
    tree: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        parts = key.split(".")
        node = tree
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(key, f"'{part}' is already a value")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(key, "is a section, not a value")
        node[parts[-1]] = _coerce(value)
    return tree


def _merge(tree: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    for dotted, value in overrides.items():
        if value is None:
            continue
        *head, leaf = dotted.split(".")
        node = tree
        for part in head:
            node = node.setdefault(part, {})
        node[leaf] = value
    return tree


def validate_config(tree: dict[str, Any]) -> ScenarioConfig:
    """pydantic validation; the first error becomes ConfigError(key path)."""
    try:
        config = ScenarioConfig.model_validate(tree)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(path, err["msg"]) from exc
    if config.mode in ("stationary", "evolve", "picard") and config.run.lam is None:
        raise ConfigError("run.lambda", f"required for mode {config.mode}")
    if config.mode == "picard" and config.run.lam == 0:
        raise ConfigError("run.lambda", "picard needs lambda > 0")
    return config


def load_config(path: Path | None, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    """Read *path* (optional), apply dotted *overrides* (flags win), validate."""
    tree: dict[str, Any] = {}
    if path is not None:
        if not path.exists():
            raise ConfigError("--config", f"file not found: {path}")
        tree = parse_config_text(path.read_text(encoding="utf-8"))
    return validate_config(_merge(tree, overrides or {}))


# ─── Execution ──────────────────────────────────────────────────────────
@dataclass
class ScenarioOutcome:
    exit_code: int
    summary: dict[str, Any]
    trace: EvolutionTrace | None = None
    fields: dict[str, Field] = field(default_factory=dict)
    extra_csv: dict[str, Any] = field(default_factory=dict)


def _base_summary(config: ScenarioConfig, grid: GridDomain, f, g) -> dict[str, Any]:
    return {
        "version": __version__,
        "mode": config.mode,
        "config": config.model_dump(by_alias=True),
        "settings": settings.model_dump(),
        "hypotheses": check_hypotheses(g, f, grid).as_dict(),
        "results": {},
    }


def _run_stationary(config, grid, f, g, summary) -> ScenarioOutcome:
    lam = config.run.lam
    res = minimal_solution(grid, f, g, lam, record_trace=settings.verbose)
    out = {
        "lambda": lam,
        "converged": res.converged,
        "status": res.status,
        "iterations": res.iterations,
        "increment": res.increment,
        "residual": res.residual,
        "max_v": res.v.max(),
        "monotone": res.monotone,
        "mu_tilde": linearized_eigenvalue(grid, f, g, lam, res.v) if res.converged else None,
    }
    summary["results"] = out
    extra = {"iterations.csv": res.trace_rows()} if settings.verbose else {}
    return ScenarioOutcome(EXIT_OK, summary, fields={"v_lambda": res.v}, extra_csv=extra)


def _run_pullin(config, grid, f, g, summary) -> ScenarioOutcome:
    est = pull_in_voltage(grid, f, g, config.run.tol_lambda)
    summary["results"] = est.as_dict()
    return ScenarioOutcome(EXIT_OK, summary, fields={"v_lambda_lo": est.v_lo})


def _run_bounds(config, grid, f, g, summary) -> ScenarioOutcome:
    summary["results"] = lambda_bounds(grid, f, g).as_dict()
    return ScenarioOutcome(EXIT_OK, summary)


def _controls(config: ScenarioConfig) -> EvolutionControls:
    return EvolutionControls(dt_max=config.run.dt_max)


def _run_evolve(config, grid, f, g, summary) -> ScenarioOutcome:
    lam, u0 = config.run.lam, config.initial_field(grid)
    pair = cached_eigenpair(grid)
    trace = evolve(grid, f, g, lam, u0, config.run.t_end, _controls(config), pair)
    trace.raise_for_status()
    report = touchdown_report(trace, touchdown_bounds(grid, f, g, lam, u0, pair))
    out: dict[str, Any] = {
        "lambda": lam,
        "status": trace.status,
        "t_final": trace.t[-1],
        "steps": trace.steps,
        "final_max_u": trace.max_u[-1],
        "touchdown": report.as_dict(),
    }
    if forcing_stats(f, grid).delta1 > 0:
        check = energy_inequality_check(trace, grid, f, g, lam, pair)
        out["energy_check"] = {
            "max_violation": check.max_violation,
            "worst_time": check.worst_time,
            "samples": check.samples,
            "passed": check.passed,
        }
    summary["results"] = out
    return ScenarioOutcome(EXIT_OK, summary, trace=trace, fields={"u_final": trace.final})


def _run_picard(config, grid, f, g, summary) -> ScenarioOutcome:
    lam, u0 = config.run.lam, config.initial_field(grid)
    res = picard_local(grid, f, g, lam, u0, config.run.k_iter, config.run.dt_max)
    stepped = evolve(
        grid, f, g, lam, u0, res.T_local,
        EvolutionControls(schedule=np.full(res.steps, res.dt), sample_stride=1, keep_fields=True),
    )
    mismatch = float(np.abs(np.asarray(stepped.fields) - res.iterate).max())
    out = res.as_dict()
    out.update({"lambda": lam, "evolve_mismatch": mismatch})
    summary["results"] = out
    return ScenarioOutcome(
        EXIT_OK, summary, trace=stepped, fields={"picard_final": Field(grid, res.iterate[-1])}
    )


def _run_verify(config, grid, f, g, summary) -> ScenarioOutcome:
    results = run_verify_all(config.domain.N, config.out)
    summary["results"] = {r.name: r.passed for r in results}
    failed = any(not r.passed for r in results)
    return ScenarioOutcome(EXIT_ASSERTION if failed else EXIT_OK, summary)


_RUNNERS = {
    "stationary": _run_stationary,
    "pullin": _run_pullin,
    "bounds": _run_bounds,
    "evolve": _run_evolve,
    "picard": _run_picard,
    "verify-all": _run_verify,
}


def run_scenario(config: ScenarioConfig) -> ScenarioOutcome:
    """Dispatch *config* to its solver and collect the artifacts to emit."""
    grid = config.build_grid()
    f, g = config.forcing_profile(), config.nonlinearity_profile()
    summary = _base_summary(config, grid, f, g)
    logger.info("▶ %s on %s (N=%d) …", config.mode, grid.shape.kind, grid.N)
    outcome = _RUNNERS[config.mode](config, grid, f, g, summary)
    logger.info("✓ %s done", config.mode)
    return outcome
