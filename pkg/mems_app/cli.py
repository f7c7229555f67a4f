"""
MEMS App – command‑line interface.
Run “mems-app --help” once installed.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
import typer

from mems_app import __version__
from mems_app.config.settings import settings
from mems_app.logging_config import setup_logging

# --------------------------------------------------------------------- #
#  Logging
# --------------------------------------------------------------------- #
setup_logging("DEBUG" if settings.verbose else "INFO")
logger = logging.getLogger(__name__)

# --------------------------------------------------------------------- #
#  Scenario imports
# --------------------------------------------------------------------- #
from mems_app.errors import ConfigError, HypothesisError, MemsError
from mems_app.report import emit_report
from mems_app.scenario import (
    EXIT_ASSERTION,
    EXIT_CONFIG,
    EXIT_OK,
    load_config,
    run_scenario,
)

# ── root Typer app ────────────────────────────────────────────────────
app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help=f"Pull-in voltage and touchdown toolkit for the MEMS equation (v {__version__})",
)

ConfigOpt = typer.Option(None, "--config", exists=True, dir_okay=False, help="Scenario file (dotted keys)")
OutOpt = typer.Option(None, "--out", help="Artifact directory (default: settings.output_dir)")
LambdaOpt = typer.Option(None, "--lambda", min=0.0, help="Voltage parameter λ")
GridOpt = typer.Option(None, "--grid-n", min=8, help="Interior node count N")
SeedlessOpt = typer.Option(False, "--seedless", help="Fail if any RNG state is touched")


@app.callback()
def _root() -> None:
    """Root command group."""


def _rng_untouched(before: tuple) -> bool:
    after = np.random.get_state()
    return before[0] == after[0] and np.array_equal(before[1], after[1]) and before[2:] == after[2:]


def _execute(
    mode: str,
    config: Optional[Path],
    out: Optional[Path],
    lam: Optional[float],
    grid_n: Optional[int],
    seedless: bool,
    extra: dict[str, Any] | None = None,
) -> None:
    """Parse → validate → run → emit; maps failures onto exit codes."""
    overrides = {
        "mode": mode,
        "out": None if out is None else str(out),
        "run.lambda": lam,
        "domain.N": grid_n,
        **(extra or {}),
    }
    try:
        cfg = load_config(config, overrides)
    except ConfigError as exc:
        logger.error("Config error – %s", exc)
        raise typer.Exit(code=EXIT_CONFIG)

    rng_before = np.random.get_state()
    try:
        outcome = run_scenario(cfg)
    except (HypothesisError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        raise typer.Exit(code=EXIT_CONFIG)
    except MemsError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        raise typer.Exit(code=EXIT_ASSERTION)

    emit_report(cfg.out, outcome.summary, outcome.trace, outcome.fields, outcome.extra_csv)
    if seedless and not _rng_untouched(rng_before):
        logger.error("RNG state changed during the run")
        raise typer.Exit(code=EXIT_ASSERTION)
    if outcome.exit_code != EXIT_OK:
        raise typer.Exit(code=outcome.exit_code)


# ── Stationary minimal solution ───────────────────────────────────────
@app.command()
def stationary(
    config: Optional[Path] = ConfigOpt,
    out: Optional[Path] = OutOpt,
    lam: Optional[float] = LambdaOpt,
    grid_n: Optional[int] = GridOpt,
    seedless: bool = SeedlessOpt,
) -> None:
    """Minimal solution v_λ by monotone iteration."""
    _execute("stationary", config, out, lam, grid_n, seedless)


# ── Pull-in voltage ───────────────────────────────────────────────────
@app.command()
def pullin(
    config: Optional[Path] = ConfigOpt,
    out: Optional[Path] = OutOpt,
    grid_n: Optional[int] = GridOpt,
    tol: Optional[float] = typer.Option(None, "--tol", help="Relative bracket tolerance"),
    seedless: bool = SeedlessOpt,
) -> None:
    """Bisection bracket for λ* plus the analytic bounds."""
    _execute("pullin", config, out, None, grid_n, seedless, {"run.tol_lambda": tol})


# ── Analytic bounds ───────────────────────────────────────────────────
@app.command()
def bounds(
    config: Optional[Path] = ConfigOpt,
    out: Optional[Path] = OutOpt,
    grid_n: Optional[int] = GridOpt,
    seedless: bool = SeedlessOpt,
) -> None:
    """Every analytic λ* bound, tagged applicable or not."""
    _execute("bounds", config, out, None, grid_n, seedless)


# ── Time evolution ────────────────────────────────────────────────────
@app.command()
def evolve(
    config: Optional[Path] = ConfigOpt,
    out: Optional[Path] = OutOpt,
    lam: Optional[float] = LambdaOpt,
    grid_n: Optional[int] = GridOpt,
    t_end: Optional[float] = typer.Option(None, "--t-end", help="Final time"),
    seedless: bool = SeedlessOpt,
) -> None:
    """Evolve u_t = Δu + λf/g(u) with touchdown detection and bounds."""
    _execute("evolve", config, out, lam, grid_n, seedless, {"run.t_end": t_end})


# ── Picard local existence ────────────────────────────────────────────
@app.command()
def picard(
    config: Optional[Path] = ConfigOpt,
    out: Optional[Path] = OutOpt,
    lam: Optional[float] = LambdaOpt,
    grid_n: Optional[int] = GridOpt,
    seedless: bool = SeedlessOpt,
) -> None:
    """Picard sweeps on [0, T_local] checked against the time stepper."""
    _execute("picard", config, out, lam, grid_n, seedless)


# ── Acceptance suite ──────────────────────────────────────────────────
@app.command("verify-all")
def verify_all(
    config: Optional[Path] = ConfigOpt,
    out: Optional[Path] = OutOpt,
    grid_n: Optional[int] = GridOpt,
    seedless: bool = SeedlessOpt,
) -> None:
    """Run every acceptance check and print a pass/fail table."""
    _execute("verify-all", config, out, None, grid_n, seedless)
    logger.info("🏁  verify-all finished")


# ── Entry‑point for `python -m mems_app.cli` ──────────────────────────
def main() -> None:  # noqa: D401
    """CLI entry‑point."""
    app()


if __name__ == "__main__":  # pragma: no cover
    main()
