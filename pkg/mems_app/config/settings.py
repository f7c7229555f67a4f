# settings.py  (solver defaults; every value can come from MEMS_* env vars or .env)

from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Central solver defaults loaded from environment or .env file."""

    # ---------- grid ----------
    grid_n: int = 400

    # ---------- stationary ----------
    iteration_tol: float = 1e-10
    max_iter: int = 100_000
    guard_eps: float = 1e-9
    bisection_rel_tol: float = 1e-4

    # ---------- evolution ----------
    touchdown_eps: float = 1e-6
    quench_horizon: float = 1e3        # dt underflow is touchdown once H(max u)/(λ‖f‖) <= horizon · dt_min
    dt_min: float = 1e-12
    reaction_cfl: float = 0.2          # c_r in the adaptive step rule
    dt_max_factor: float = 1e-3        # dt_max = factor · (L or R)²
    sample_factor: float = 10.0        # sample interval = factor · dt_max

    # ---------- eigen scan ----------
    dilation_min: float = 0.05
    dilation_max: float = 5.0
    dilation_steps: int = 500

    # ---------- artifacts / flags ----------
    output_dir: str = "mems_out"
    verbose: bool = False

    # ---------- pydantic-config ----------
    model_config = SettingsConfigDict(env_prefix="MEMS_", env_file=".env", extra="ignore")


@lru_cache
def get_settings() -> Settings:
    return Settings()


# Keep the convenient global for module-level imports
settings = get_settings()
