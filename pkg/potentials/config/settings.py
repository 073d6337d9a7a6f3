"""Application configuration management."""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical and runtime settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="POTENTIALS_",
        case_sensitive=False,
        extra="ignore"
    )

    # Application Settings
    log_level: str = "INFO"
    output_dir: str = "out"
    default_seed: int = 0
    schema_version: str = "1.0"

    # Cells and roots
    tie_tolerance: float = 1e-12
    root_max_iter: int = 200
    root_tolerance: float = 1e-13
    bracket_max_expansions: int = 200
    cell_membership: str = "fractional"

    # Derivatives
    internal_step: float = 1e-4
    derivative_step: float = 1e-6
    dual_derivative_step: float = 1e-5
    derivative_tol: float = 1e-6
    second_derivative_tol: float = 1e-4
    max_rejection_draws: int = 200000

    # Duality lab
    inner_starts: int = 8
    inner_ftol: float = 1e-12
    mu_max: float = 10.0
    mu_xatol: float = 1e-8
    grid_search_points: int = 41
    numeric_tol: float = 1e-9


# Global settings instance
settings = Settings()
