"""Configuration for the fractal percolation certifier."""
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

# Load from project root or app folder
root = Path(__file__).resolve().parent.parent
load_dotenv(root / ".env")
load_dotenv()

# Rigorous lower bound for the square-lattice site percolation threshold.
SITE_CONSTANT_DEFAULT = 0.556
SITE_CONSTANT = float(os.getenv("SITE_CONSTANT", str(SITE_CONSTANT_DEFAULT)))

# Caches
FRACTAL_CACHE_DIR = Path(os.getenv("FRACTAL_CACHE_DIR", "./.fractal-cache"))

# Enumeration caps
ENUMERATION_CAP = int(os.getenv("ENUMERATION_CAP", "16"))  # boundary elements
UPSET_CAP = int(os.getenv("UPSET_CAP", "20"))  # letters, test oracle only
STATE_CAP = int(os.getenv("STATE_CAP", "2000000"))  # states per DP layer

# Iteration
N_MAX = int(os.getenv("N_MAX", "1000"))
STAGNATION_TOL = float(os.getenv("STAGNATION_TOL", "1e-13"))
SLACK_BOUND = float(os.getenv("SLACK_BOUND", "1e-6"))
SEARCH_DELTA = float(os.getenv("SEARCH_DELTA", "1e-4"))

# Parallelism
THREADS = int(os.getenv("THREADS", "1"))

# Monte Carlo
MC_SIDE_CAP = int(os.getenv("MC_SIDE_CAP", str(2 ** 13)))  # M**n cells per side
MC_CONFIDENCE = float(os.getenv("MC_CONFIDENCE", "0.99"))

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()


class RunConfig(BaseModel):
    """Validated parameters of one command; dumped into every output."""

    command: str
    M: int | None = Field(default=None, ge=2)
    profile: tuple[int, int, int, int] | None = None
    code: str | None = None
    p: float | None = Field(default=None, ge=0.0, le=1.0)
    n_max: int = Field(default=N_MAX, ge=1)
    stagnation_tol: float = Field(default=STAGNATION_TOL, ge=0.0)
    site_constant: float = SITE_CONSTANT
    search_precision: float | None = Field(default=None, gt=0.0)
    search_delta: float = Field(default=SEARCH_DELTA, gt=0.0)
    threads: int = Field(default=THREADS, ge=1)
    cache_dir: str = str(FRACTAL_CACHE_DIR)
    output: str | None = None
    seed: int = 0

    @field_validator("site_constant")
    @classmethod
    def _site_constant_downward_only(cls, v: float) -> float:
        if not 0.0 < v <= SITE_CONSTANT_DEFAULT:
            raise ValueError(
                f"site constant must lie in (0, {SITE_CONSTANT_DEFAULT}]; "
                f"only downward overrides keep it a rigorous lower bound"
            )
        return v

    @field_validator("profile")
    @classmethod
    def _profile_tileable(cls, v):
        if v is None:
            return v
        left, top, right, bottom = v
        if min(v) < 1 or left != right or top != bottom:
            raise ValueError(f"profile {v} must have left == right and top == bottom, all >= 1")
        return v
