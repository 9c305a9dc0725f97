from typing import Optional
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    # Application
    app_name: str = "Appell Attractor"
    version: str = "1.0.0"
    log_level: str = "INFO"

    # Parallelism (APPELL_THREADS caps worker processes)
    threads: int = 1

    # Output
    output_directory: str = "./output"
    default_seed: int = 0

    # Precision
    min_precision: int = 64
    precision_override: Optional[int] = None

    # Generating functions
    modulus_rel_tol: float = 1e-9  # grouping |a| = |a'|
    rho_margin: float = 1e-6  # rho must stay this far (relative) from zero moduli
    quadrature_node_start: int = 16
    quadrature_node_cap: int = 4096

    # Root finding
    aberth_max_iter: int = 400
    newton_annulus_ratio: float = 1e3  # polygon edges with radii within this factor share a start circle
    contour_base_nodes: int = 64
    contour_node_cap: int = 65536
    contour_snap_tol: float = 0.1

    # Attractor geometry
    resolution: int = 2048
    tie_tol: float = 1e-9
    improper_tol: float = 1e-9
    bracket_samples: int = 512

    # Validation
    window_factor: float = 5.0
    arc_bin_threshold: float = 0.20
    segment_bin_threshold: float = 0.25
    attractor_clearance: float = 0.02

    class Config:
        env_file = ".env"
        env_prefix = "APPELL_"
        extra = "ignore"


settings = Settings()
