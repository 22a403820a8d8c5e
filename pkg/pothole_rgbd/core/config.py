import os
from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

class Settings(BaseSettings):
    PROJECT_NAME: str = "PothRGBD measurement toolkit"
    VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: str = os.getenv("LOG_FILE", "")

    # Neural blocks
    SIMAM_LAMBDA: float = 1e-4
    GRADCHECK_TRIALS: int = 20
    GRADCHECK_EPSILON: float = 1e-6
    GRADCHECK_TOLERANCE: float = 1e-5

    # Measurement
    DEPTH_STATISTIC: str = "p95"
    PERIMETER_MODE: str = "closed"

    # Evaluation
    IOU_THRESHOLD: float = 0.5
    AP_RECALL_POINTS: int = 101

    # Camera used when a manifest has no intrinsics header
    DEFAULT_FX: float = 640.0
    DEFAULT_FY: float = 640.0
    DEFAULT_WIDTH: int = 640
    DEFAULT_HEIGHT: int = 480

    model_config = SettingsConfigDict(case_sensitive=True, extra="ignore")

settings = Settings()
