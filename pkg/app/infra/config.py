"""Configuration management."""

import os
from typing import Tuple
from pathlib import Path
from dotenv import load_dotenv

# Load .env file from project root
# This ensures dotenv works regardless of where the script is run from
project_root = Path(__file__).parent.parent.parent
env_file = project_root / ".env"

# Existing environment variables take precedence over .env values
load_dotenv(dotenv_path=env_file, override=False)


def parse_address(value: str, default_port: int = 7420) -> Tuple[str, int]:
    """
    Split a HOST:PORT string.

    Args:
        value: Address such as "127.0.0.1:7420" or ":7420"
        default_port: Port used when the value carries none

    Returns:
        Tuple of (host, port)
    """
    host, sep, port = value.strip().rpartition(":")
    if not sep:
        return value.strip() or "127.0.0.1", default_port
    return host or "127.0.0.1", int(port)


class Config:
    """Application configuration."""
    # Application
    APP_ENV: str = os.getenv("APP_ENV", "development")
    DEBUG: bool = os.getenv("DEBUG", "false").lower() == "true"

    # Server store (SQLAlchemy URL; "sqlite://" keeps everything in memory)
    STORE_URL: str = os.getenv("HEADCOUNT_STORE_URL", "sqlite://")

    # Frame server and transports
    LISTEN: str = os.getenv("HEADCOUNT_LISTEN", "127.0.0.1:7420")
    SERVER: str = os.getenv("HEADCOUNT_SERVER", "127.0.0.1:7420")
    HTTP_URL: str = os.getenv("HEADCOUNT_HTTP_URL", "http://127.0.0.1:8000")
    TRANSPORT: str = os.getenv("HEADCOUNT_TRANSPORT", "inproc")
    IO_TIMEOUT: float = float(os.getenv("HEADCOUNT_IO_TIMEOUT", "120"))
    MAX_FRAME_BYTES: int = int(os.getenv("HEADCOUNT_MAX_FRAME_BYTES", str(256 * 1024 * 1024)))

    # Epoch defaults
    HE_BACKEND: str = os.getenv("HEADCOUNT_HE_BACKEND", "emulated")
    BLOOM_M: int = int(os.getenv("HEADCOUNT_BLOOM_M", "4096"))
    BLOOM_K: int = int(os.getenv("HEADCOUNT_BLOOM_K", "3"))
    EPOCH_SECONDS: int = int(os.getenv("HEADCOUNT_EPOCH_SECONDS", "300"))


config = Config()
