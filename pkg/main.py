#!/usr/bin/env python3
"""
Kacanov Experiments - Main Entry Point

Runs the damped Kacanov iteration on the L-shaped domain for one diffusion
model and a set of step-size strategies, writing CSV traces and SVG plots.
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables (KACANOV_LOG_LEVEL, KACANOV_WORKERS, KACANOV_CACHE_DIR)
load_dotenv()

# Make the src package importable when run from anywhere
sys.path.insert(0, str(Path(__file__).parent))

from src.experiments.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
