#!/usr/bin/env python3
"""headcount command line from a source checkout.

Usage:
    python scripts/headcount.py eval grid --seeds 100 --out results.csv
    python scripts/headcount.py server --listen 0.0.0.0:7420 --http-port 8000

See app/cli.py for every sub-command.
"""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.cli import main


if __name__ == "__main__":
    sys.exit(main())
