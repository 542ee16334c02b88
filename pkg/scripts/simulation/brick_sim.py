"""
Run Brick scenarios from a checkout without installing the package.

Configuration comes from .env (BRICK_* keys) and the command line, e.g.
    python scripts/simulation/brick_sim.py run --scenario baseline-censorship --seed 3
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

sys.path.insert(0, str(Path(__file__).resolve().parents[2]))

from brick.cli import main  # noqa: E402

# Load environment variables
load_dotenv()

if __name__ == "__main__":
    sys.exit(main())
