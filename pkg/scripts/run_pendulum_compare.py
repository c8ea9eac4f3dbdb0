#!/usr/bin/env python3
"""Run all three schemes on the pendulum benchmark and print the summary table.

Equivalent to:  blockmpc compare --config configs/pendulum.cfg --out out/compare
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from blockmpc.cli import main

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "out", "compare")
    sys.exit(main(["compare", "--config", os.path.join(ROOT, "configs", "pendulum.cfg"),
                   "--out", out]))
