#!/usr/bin/env python3
"""Single swing-up run of the move-blocked controller (scheme C).

Equivalent to:  blockmpc simulate --config configs/pendulum.cfg --scheme C --out out/swingup
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from blockmpc.cli import main

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")

if __name__ == "__main__":
    scheme = sys.argv[1] if len(sys.argv) > 1 else "C"
    out = sys.argv[2] if len(sys.argv) > 2 else os.path.join(ROOT, "out", f"swingup_{scheme}")
    sys.exit(main(["simulate", "--config", os.path.join(ROOT, "configs", "pendulum.cfg"),
                   "--scheme", scheme, "--out", out]))
