"""Full default sweep: both CAM modes x five technology mixes, 20 runs each.

Writes one CSV per (mode, mix) point plus a matplotlib script into
results/full_sweep. Takes on the order of an hour single-core; pass
--jobs N to parallelize or --runs to trade precision for time. Any extra
arguments are forwarded to the coexsim CLI.
"""

import sys

from coexsim.harness import main

if __name__ == "__main__":
    sys.exit(main(["--out", "results/full_sweep", *sys.argv[1:]]))
