#!/usr/bin/env python3
"""Run the dimension sweep from the command line.

Thin wrapper over ``oomp.experiments.main``; see ``--help`` for flags or
pass ``--config sweep.json`` with the documented keys.
"""

import sys

from oomp.experiments import main

if __name__ == "__main__":
    sys.exit(main())
