"""Run the CLI as ``python -m semsearch``."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
