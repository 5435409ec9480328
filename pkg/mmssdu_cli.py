"""Compatibility wrapper for the command line entry point."""

import sys

from mmssdu.scripts.cli import main

if __name__ == "__main__":
    sys.exit(main())
