#!/usr/bin/env python
"""
Target speaker extraction toolkit entry point
"""
import sys

from src.cli import main

if __name__ == "__main__":
    try:
        sys.exit(main(sys.argv[1:], configure=True))
    except KeyboardInterrupt:
        sys.exit(130)
