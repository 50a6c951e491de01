"""Finite-difference gradient check of every op, module and the full training chain."""
import sys

from posecast.cli import main

if __name__ == "__main__":
    sys.exit(main(["gradcheck", *sys.argv[1:]]))
