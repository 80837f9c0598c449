"""
DualPL - Main Entry Point

Semi-supervised domain generalization: one labeled source domain, several
unlabeled source domains, an unseen target domain.

Run with: python main.py train --config configs/default.cfg
"""

import sys

from src.experiments.cli import main

if __name__ == "__main__":
    sys.exit(main())
