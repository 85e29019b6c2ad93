"""Module entry point so ``python -m ghostlab`` runs the CLI."""

import sys

from ghostlab.cli import main

sys.exit(main())
