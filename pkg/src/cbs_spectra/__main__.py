"""Module entry point, same as the ``cbs-spectra`` console script."""

from __future__ import annotations

import sys

from .cli import main

sys.exit(main())
