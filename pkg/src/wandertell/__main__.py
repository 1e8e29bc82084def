"""Allow running the CLI as `python -m wandertell`."""

import sys

from .cli import main

sys.exit(main())
