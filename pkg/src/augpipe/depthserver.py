"""Entry point for the oracle depth server: ``python -m augpipe.depthserver``."""

import sys

from augpipe.depthio import main

if __name__ == "__main__":
    sys.exit(main())
