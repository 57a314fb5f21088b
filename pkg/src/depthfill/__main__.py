import sys

from depthfill.cli import main

sys.exit(main())
