import sys

from coopwatch.cli import main

sys.exit(main())
