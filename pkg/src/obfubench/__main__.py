import sys

from obfubench.cli import main

sys.exit(main())
