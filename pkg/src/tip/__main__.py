import sys

from tip.cli import main

sys.exit(main())
