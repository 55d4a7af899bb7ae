import sys

from egoctl.cli import main

sys.exit(main())
