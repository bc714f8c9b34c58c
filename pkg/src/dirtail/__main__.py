import sys

from dirtail.cli import main

sys.exit(main())
