import sys

from shinzettl.cli import main

sys.exit(main())
