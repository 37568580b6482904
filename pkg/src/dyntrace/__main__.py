import sys

from dyntrace.cli import main

sys.exit(main())
