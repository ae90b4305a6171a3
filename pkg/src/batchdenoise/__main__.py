import sys

from batchdenoise.cli import main

sys.exit(main())
