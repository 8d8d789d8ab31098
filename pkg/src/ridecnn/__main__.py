import sys

from ridecnn.cli import main

sys.exit(main())
