import sys

from gridfed.cli import main

sys.exit(main())
