import sys

from radarcoord.cli import main

sys.exit(main())
