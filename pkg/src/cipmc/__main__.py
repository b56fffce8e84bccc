import sys

from cipmc.cli import main

sys.exit(main())
