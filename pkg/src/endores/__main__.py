import sys

from endores.cli import main

sys.exit(main())
