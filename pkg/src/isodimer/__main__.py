import sys

from isodimer.cli import main

sys.exit(main())
