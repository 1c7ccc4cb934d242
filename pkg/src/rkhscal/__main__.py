import sys

from rkhscal.cli import main

sys.exit(main())
