import sys

from boxfinder.cli import main

sys.exit(main())
