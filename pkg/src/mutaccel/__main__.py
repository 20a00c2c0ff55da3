import sys

from mutaccel.cli import main

sys.exit(main())
