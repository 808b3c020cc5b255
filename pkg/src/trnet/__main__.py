import sys

from trnet.cli import main

sys.exit(main())
