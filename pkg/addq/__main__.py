import sys

from addq.cli import main

sys.exit(main())
