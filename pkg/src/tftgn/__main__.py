import sys

from tftgn.cli import main

sys.exit(main())
