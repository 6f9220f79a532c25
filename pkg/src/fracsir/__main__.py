import sys

from fracsir.cli import main

sys.exit(main())
