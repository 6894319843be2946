import sys

from causalgnn.cli import main

sys.exit(main())
