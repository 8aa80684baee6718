import sys

from erpbvi.cli import main

sys.exit(main())
