import sys

from ltcnet.cli import main

sys.exit(main())
