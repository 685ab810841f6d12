import sys

from xaitu.harness.cli import main

sys.exit(main())
