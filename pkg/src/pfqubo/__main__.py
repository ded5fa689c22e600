import sys

from pfqubo.harness.cli import main

sys.exit(main())
