import sys

from rasched.cli import main

sys.exit(main())
