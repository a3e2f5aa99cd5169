import sys

from gridmdp.cli import main

sys.exit(main())
