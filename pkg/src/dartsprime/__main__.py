import sys

from dartsprime.cli import main

sys.exit(main())
