import sys

from iterblue.cli import main

sys.exit(main())
