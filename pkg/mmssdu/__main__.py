import sys

from mmssdu.scripts.cli import main

sys.exit(main())
