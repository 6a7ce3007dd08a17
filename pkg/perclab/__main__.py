import sys
from perclab.cli import main

sys.exit(main())
