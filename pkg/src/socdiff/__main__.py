import sys

from socdiff.experiment import main

sys.exit(main())
