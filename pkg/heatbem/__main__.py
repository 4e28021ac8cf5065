import sys

from heatbem.app import main

sys.exit(main())
