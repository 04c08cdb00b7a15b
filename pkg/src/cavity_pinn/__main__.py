import sys

from cavity_pinn.cli import main

sys.exit(main())
