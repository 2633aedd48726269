import sys

from qinq_access_sim.cli import main

if __name__ == "__main__":
    sys.exit(main())
