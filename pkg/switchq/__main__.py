__copyright__ = "Copyright (C) 2026 switchq developers"

import sys

from switchq.cli import CLI


def main():
    sys.exit(CLI().run())


if __name__ == "__main__":
    main()
