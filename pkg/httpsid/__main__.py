import logging
import sys

from . import config
from .cli import main as cli_main

log = logging.getLogger("httpsid")


def main():
    log.info(f"all configs: {config().display()}")
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
