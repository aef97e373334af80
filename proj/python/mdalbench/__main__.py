# SPDX-License-Identifier: Apache-2.0
"""``python -m mdalbench`` runs the same CLI as the native executable."""

import sys

from ._core import cli_main


def main() -> int:
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
