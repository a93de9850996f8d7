"""Denoising-based completion of sparse LiDAR scans."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"


def _console_main():
    import sys

    code, out, err = cli_main(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
