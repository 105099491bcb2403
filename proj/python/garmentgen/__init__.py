"""Python bindings for the garmentgen C++ library."""

from ._garmentgen import *  # noqa: F401,F403
from ._garmentgen import __version__


def main():
    import sys

    code, out, err = run_cli(sys.argv[1:])  # noqa: F405
    sys.stdout.write(out)
    sys.stderr.write(err)
    raise SystemExit(code)
