import sys

from .shim import serve

if __name__ == "__main__":
    sys.exit(serve())
