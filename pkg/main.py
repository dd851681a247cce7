"""Thin wrapper entry point that delegates to fiberphoton/cli.py."""
from fiberphoton.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
