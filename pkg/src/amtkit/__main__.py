"""Module entry point: python -m amtkit."""

from amtkit.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
