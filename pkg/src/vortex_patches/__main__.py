"""Entry point for running vortex-patches as a module."""

from vortex_patches.cli import main

if __name__ == "__main__":
    main()
