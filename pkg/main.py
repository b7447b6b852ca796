"""
Main entry point for the segmentation pipeline.

    python main.py run --config configs/duke.yaml
"""

from src.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
