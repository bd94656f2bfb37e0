#!/usr/bin/env python
"""Unitary learner's command-line utility."""
import sys


def main():
    """Run a pipeline command."""
    from unitary_learner.cli import main as run

    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
