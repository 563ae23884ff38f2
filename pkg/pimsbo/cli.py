#!/usr/bin/env python3
"""
pimsbo CLI - Command-line interface for the pimsbo application
"""

from pimsbo.core import cli


def main():
    """Entry point for the pimsbo command-line application"""
    cli()


if __name__ == '__main__':
    main()
