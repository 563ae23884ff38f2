#!/usr/bin/env python3
"""
pimsbo CLI - Entry point for the pimsbo application
"""

from pimsbo.core import cli

if __name__ == '__main__':
    cli()
