#!/usr/bin/env python3
"""
Launcher script for the shoptoken search service.

Usage:
    python run_service.py --snapshot snapshot/ [--config engine.json] [--port 8080]
"""

import argparse
import logging
import os
import sys

from shoptoken.EngineConfig import EngineConfig
from shoptoken.errors import ShopTokenError
from shoptoken.service import serve_search


def main():
    """Launch the search service."""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    parser = argparse.ArgumentParser(description='shoptoken search service')
    parser.add_argument('--snapshot', default='snapshot', help='Snapshot directory (default: snapshot)')
    parser.add_argument('--config', help='EngineConfig JSON file')
    parser.add_argument('--host', help='Bind address (default: from config)')
    parser.add_argument('--port', type=int, help='Port (default: from config)')
    args = parser.parse_args()

    if not os.path.isdir(args.snapshot):
        print(f"Error: snapshot directory {args.snapshot} not found. Build one with: shoptoken build")
        sys.exit(1)

    print("Starting shoptoken search service...")
    print("POST /v1/search, GET /v1/health. Press Ctrl+C to stop.")
    try:
        serve_search(args.snapshot, EngineConfig.load(args.config), args.host, args.port)
    except KeyboardInterrupt:
        print("\nService stopped by user")
    except ShopTokenError as e:
        print(f"Error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
