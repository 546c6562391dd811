"""python -m reconsider"""
import sys

from reconsider.cli import main

sys.exit(main())
