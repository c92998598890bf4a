#!/usr/bin/env -S python3 -S -E
# Always fails without printing a result line; exercises failure handling.
import sys

print("something went wrong before a result could be produced")
sys.exit(1)
