#!/usr/bin/env -S python3 -S -E
# Fixed-duration job for scaling measurements: sleeps `duration` seconds
# (default 1.0) and reports the time slept.
import json
import sys
import time

config = json.load(open(sys.argv[1]))
duration = float(config.get("duration", 1.0))
time.sleep(duration)
print(f"#AUP_RESULT:{duration!r}")
