#!/usr/bin/env -S python3 -S -E
# Rosenbrock objective. Reads the flat job-config JSON from argv[1] and
# prints the result line; -S -E keeps startup fast for benchmark runs.
import json
import sys

config = json.load(open(sys.argv[1]))
x, y = config["x"], config["y"]
score = (1.0 - x) ** 2 + 100.0 * (y - x * x) ** 2
print(f"#AUP_RESULT:{score!r}")
