#!/usr/bin/env -S python3 -S -E
# Budget-sensitive objective: rosenbrock(x, y) + 10/n_iterations, so the
# score strictly improves with training budget. Reports the epochs it ran
# (and any resume handle) back through the aux string.
import json
import sys

config = json.load(open(sys.argv[1]))
x, y = config["x"], config["y"]
epochs = config.get("n_iterations", 1)
base = (1.0 - x) ** 2 + 100.0 * (y - x * x) ** 2
score = base + 10.0 / epochs
aux = f"epochs={epochs}"
if "resume_from" in config:
    aux += f";resume_from={config['resume_from']}"
print(f"#AUP_RESULT:{score!r},{aux}")
