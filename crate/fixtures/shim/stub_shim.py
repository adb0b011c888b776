"""Minimal runtime shim for tests.

Follows the executor's exit-code protocol without any RL dependencies:

    3   entrypoint does not compile (nothing is executed)
    4   entrypoint exited 0 but results/results.json is missing or invalid
    1   entrypoint failed (its own exit code or signal is reported on stderr)
    0   success

    python3 stub_shim.py code/main.py
"""
import json
import math
import os
import subprocess
import sys

EXIT_SYNTAX = 3
EXIT_CONTRACT = 4
RESULTS = os.path.join("results", "results.json")


def contract_error(msg):
    print(f"results contract: {msg}", file=sys.stderr)
    sys.exit(EXIT_CONTRACT)


def finite_list(doc, key, nonempty):
    v = doc.get(key)
    if not isinstance(v, list) or (nonempty and not v):
        contract_error(f"{key} must be a {'non-empty ' if nonempty else ''}list")
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            contract_error(f"{key} holds a non-finite or non-numeric value: {x!r}")


def check_results():
    try:
        with open(RESULTS) as f:
            doc = json.load(f)
    except FileNotFoundError:
        contract_error(f"{RESULTS} was not written")
    except ValueError as e:
        contract_error(f"{RESULTS} is not JSON: {e}")
    if not isinstance(doc, dict):
        contract_error("top level must be an object")
    finite_list(doc, "episode_returns", True)
    finite_list(doc, "eval_returns", False)
    if not isinstance(doc.get("model_path"), str):
        contract_error("model_path must be a string")


def main():
    if len(sys.argv) != 2:
        print("usage: stub_shim.py <entrypoint>", file=sys.stderr)
        sys.exit(2)
    entry = sys.argv[1]
    try:
        with open(entry, "rb") as f:
            compile(f.read(), entry, "exec")
    except (SyntaxError, ValueError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        sys.exit(EXIT_SYNTAX)
    rc = subprocess.call([sys.executable, entry])
    if rc != 0:
        print(f"entrypoint exited with {rc}", file=sys.stderr)
        sys.exit(1)
    check_results()


if __name__ == "__main__":
    main()
