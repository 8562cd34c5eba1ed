"""Benchmark the numeric kernels with and without numba compilation.

Runs the same workload twice in subprocesses — once normally (numba if
installed) and once with COTDRIVE_NO_NUMBA=1 forcing the pure-Python path —
and prints a timing comparison plus a result-parity check.

Usage: python benchmarks/bench_kernels.py [--episodes N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, time
from cotdrive import kernels
from cotdrive.agents import make_agent
from cotdrive.harness import run_suite
from cotdrive.scenario import default_config

episodes = {episodes}
out = {{"numba": kernels.NUMBA_ENABLED, "timings": {{}}, "checksums": {{}}}}

# warm-up triggers jit compilation so it is not billed to the timings
warm = run_suite(default_config("merge", max_sim_time=5.0),
                 make_agent("mpc"), base_seed=999, episodes=1)

for agent_id in ("mpc", "cot-scripted"):
    t0 = time.perf_counter()
    results = run_suite(default_config("merge"), make_agent(agent_id),
                        base_seed=0, episodes=episodes)
    out["timings"][agent_id] = time.perf_counter() - t0
    out["checksums"][agent_id] = [
        (r.outcome, repr(r.sim_time_elapsed)) for r in results]
print(json.dumps(out))
"""


def run_variant(no_numba: bool, episodes: int) -> dict:
    env = dict(os.environ)
    env["COTDRIVE_NO_NUMBA"] = "1" if no_numba else ""
    proc = subprocess.run(
        [sys.executable, "-c", WORKLOAD.format(episodes=episodes)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=3)
    args = parser.parse_args()

    compiled = run_variant(no_numba=False, episodes=args.episodes)
    fallback = run_variant(no_numba=True, episodes=args.episodes)

    print(f"{'workload':<16} {'compiled':>12} {'pure python':>12} {'speedup':>9}")
    for agent_id in compiled["timings"]:
        tc = compiled["timings"][agent_id]
        tf = fallback["timings"][agent_id]
        print(f"{agent_id:<16} {tc:>10.2f} s {tf:>10.2f} s {tf / tc:>8.1f}x")

    if not compiled["numba"]:
        print("note: numba unavailable, both runs used the pure-Python path")
    if compiled["checksums"] == fallback["checksums"]:
        print("parity: both paths produced identical episode outcomes and times")
        return 0
    print("parity: MISMATCH between compiled and pure-Python results")
    return 1


if __name__ == "__main__":
    sys.exit(main())
