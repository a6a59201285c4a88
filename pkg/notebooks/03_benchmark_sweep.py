# coding: utf-8

# # Conversion and sampling timings
#
# Runs the same sweep as `tftgn bench` and summarizes it. The speedup
# from threads depends on the machine: on one core the threaded build is
# slower than the sequential one because of pool overhead.

# In[1]:

import csv
import io
import os
from contextlib import redirect_stdout

from tftgn.cli import main

cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
threads = sorted({1, 2, max(1, min(cores, 8))})
print("usable cores:", cores, "threads swept:", threads)


# In[2]:

buf = io.StringIO()
with redirect_stdout(buf):
    main(["bench", "--edges", "400000", "--nodes", "20000", "--repeat", "3",
          "--threads", *map(str, threads), "--batch-sizes", "200", "2000", "--ks", "10", "20"])
rows = list(csv.DictReader(l for l in buf.getvalue().splitlines() if not l.startswith("[")))


# Conversion: median of the repeats, relative to the sequential build.

# In[3]:

base = next(float(r["median_seconds"]) for r in rows if r["phase"] == "convert_sequential")
print(f"sequential        {base * 1e3:8.1f} ms")
for r in rows:
    if r["phase"] == "convert_parallel":
        sec = float(r["median_seconds"])
        print(f"parallel t={r['threads']:<3s}    {sec * 1e3:8.1f} ms   speedup {base / sec:5.2f}x")


# Sampling throughput in queries per second.

# In[4]:

for r in rows:
    if r["phase"] == "sample":
        qps = int(r["batch_size"]) / float(r["median_seconds"])
        print(f"t={r['threads']:<3s} batch={r['batch_size']:<5s} k={r['k']:<3s} {qps:12,.0f} q/s")
