# coding: utf-8

# # Temporal CSR and neighbor sampling
#
# A walk through the storage layout and the two sampling strategies on a
# toy stream, then a check that the threaded builder matches the
# sequential one on a skewed random graph.

# In[1]:

import time

import numpy as np

from tftgn.events import EventStream
from tftgn.sampler import sample_batch, sample_random, sample_recent
from tftgn.sequence import build_mask, build_sequence
from tftgn.synthetic import zipf_stream
from tftgn.tcsr import build_parallel, build_sequential


# Three events. Edge ids follow the chronological order of the stream.

# In[2]:

stream = EventStream(
    src=np.array([0, 1, 0]),
    dst=np.array([1, 2, 2]),
    timestamps=np.array([1.0, 2.0, 3.0]),
    num_nodes=3,
)
g = build_sequential(stream, reverse=True)
print("indptr   ", g.indptr)
print("indices  ", g.neighbor_ids)
print("edge ids ", g.edge_ids)
print("times    ", g.timestamps)


# Each node's slice is sorted by (time, edge id), so "everything strictly
# before t" is a prefix found by binary search.

# In[3]:

for u in range(3):
    print(u, g.node_slice(u))


# The recent strategy keeps the last k entries of that prefix. Note the
# strict inequality: an event at exactly t is excluded.

# In[4]:

print(sample_recent(g, 0, 3.0, 5).neighbors)
print(sample_recent(g, 0, 3.5, 5).neighbors)
print(sample_recent(g, 0, 1.0, 5).neighbors)


# The random strategy draws k distinct entries without replacement. It is
# keyed by the seed, so reruns agree.

# In[5]:

big = build_parallel(zipf_stream(50_000, 500, seed=0), reverse=True, num_threads=4)
hub = int(np.argmax(np.diff(big.indptr)))
a = sample_random(big, hub, 5e5, 8, seed=11)
b = sample_random(big, hub, 5e5, 8, seed=11)
print(hub, a.edge_ids, a == b)


# # From samples to sequences
#
# A sample becomes one row of length l: neighbors first, the query itself
# as the target row, padding after. Index 0 is reserved for padding, so
# every id is shifted by one.

# In[6]:

sample = sample_recent(g, 2, 10.0, 4)
seq = build_sequence(sample, l=6, num_edges=len(stream))
print("nodes ", seq.node_index[0])
print("edges ", seq.edge_index[0])
print("deltas", seq.time_delta[0])
print("target", seq.target_row[0])


# The causal mask is additive: 0 where row i may look at column j, -inf
# elsewhere. Row i sees rows 0..i, and padding rows and columns are masked
# out entirely. Shown here as 1 = visible.

# In[7]:

print(np.isfinite(build_mask(seq, "causal")[0]).astype(int))


# # Threaded build on a skewed graph
#
# Popularity follows a Zipf law, so a few slices are very long. The
# threaded builder must reproduce the sequential arrays bit for bit.

# In[8]:

zs = zipf_stream(500_000, 20_000, seed=3)
t0 = time.perf_counter()
seq_g = build_sequential(zs, reverse=True)
t1 = time.perf_counter()
par_g = build_parallel(zs, reverse=True, num_threads=4)
t2 = time.perf_counter()
same = all(
    np.array_equal(getattr(seq_g, name), getattr(par_g, name))
    for name in ("indptr", "neighbor_ids", "edge_ids", "timestamps")
)
print(f"sequential {t1 - t0:.3f}s  threaded {t2 - t1:.3f}s  identical={same}")


# Batched sampling uses the same threads and gives the same answers as
# one query at a time.

# In[9]:

rng = np.random.default_rng(0)
nodes = rng.integers(0, zs.num_nodes, 1000)
times = rng.random(1000) * 1e6
batch = sample_batch(par_g, nodes, times, 10, num_threads=4)
print(all(s == sample_recent(par_g, u, t, 10) for s, u, t in zip(batch, nodes, times)))
