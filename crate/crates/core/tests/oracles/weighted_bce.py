"""Independent value for the two-sample weighted BCE example.

Batch: (y=1, p=0.8, w=2), (y=0, p=0.3, w=1).
"""
import math

batch = [(1.0, 0.8, 2.0), (0.0, 0.3, 1.0)]
loss = -sum(w * (y * math.log(p) + (1 - y) * math.log(1 - p)) for y, p, w in batch) / len(batch)
print(repr(loss))
