"""Build the bundled attention patterns and compare their sparsity.

Renders a small strided pattern as ASCII, then sweeps the pattern
families at n=256 and prints the fraction of zeroed connections under
each head configuration.
"""

import numpy as np

from sparselab.patterns import (
    HeadConfig,
    apply_head_config,
    connection_count,
    dense,
    fixed,
    sparsity_level,
    star,
    strided,
    window_global,
)

# --- a small pattern, drawn as one grid per family --------------------
pat = strided(12, 3)
print(f"strided(n=12, w=3): p={pat.p} families")
for l in range(pat.p):
    print(f"  family {l + 1}:")
    for k in range(pat.n):
        row = "".join(
            "#" if j in pat.sets[l][k] else "." for j in range(pat.n)
        )
        print(f"    position {k:2d}  {row}")

# --- sparsity at working size -----------------------------------------
n, w = 256, 16
print(f"\nsparsity at n={n}, w={w} (fraction of connections dropped):")
for name, p in (("dense", dense(n)), ("strided", strided(n, w)),
                ("fixed", fixed(n, w)), ("star", star(n, w)),
                ("window+global", window_global(n, 2, 1))):
    print(f"  {name:14s} p={p.p}  sparsity={sparsity_level(p):.4f}"
          f"  connections={connection_count(p)}")

# --- head configurations reshape the same family list -----------------
print(f"\nhead configurations on strided(n={n}, w={w}):")
base = strided(n, w)
seq = apply_head_config(base, HeadConfig.SEQUENTIAL)
uni = apply_head_config(base, HeadConfig.UNION)
multi = apply_head_config(base, HeadConfig.MULTIHEAD)
print(f"  sequential: p={seq.p}   sparsity={sparsity_level(seq):.4f}")
print(f"  union:      p={uni.p}   sparsity={sparsity_level(uni):.4f}")
print(f"  multihead:  {len(multi)} single-family parts, mean sparsity="
      f"{np.mean([sparsity_level(m) for m in multi]):.4f}")

# --- star keeps per-position work flat as n grows ---------------------
print("\nstar(n, 16) connections per position:")
for n in (64, 128, 256, 512):
    per = connection_count(star(n, 16)) / n
    print(f"  n={n:4d}  {per:.3f}")
