"""Check the structural conditions sparse patterns must satisfy.

Every pattern is tested for self-inclusion (each position attends to
itself somewhere), an information route gamma that visits every
position, and the number of hops s needed to pull any position's value
into any other position.  A deliberately broken pattern shows what a
refutation looks like.
"""

from sparselab.patterns import SparsityPattern, dense, star, strided, window_global
from sparselab.verify import assumption_report, report_to_json_dict


def show(label, pat, **kw):
    rep = assumption_report(pat, **kw)
    if rep.gamma == tuple(range(pat.n)):
        gamma = "identity"
    elif rep.gamma_status == "proven":
        gamma = "reordered"
    else:
        gamma = rep.gamma_status
    print(f"  {label:26s} self_inclusion={rep.self_inclusion!s:5s} "
          f"gamma={gamma:9s} s={rep.coverage_s} holds={rep.holds}")
    return rep


print("structural reports:")
show("dense(16)", dense(16))
show("strided(64, 4)", strided(64, 4))
show("star(64, 16)", star(64, 16))
show("window_global(64, 2, 1)", window_global(64, 2, 1))

# Shifted singleton sets: nobody attends to itself, so the report
# refutes self-inclusion immediately.
n = 8
broken = SparsityPattern(n, (tuple(((k + 1) % n,) for k in range(n)),))
print("\na broken pattern (each position looks one step ahead only):")
rep = show("shifted singletons", broken)

print("\nJSON form of that report:")
print(report_to_json_dict(rep))

# A pattern the search cannot settle cheaply: two cliques bridged only
# through the first and last positions.  With a tiny node budget the
# route search gives up and reports unknown instead of guessing.
half = 15
n = 2 * half
sets = tuple(
    tuple(range(n)) if k in (0, n - 1)
    else tuple(range(half)) if k < half
    else tuple(range(half, n))
    for k in range(n)
)
print("\nbudget exhaustion (bridged cliques, route budget 10):")
show("bridged cliques", SparsityPattern(n, (sets,)), budget=10)
