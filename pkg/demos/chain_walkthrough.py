"""Walk the chain of lockstep classes that links all-zero inputs to all-one inputs.

Run: python demos/chain_walkthrough.py
"""

from symba.fsrp import make_protocol
from symba.lockstep import GeneratorStats, GroupLayout, chain_generator, differing_groups, replay_class, verify_chain

layout = GroupLayout(25, 5)  # five groups of five, one faulty member each
pf = make_protocol("benor-style", layout.n, layout.t)
E = 4

stats = GeneratorStats()
chain = list(chain_generator(layout, pf, E, stats=stats))
print(f"{len(chain)} classes at horizon E={E}; longest generator list {stats.max_list}")

# Neighbouring classes differ in exactly one group, so no single group can tell them apart.
for a, b in zip(chain[:6], chain[1:7]):
    print(f"class {a.index} -> {b.index}: only group {differing_groups(a, b)} changes")

# Somewhere between "everyone decides 0" and "everyone decides 1" a class leaves a group undecided.
witness = next(c for c in chain if c.undecided_groups())
print(f"first undecided class: {witness.index}, inputs {witness.inputs}, undecided groups {witness.undecided_groups()}")

# Replaying it on the real engine reproduces every validated multiset and the stalled group.
result = replay_class(layout, witness, pf)
print("good processors still undecided after replay:", result.undecided_good(layout))

report = verify_chain(chain, pf, layout)
print("chain properties:", report.as_dict()["properties"], f"({report.seconds:.1f}s)")
