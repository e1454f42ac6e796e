"""Steer live randomized runs into an undecided class and compare with benign scheduling.

Run: python demos/steer_one_run.py
"""

from symba.adversary import attack_run, baseline_run, class_oracle
from symba.fsrp import make_protocol
from symba.lockstep import GroupLayout, find_witness

layout = GroupLayout(25, 5)
pf = make_protocol("benor-style", layout.n, layout.t)
witness = find_witness(layout, pf)
print(f"target class {witness.index} (E={witness.E}), group inputs {witness.inputs}")

oracle = class_oracle(witness, layout, pf)
for k, row in enumerate(oracle, 1):
    print(f"  round {k} fill success chance per group: {[round(float(p), 3) for p in row]}")

for seed in range(8):
    a = attack_run(witness, layout, pf, seed)
    b = baseline_run(witness.inputs, layout, pf, seed)
    escape = "stayed in class" if a.first_escape_round is None else f"escaped at round {a.first_escape_round}"
    print(f"seed {seed}: attack {a.rounds_used:2d} rounds ({escape}); benign {b.rounds_used:2d} rounds")
