"""How a forest turns into one boolean formula.

Each tree becomes a formula over the state bits. The forest vote is then a
sorting network over those formulas, with OR as max and AND as min; the
middle output of the sorted sequence is the majority.
"""

import itertools

import numpy as np

from dsama.compile import formula_text, majority_gate, tree_to_formula
from dsama.forest import DecisionNode, LeafNode, Tree
from dsama.formula import Var, evaluate_batch, metrics

# a single decision node: high branch says 0, low branch says 1
t = Tree.from_root(DecisionNode(2, LeafNode(0.9, 0.1), LeafNode(0.1, 0.9)))
print("tree  ->", formula_text(tree_to_formula(t)))

# majority of free inputs, checked against counting
for T in range(1, 8):
    gate, stats = majority_gate([Var(i) for i in range(T)])
    X = np.array(list(itertools.product([0, 1], repeat=T)), dtype=bool)
    exact = np.array_equal(evaluate_batch(gate, X), X.sum(1) > T // 2)
    m = metrics(gate)
    print(f"T={T}: {stats.comparator_count:3d} comparators over {stats.padded_inputs} slots, "
          f"tree size {m.node_count:5d}, exact={exact}")

print("T=3 ->", formula_text(majority_gate([Var(0), Var(1), Var(2)])[0]))
