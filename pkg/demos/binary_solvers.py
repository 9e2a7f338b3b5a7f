"""Tour of the binary MRF solvers behind fusion moves and the occlusion step.

Run:
    python3 demos/binary_solvers.py
"""
import itertools

import numpy as np

from candflow.discrete import UNLABELED, BinaryMRF, is_submodular, max_flow_solve, qpbo_solve


def brute_force(mrf):
    best = min(itertools.product((0, 1), repeat=mrf.n_nodes), key=mrf.energy)
    return np.array(best), mrf.energy(best)


def show(title, mrf):
    print(title)
    print(f"   submodular: {is_submodular(mrf)}")
    if is_submodular(mrf):
        labels, e = max_flow_solve(mrf)
        print(f"   max-flow labels {labels.tolist()}, energy {e:g}")
    q = qpbo_solve(mrf)
    shown = ["?" if v == UNLABELED else int(v) for v in q]
    print(f"   QPBO partial labeling {shown}")
    labels, e = brute_force(mrf)
    print(f"   brute force optimum {labels.tolist()}, energy {e:g}")


def main():
    # a 4-node chain: nodes prefer their unary label, edges reward agreement
    potts = [[0.0, 1.0], [1.0, 0.0]]
    chain = BinaryMRF(unary=[[0, 3], [1, 0], [0, 0.5], [2, 0]],
                      edges=[[0, 1], [1, 2], [2, 3]], pairwise=[potts, potts, potts])
    show("1. Submodular chain: min cut is exact and QPBO labels every node.", chain)

    # every edge rewards disagreement around an odd cycle: no labeling satisfies all of them
    anti = [[1.0, 0.0], [0.0, 1.0]]
    cycle = BinaryMRF(np.zeros((3, 2)), [[0, 1], [1, 2], [2, 0]], [anti, anti, anti])
    show("2. Frustrated triangle: QPBO leaves all nodes unlabeled; any full labeling costs 1.", cycle)

    # one strong unary breaks the symmetry; persistence fixes the nodes it can
    biased = BinaryMRF([[0, 5], [0, 0], [0, 0], [0.2, 0]], [[0, 1], [1, 2], [2, 0], [2, 3]],
                       [anti, anti, anti, potts])
    show("3. Mixed energy: labeled nodes agree with a global optimum (persistence).", biased)


if __name__ == "__main__":
    main()
