"""Critical exponents along the Manhattan curve of a generic pair.

Prints the entropy and critical point in a few directions of the dual
cone, then checks the self-product against the line
phi0 + phi1 = h.
"""
import numpy as np

from anosovlab import anosovrep as ar
from anosovlab import critical as cr


def main():
    pair = cr.model(ar.generic_pair(), m=8)
    print("direction      h_psi    phi at the critical point")
    for t in np.linspace(0.1, 0.9, 5):
        cp = cr.critical_point(pair, [t, 1 - t])
        print(f"({t:.1f}, {1 - t:.1f})   {cp.scale:8.4f}   {np.round(cp.phi.vector, 4)}")

    prod = cr.model(ar.self_product(ar.schottky_sl2()), m=8)
    h = cr.entropy_of_functional(cr.model(ar.schottky_sl2(), 8), [1.0])
    for t in (0.2, 0.5, 0.8):
        cp = cr.critical_point(prod, [t, 1 - t])
        print(f"self-product: phi0 + phi1 = {cp.phi.vector.sum():.6f}  (h = {h:.6f})")


if __name__ == "__main__":
    main()
