"""Fraction of Gibbs rays that stay near a direction in the limit cone.

Runs the survey for products of two and four Schottky factors; the
three-factor case is reported but carries no verdict.
"""
from anosovlab import anosovrep as ar
from anosovlab import skewflow as sf


def main(samples=200, N=400):
    for k in (2, 3, 4):
        s = sf.conical_mass_survey(ar.schottky_product(k), [1.0] * k, 0.5, samples, N, seed=0)
        print(f"|theta| = {k}: label {s.label}, verdict {s.verdict}")
        for n, f in sorted(s.fractions.items()):
            print(f"    N = {n:5d}  fraction {f:.3f}")


if __name__ == "__main__":
    main()
