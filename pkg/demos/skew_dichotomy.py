"""Recurrence versus transience of centred skew products over a full shift.

The decay exponent of box correlations tracks D / 2. Dimension 1 returns
to a bounded box and dimension 3 escapes; dimension 2 is the critical case,
where return counts grow only logarithmically, so no verdict is printed.
"""
from anosovlab import skewflow as sf


def main(trials=20_000, horizon=300):
    for D in (1, 2, 3):
        cm = sf.coin_model(D)
        fit = sf.mixing_exponent(cm.sft, cm.chain, cm.K, 2.0, horizon, trials, seed=D)
        line = f"D = {D}: alpha = {fit.alpha:.3f} (target {D / 2})"
        if D != 2:
            rs = sf.recurrence_stats(cm.sft, cm.chain, cm.K, 2.0, horizon, trials, seed=D)
            line += f", verdict {rs.verdict}"
        print(line)


if __name__ == "__main__":
    main()
