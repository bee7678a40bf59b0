"""Two-sided Pearson p-values by direct quadrature of the Student-t density."""
import math
from scipy.integrate import quad

def t_density(x, df):
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(df * math.pi)
    return c * (1 + x * x / df) ** (-(df + 1) / 2)

def p_value(r, n):
    df = n - 2
    t = abs(r) * math.sqrt(df / (1 - r * r))
    tail, _ = quad(t_density, t, math.inf, args=(df,), epsabs=1e-14, epsrel=1e-12, limit=500)
    return 2 * tail

GRID = [(0.5, 20), (0.0, 10), (0.1, 3), (0.9, 3), (-0.3, 4), (0.75, 5), (0.2, 8), (-0.6, 10),
        (0.45, 12), (0.33, 15), (0.8, 16), (-0.1, 25), (0.25, 30), (0.4, 40), (-0.55, 7),
        (0.15, 100), (0.05, 200), (0.99, 6), (0.6, 9), (-0.85, 11)]
for r, n in GRID:
    print(f"    {{{r}, {n}, {p_value(r, n)!r}}},")
