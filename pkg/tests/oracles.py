"""Reference values computed independently of the package.

Everything here uses mpmath at elevated precision and formulations that
differ from the package code paths (cotangent form of the matching
condition, substitution u = N(Z) for the action integral).
"""
import mpmath as mp

mp.mp.dps = 40


def step_eigenvalues(n_layer, n_halfspace, thickness, xi):
    """Roots of ``q cot(q h) = -(n_halfspace / n_layer) kappa`` on each cotangent branch."""
    a, b, h, xi = (mp.mpf(v) for v in (n_layer, n_halfspace, thickness, xi))
    q_max = xi * mp.sqrt(b / a - 1)

    def kappa(q):
        return mp.sqrt(max(xi**2 - a * (q**2 + xi**2) / b, 0))

    def f(q):
        return q * mp.cos(q * h) + (b / a) * kappa(q) * mp.sin(q * h)

    roots = []
    k = 1
    while (k - mp.mpf(1) / 2) * mp.pi < q_max * h:
        lo = (k - mp.mpf(1) / 2) * mp.pi / h
        hi = min(k * mp.pi / h, q_max)
        if f(lo) * f(hi) < 0:
            for _ in range(200):
                mid = (lo + hi) / 2
                if f(lo) * f(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            q = (lo + hi) / 2
            roots.append(a * (q**2 + xi**2))
        k += 1
    return [float(r) for r in roots]


def exponential_action(E, n_inf=4, n_s=1, delta=0.5):
    """``V(E)`` for ``N = n_inf - (n_inf - n_s) exp(Z / delta)`` with ``E`` below the clip level.

    With ``u = N(Z)``: ``dZ = -delta du / (n_inf - u)``.
    """
    E = mp.mpf(E)
    return float(mp.quad(lambda u: mp.sqrt(E / u - 1) * delta / (n_inf - u), [n_s, E]))


def planted_action(E, n0=1, c=0.2):
    """``K f`` for ``f(u) = c / sqrt(u)`` from ``n0``: ``c E (acos(sqrt(n0/E)) - sqrt(n0/E) sqrt(1 - n0/E))``."""
    E = mp.mpf(E)
    s = mp.sqrt(n0 / E)
    return float(c * E * (mp.acos(s) - s * mp.sqrt(1 - s**2)))


if __name__ == "__main__":
    for xi in (2, 5, 10, 20):
        print(xi, [repr(v) for v in step_eigenvalues(1, 4, 1, xi)])
    for E in (1.5, 2.0, 3.0, 3.5):
        print(E, repr(exponential_action(E)))
