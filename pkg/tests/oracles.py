"""Independent reference values the test suite checks against.

Everything here is computed by quadrature or closed form, never by the
code under test.
"""
import numpy as np
from scipy.integrate import quad
from scipy.stats import norm


def black_scholes_put(spot, strike, rate, vol, maturity):
    """European put under geometric Brownian motion."""
    if maturity <= 0:
        return max(strike - spot, 0.0)
    sq = vol * np.sqrt(maturity)
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sq
    d2 = d1 - sq
    return strike * np.exp(-rate * maturity) * norm.cdf(-d2) \
        - spot * norm.cdf(-d1)


def heston_put_cf(spot, strike, maturity, rate, v0, kappa, theta, xi, rho):
    """Semi-closed-form European put via the characteristic function.

    Stable-branch formulation; accurate to ~1e-8 for the parameter ranges
    used in the suite.
    """
    def phi(u, j):
        if j == 1:
            b, half = kappa - rho * xi, 0.5
        else:
            b, half = kappa, -0.5
        a = kappa * theta
        d = np.sqrt((rho * xi * u * 1j - b) ** 2
                    - xi ** 2 * (2 * half * u * 1j - u ** 2))
        g = (b - rho * xi * u * 1j - d) / (b - rho * xi * u * 1j + d)
        C = rate * u * 1j * maturity + a / xi ** 2 * (
            (b - rho * xi * u * 1j - d) * maturity
            - 2 * np.log((1 - g * np.exp(-d * maturity)) / (1 - g)))
        D = (b - rho * xi * u * 1j - d) / xi ** 2 * (
            (1 - np.exp(-d * maturity)) / (1 - g * np.exp(-d * maturity)))
        return np.exp(C + D * v0 + 1j * u * np.log(spot))

    def integrand(u, j):
        return (np.exp(-1j * u * np.log(strike)) * phi(u, j) / (1j * u)).real

    p1 = 0.5 + quad(integrand, 0, 200, args=(1,), limit=400)[0] / np.pi
    p2 = 0.5 + quad(integrand, 0, 200, args=(2,), limit=400)[0] / np.pi
    call = spot * p1 - strike * np.exp(-rate * maturity) * p2
    return call - spot + strike * np.exp(-rate * maturity)


def bermudan_put_two_dates(spot, strike, rate, vol, t1, t2):
    """Two-date Bermudan put by exact dynamic programming.

    Continuation at t1 is the closed-form European put over (t1, t2).  The
    date-1 value max(K - s, put(s)) has one kink at the exercise boundary;
    locating it and integrating each smooth piece adaptively against the
    t1 marginal gives the value to ~1e-9.  Includes the time-0 floor.
    """
    from scipy.optimize import brentq

    drift = (rate - 0.5 * vol * vol) * t1
    sq = vol * np.sqrt(t1)

    def value_at_t1(x):
        s = spot * np.exp(drift + sq * x)
        return max(strike - s,
                   black_scholes_put(s, strike, rate, vol, t2 - t1))

    def excess(x):
        s = spot * np.exp(drift + sq * x)
        return (strike - s) - black_scholes_put(s, strike, rate, vol,
                                                t2 - t1)

    lo, hi = -12.0, 12.0
    # immediate - continuation is strictly decreasing in the spot and
    # positive at zero when r > 0, so there is exactly one boundary
    pieces = [lo, hi]
    if excess(lo) > 0.0 > excess(hi):
        pieces = [lo, brentq(excess, lo, hi, xtol=1e-13), hi]
    total = 0.0
    for a, b in zip(pieces, pieces[1:]):
        total += quad(lambda x: value_at_t1(x) * norm.pdf(x), a, b,
                      limit=200, epsabs=1e-11, epsrel=1e-11)[0]
    value = np.exp(-rate * t1) * total
    return max(strike - spot, 0.0, value)


def exp_target_coefficient(loads, alpha):
    """Exact lambda_alpha for the smooth target exp(a . G).

    exp(aG) = exp(a^2/2) sum_k a^k / k! H_k(G) termwise, so with the
    1/alpha! convention the coefficient of H_alpha is
    exp(|a|^2/2) prod_i a_i^alpha_i / alpha_i!.
    """
    import math
    loads = np.asarray(loads, dtype=float)
    alpha = np.asarray(alpha, dtype=np.int64)
    value = float(np.exp(0.5 * np.dot(loads, loads)))
    for a, k in zip(loads, alpha):
        value *= a ** int(k) / math.factorial(int(k))
    return value
