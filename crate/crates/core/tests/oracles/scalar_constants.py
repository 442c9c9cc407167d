"""Independent high-precision reference values for the scalar inequalities.

Run with `python3 scalar_constants.py`; the printed numbers are frozen in
`tests/oracles.rs`.
"""
from mpmath import mp, mpf, log, exp, findroot, factorial, fabs

mp.dps = 40

# root of ln(1+x)^2 = x - ln(1+x) on x > 0
xc = findroot(lambda x: log(1 + x) ** 2 - (x - log(1 + x)), 5)
print("log crossing", mp.nstr(xc, 20))


def inv_l(m, n, l, x_crit):
    f = lambda x: exp(n * x) / n - exp(m * x) / m + (n - m) / (m * n)
    c = (n ** (l - 1) - m ** (l - 1)) / factorial(l)
    h = lambda x: c * fabs(x) ** l
    # first sign change of f - h scanning from 0 towards negative x
    step = mpf(1) / 1000
    x = -step
    while f(x) - h(x) > 0:
        x -= step
    x_int = findroot(lambda t: f(t) - h(t), (x, x + step), solver="bisect")
    if x_int <= x_crit:
        return c, x_int, "direct"
    return f(x_int) / fabs(x_crit) ** l, x_int, "flattened"


for l in (3, 4):
    val, xi, branch = inv_l(mpf(3) / 8, mpf(1) / 2, l, mpf(-5))
    print(f"l={l} 1/L", mp.nstr(val, 20), "x_int", mp.nstr(xi, 15), branch)


def gap_f(r, m, n):
    return r ** n / n - r ** m / m + (n - m) / (m * n)


def gap_g(r, m, n):
    return -(r ** (m / 2) - 1) ** 2 - (r ** (n / 2) - 1) ** 2 + n * gap_f(r, m, n)


m, n = mpf("0.6"), mpf("0.9")
for x in ("-0.999", "-0.5", "1e-6", "0.5", "10", "1e6"):
    # the library sees 1 + x rounded to a double
    r = mpf(1.0 + float(x))
    print(f"gap x={x}", mp.nstr(gap_f(r, m, n), 20), mp.nstr(gap_g(r, m, n), 20))

# alternative scale with theta_ref = vartheta_ref = 300, c_V = 4180
for th, mm in (("250", "0.3"), ("400", "0.7")):
    th, mm = mpf(th), mpf(mm)
    u = (th / 300) ** (1 - mm)
    print(f"alt theta={th} m={mm}", mp.nstr(300 * u, 20), mp.nstr(4180 / mm * (u ** (mm / (1 - mm)) - 1), 20))
