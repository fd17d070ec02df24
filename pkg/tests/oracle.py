"""Independent scalar reference for the robot case study.

Written with plain ``math`` and no package imports, and frozen before the
implementation was finished. The numbers in FROZEN were produced by this
module and are asserted verbatim so that a later edit to either side shows up.
"""

from math import atan, cos, exp, pi, sin, sqrt

H1, H2, H3, C_Z, LAM, BETA0, G0 = 1.0, 0.2, 1.0, 2.0, 1.0, 0.1, 0.5
RHO, RHO1, RHO2 = 8.0, 4.0, 0.5
CENTER, RADIUS, ALPHA = (5.0, 3.0), 2.0, 10.0


def sgn(v: float) -> float:
    return 1.0 if v >= 0 else -1.0


def ups(z: float) -> float:
    return H1 + H2 * atan(H3 * z)


def h(x) -> float:
    return (x[0] - CENTER[0]) ** 2 + (x[1] - CENTER[1]) ** 2 - RADIUS**2


def psi(x, z: float) -> float:
    return H2 * H3 * h(x) * sgn(z) / (C_Z * (1 + H3 * H3 * z * z))


def coeffs(x, z: float, u):
    """(a, b, c) for s = x, E = G_hat = I and max-abs robustness margins."""
    p = psi(x, z)
    U = ups(z)
    d = [x[0] - CENTER[0], x[1] - CENTER[1]]
    a = [-2 * p * x[i] + 2 * U * d[i] for i in range(2)]
    g1 = 2 * max(abs(d[0]), abs(d[1])) * RHO1
    b = 2 * (p * max(abs(x[0]), abs(x[1])) + U * max(abs(d[0]), abs(d[1]))) * RHO2
    c = -ALPHA * U * h(x) + 2 * LAM * p * sqrt(abs(z)) - U * (2 * (d[0] * u[0] + d[1] * u[1]) - g1)
    return a, b, c


def z_dot(s_j: float, u_s: float, z: float) -> float:
    return -2 * (LAM * sqrt(abs(z)) + s_j * u_s + abs(s_j) * RHO2 * abs(u_s)) / C_Z * sgn(z)


def reaching_bound(s0, z0: float) -> float:
    v0 = 0.5 * sum(v * v for v in s0) + 0.5 * C_Z * abs(z0)
    mu = min(G0 * BETA0, LAM / sqrt(C_Z))
    return sqrt(2 * v0) / mu


def robot_xdot(t: float, x, u):
    th = (0.5 * sin(t), 0.5 * exp(-t) * cos(t))
    de = (4 * cos(t), 3 * sin(x[1]))
    return [(1 + th[0]) * u[0] + de[0], (1 + th[1]) * u[1] + de[1]]


FROZEN = {
    "ups_m10": 0.705774465139253,
    "ups_sup": H1 + pi * H2 / 2,
    "psi_77_m10": -0.015841584158415842,
    "a_77": [3.044880038774834, 5.867977899331846],
    "b_77": 2.712206771448101,
    "c_77": -21.838044501660676,
    "a_risky": [2.5499445101448748, 1.6995141618787621],
    "b_risky": 1.2658158194288731,
    "c_risky": 39.66026682437272,
    "us_risky": 91.44666451879557,
    "zdot_risky": 579.2762641285806,
    "zdot_free": 3.1622776601683795,
    "reach_bound": 217.2556098240043,
    "xdot0": [-4.1, -10.17904020384363],
}
