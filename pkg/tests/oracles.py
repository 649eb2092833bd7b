"""Independent dense reference implementations used as test oracles.

Qubit order: matter 1, link (1,2), matter 2, link (2,3), ..., link (L,1);
the first qubit is the most significant bit, |0> = spin up.
"""
import itertools
from functools import reduce

import numpy as np

I2 = np.eye(2)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.diag([1.0, -1.0])
SP = np.array([[0.0, 1.0], [0.0, 0.0]])
SM = SP.T


def op_on(L, ops):
    """Dense kron of {qubit: 2x2} with identities elsewhere."""
    return reduce(np.kron, [ops.get(q, I2) for q in range(2 * L)])


def m(j, L):
    return 2 * ((j - 1) % L)


def link(j, L):
    return 2 * ((j - 1) % L) + 1


def h_j(L):
    out = 0
    for j in range(1, L + 1):
        t = op_on(L, {m(j, L): SM, link(j, L): SP, m(j + 1, L): SM})
        out = out + t + t.T
    return out


def h0(L, mu):
    return h_j(L) + 0.5 * mu * sum(op_on(L, {m(j, L): Z}) for j in range(1, L + 1))


def gauss(j, L):
    s = op_on(L, {m(j, L): Z}) + op_on(L, {link(j - 1, L): Z}) + op_on(L, {link(j, L): Z}) + np.eye(4**L)
    return 0.5 * (-1) ** j * s


def local_error(L):
    out = 0
    for j in range(1, L + 1):
        pp = op_on(L, {m(j, L): SP, m(j + 1, L): SP})
        out = out + op_on(L, {link(j, L): X}) + pp + pp.T
    return out


def extreme_error(L):
    prod = sum(reduce(np.kron, [I2 + xi * X] * (2 * L)) for xi in (1, -1))
    return local_error(L) + prod


def brute_sectors(L):
    """Set of g vectors over all product states, by direct enumeration."""
    out = set()
    for bits in itertools.product((1, -1), repeat=2 * L):
        matter = bits[0::2]
        links = bits[1::2]
        g = tuple(
            int((-1) ** j * (matter[j - 1] + links[(j - 2) % L] + links[j - 1] + 1) / 2) for j in range(1, L + 1)
        )
        out.add(g)
    return out


def brute_compliant(c, L):
    """True if sum_j c_j g_j != 0 for every allowed g != 0 (integer c)."""
    c = [int(x) for x in c]
    for g in brute_sectors(L):
        if any(g) and sum(ci * gi for ci, gi in zip(c, g)) == 0:
            return False
    return True
