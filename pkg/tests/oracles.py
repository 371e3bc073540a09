"""Independent reference implementations used only by the tests.

Nothing here imports the package's dynamics or statistics code.  The
Liouvillian uses the column-stacking vectorisation and operators written
out from scratch, propagation is a dense matrix exponential, and the test
statistic is enumerated over every possible data array.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict

import numpy as np
from scipy.linalg import expm


def ops(n):
    a = np.zeros((n, n))
    for k in range(1, n):
        a[k - 1, k] = math.sqrt(k)
    g = np.array([1.0, 0.0])
    e = np.array([0.0, 1.0])
    sm = np.outer(g, e)  # |g><e|
    sz = np.outer(e, e) - np.outer(g, g)
    sx = np.outer(g, e) + np.outer(e, g)
    return a, sm, sz, sx


def hamiltonian(delta, eta, n):
    a, sm, sz, sx = ops(n)
    i2, iN = np.eye(2), np.eye(n)
    sp = sm.T
    return (-delta / 2 * np.kron(sz, iN) + 0.5 * np.kron(sx, iN)
            + eta / 2 * (np.kron(sp, a) + np.kron(sm, a.T)))


def _lind_col(h, jumps):
    """Column-stacking Liouvillian: vec(A X B) = (B^T kron A) vec(X)."""
    d = h.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for rate, c in jumps:
        cdc = c.conj().T @ c
        out += rate * (np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye))
    return out


def liouvillian(delta, eta, tau_d, tau_h, n, coherent=True):
    a, sm, _, _ = ops(n)
    i2, iN = np.eye(2), np.eye(n)
    h = hamiltonian(delta, eta, n) if coherent else np.zeros((2 * n, 2 * n))
    jumps = [(1 / tau_d, np.kron(sm, iN)), (1 / tau_h, np.kron(i2, a)), (1 / tau_h, np.kron(i2, a.T))]
    return _lind_col(h, jumps)


def evolve_dense(rho0, delta, t, eta=0.1, tau_d=50.0, tau_h=600.0, coherent=True):
    d = rho0.shape[0]
    L = liouvillian(delta, eta, tau_d, tau_h, d // 2, coherent)
    vec = rho0.reshape(-1, order="F")
    return (expm(L * t) @ vec).reshape(d, d, order="F")


def squeezed_closed_form(r, n, angle=0.0):
    """<2k|S(z)|0> = sech(r)^1/2 (-e^{i angle} tanh r)^k sqrt((2k)!) / (2^k k!)."""
    c = np.zeros(n, dtype=complex)
    for k in range(0, (n + 1) // 2):
        m = 2 * k
        if m >= n:
            break
        log_mag = 0.5 * math.lgamma(m + 1) - k * math.log(2) - math.lgamma(k + 1)
        c[m] = (math.cosh(r) ** -0.5 * (-np.exp(1j * angle) * math.tanh(r)) ** k * math.exp(log_mag))
    return c


def vacuum_state(n, probe=None):
    s = np.zeros(n, dtype=complex)
    s[0] = 1
    if probe is not None:
        s = np.asarray(probe, dtype=complex) / np.linalg.norm(probe)
    psi = np.concatenate([s, np.zeros(n)])
    return np.outer(psi, psi.conj())


def signal(rho, probe):
    n = rho.shape[0] // 2
    motional = rho[:n, :n] + rho[n:, n:]
    s = np.asarray(probe, dtype=complex) / np.linalg.norm(probe)
    return 1 - (s.conj() @ motional @ s).real


def thermal_background(t, tau_h):
    """P(not vacuum) after equal-rate heating and cooling from the ground state.

    The mode stays thermal with mean occupation t / tau_h, so
    P = nbar / (1 + nbar).
    """
    nbar = t / tau_h
    return nbar / (1 + nbar)


# statistics -------------------------------------------------------------------


def binom_pmf(k, m, p):
    return math.comb(m, k) * p ** k * (1 - p) ** (m - k)


def llr(g, p_sig, p_bg, m):
    """Log-likelihood ratio of background over signal, summed over bins."""
    total = 0.0
    for gk, p0 in zip(g, p_sig):
        total += gk * math.log(p_bg / p0) + (m - gk) * math.log((1 - p_bg) / (1 - p0))
    return total


def enumerate_distribution(p_sig, p_bg, m, p_data):
    """Exact distribution of the statistic by visiting every (M+1)^L data array."""
    atoms = defaultdict(float)
    for g in itertools.product(range(m + 1), repeat=len(p_sig)):
        prob = 1.0
        for gk, p in zip(g, p_data):
            prob *= binom_pmf(gk, m, p)
        atoms[round(llr(g, p_sig, p_bg, m), 9)] += prob
    vals = np.array(sorted(atoms))
    return vals, np.array([atoms[v] for v in vals])


def error_rates(p_sig, p_bg, m, phi, p_h1=None, p_h2=None):
    """MR = P1(lambda >= phi), FA = P2(lambda < phi) by enumeration."""
    p_h1 = p_sig if p_h1 is None else p_h1
    p_h2 = [p_bg] * len(p_sig) if p_h2 is None else p_h2
    v1, w1 = enumerate_distribution(p_sig, p_bg, m, p_h1)
    v2, w2 = enumerate_distribution(p_sig, p_bg, m, p_h2)
    return math.fsum(w1[v1 >= phi]), math.fsum(w2[v2 < phi])
