"""Open-system dynamics of the spectroscopy ion and its motional mode.

Hilbert space is (two-level system) x (motional mode truncated to N Fock
states), ordered lexicographically with the electronic index slowest.
Electronic index 0 is the ground state ``g`` and 1 the excited state ``e``,
so ``sigma_z = diag(-1, +1)`` and ``sigma^+ = |e><g|``.

Density matrices are plain complex ``(2N, 2N)`` arrays.  Superoperators act
on the row-major vectorisation ``rho.ravel()``, for which
``vec(A X B) = (A kron B^T) vec(X)``.
"""
from __future__ import annotations

import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .errors import DimensionMismatch, IntegrationFailure, TruncationWarning
from .params import PhysicalParams

TRACE_TOL = 1e-8
TRUNCATION_TOL = 1e-4
RK_RTOL = 1e-8
RK_ATOL = 1e-10


def annihilation(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, shape=(n, n), format="csr")


def _two_level():
    sigma_minus = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |g><e|
    sigma_z = sp.diags([-1.0, 1.0], format="csr")
    return sigma_minus, sigma_z


def _full_operators(n_fock: int):
    sm, sz = _two_level()
    eye_m = sp.identity(n_fock, format="csr")
    a = annihilation(n_fock)
    return {
        "sigma_minus": sp.kron(sm, eye_m, format="csr"),
        "sigma_z": sp.kron(sz, eye_m, format="csr"),
        "a": sp.kron(sp.identity(2), a, format="csr"),
    }


def build_hamiltonian(params: PhysicalParams, delta: float) -> np.ndarray:
    """Dense ODF Hamiltonian in the rotating frame, first order in Lamb-Dicke.

    ``H = -delta/2 sz + 1/2 sx + eta/2 (s+ a + s- a^dag)`` with Omega = 1.
    The off-diagonal part is assembled as ``X + X^dag`` so the result is
    exactly Hermitian.
    """
    ops = _full_operators(params.fock_cutoff)
    sp_ = ops["sigma_minus"].T
    raising = 0.5 * sp_ + 0.5 * params.lamb_dicke * (sp_ @ ops["a"])
    h = -0.5 * delta * ops["sigma_z"] + raising + raising.conj().T
    return h.toarray().astype(complex)


def _dissipator(op: sp.csr_matrix, rate: float) -> sp.csr_matrix:
    n = op.shape[0]
    eye = sp.identity(n, format="csr")
    odag_o = (op.conj().T @ op).tocsr()
    return rate * (sp.kron(op, op.conj()) - 0.5 * sp.kron(odag_o, eye) - 0.5 * sp.kron(eye, odag_o.T))


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """Time-independent Liouvillian acting on vectorised density matrices."""

    matrix: sp.csr_matrix
    dim: int

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(rho).ravel()).reshape(self.dim, self.dim)


def build_lindblad_generator(params: PhysicalParams, delta: float = 0.0, *,
                             coherent: bool = True) -> LindbladGenerator:
    """Liouvillian of the master equation.

    ``L(rho) = -i[H, rho] + D[s-] rho / tau_d + (D[a] + D[a^dag]) rho / tau_h``.
    With ``coherent=False`` the Hamiltonian is dropped, which gives the
    background (no transition) dynamics.
    """
    ops = _full_operators(params.fock_cutoff)
    n = 2 * params.fock_cutoff
    eye = sp.identity(n, format="csr")
    gen = _dissipator(ops["sigma_minus"], 1.0 / params.decay_time_T)
    gh = 1.0 / params.heating_time_T
    gen = gen + _dissipator(ops["a"], gh) + _dissipator(ops["a"].T.tocsr(), gh)
    if coherent:
        h = sp.csr_matrix(build_hamiltonian(params, delta))
        gen = gen - 1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    gen = sp.csr_matrix(gen, dtype=complex)
    gen.eliminate_zeros()
    return LindbladGenerator(gen, n)


def _check_states(vecs: np.ndarray, dim: int, t: float):
    if not np.all(np.isfinite(vecs)):
        raise IntegrationFailure(f"non-finite state at t={t}")
    traces = vecs.reshape(dim, dim, -1).trace(axis1=0, axis2=1)
    drift = np.max(np.abs(traces - 1.0))
    if drift > TRACE_TOL:
        raise IntegrationFailure(f"trace drifted by {drift:.3e} at t={t}")


@contextmanager
def _pinned_global_rng(seed: int = 0):
    # expm_multiply picks its Taylor degree via onenormest, which draws from
    # the legacy global RNG; pin it so propagation is bitwise reproducible.
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        yield
    finally:
        np.random.set_state(state)


def evolve_many(rho0: np.ndarray, generator: LindbladGenerator, times, *,
                method: str = "expm", rtol: float = RK_RTOL, atol: float = RK_ATOL) -> np.ndarray:
    """Evolve one state (``(n, n)``) or a stack (``(k, n, n)``) to each of ``times``.

    Returns an array of shape ``(len(times), n, n)`` or ``(len(times), k, n, n)``.
    ``times`` must be non-decreasing and non-negative (units of T).

    ``method="expm"`` applies the exact propagator between consecutive output
    times with a truncated-Taylor action of ``exp(L dt)``; ``method="rk"``
    uses adaptive 8th-order Runge-Kutta stepping at ``rtol``/``atol``.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = generator.dim
    single = rho0.ndim == 2
    stack = rho0[None] if single else rho0
    if stack.shape[1:] != (n, n):
        raise DimensionMismatch(f"state shape {rho0.shape} does not match generator dim {n}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be a non-decreasing sequence of non-negative values")

    if not np.all(np.isfinite(generator.matrix.data)):
        raise IntegrationFailure("generator has non-finite entries")
    vecs = stack.reshape(len(stack), n * n).T.copy()  # (n^2, k)
    out = np.empty((len(times), n * n, len(stack)), dtype=complex)
    if method == "expm":
        current, t_now = vecs, 0.0
        for i, t in enumerate(times):
            dt = t - t_now
            if dt > 0:
                try:
                    with _pinned_global_rng():
                        current = expm_multiply(generator.matrix * dt, current)
                except (ValueError, OverflowError) as exc:
                    raise IntegrationFailure(f"propagation to t={t} failed: {exc}") from exc
                t_now = t
                _check_states(current, n, t)
            out[i] = current
    elif method == "rk":
        for j in range(vecs.shape[1]):
            out[:, :, j] = _rk_solve(generator, vecs[:, j], times, rtol, atol).T
        for i, t in enumerate(times):
            _check_states(out[i], n, t)
    else:
        raise ValueError(f"unknown method {method!r}")

    res = out.transpose(0, 2, 1).reshape(len(times), len(stack), n, n)
    return res[:, 0] if single else res


def _rk_solve(generator, y0, times, rtol, atol):
    if times[-1] == 0:
        return np.tile(y0, (len(times), 1)).T
    mat = generator.matrix
    sol = solve_ivp(lambda _t, y: mat @ y, (0.0, times[-1]), y0, method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegrationFailure(sol.message)
    return sol.y


def evolve(rho0: np.ndarray, generator: LindbladGenerator, t: float, **kw) -> np.ndarray:
    """``exp(L t) rho0``; ``t = 0`` returns a copy of ``rho0``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.array(rho0, dtype=complex, copy=True)
    return evolve_many(rho0, generator, [t], **kw)[0]


@dataclass(frozen=True, eq=False)
class SqueezedState:
    """Fock amplitudes of the squeezed vacuum ``exp((z* a^2 - z a^dag^2) / 2)|0>``, ``z = r e^{i angle}``.

    ``angle = 0`` squeezes the position quadrature ``x = (a + a^dag)/sqrt 2``
    and ``angle = pi`` the momentum quadrature.  ``amplitudes`` are the
    closed-form coefficients restricted to the first N levels, so their norm
    falls short of 1 when the cutoff is too small; :meth:`normalized` is
    what the dynamics uses.
    """

    r: float
    amplitudes: np.ndarray
    angle: float = math.pi

    @property
    def cutoff(self) -> int:
        return len(self.amplitudes)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.amplitudes)

    @property
    def norm_deficit(self) -> float:
        return float(1.0 - np.sum(np.abs(self.amplitudes) ** 2))

    def normalized(self) -> np.ndarray:
        return self.amplitudes / np.linalg.norm(self.amplitudes)


def squeezed_state(r: float, n_fock: int, angle: float = math.pi) -> SqueezedState:
    """Squeezed vacuum amplitudes from the two-step recurrence

    ``c_{2k+2} = -e^{i angle} tanh(r) sqrt((2k+1)/(2k+2)) c_{2k}``, ``c_0 = sech(r)^(1/2)``.
    Amplitudes are real for ``angle`` in {0, pi}; the default ``pi`` is
    ``exp(r/2 (a^dag^2 - a^2))|0>`` with ``c_{2k+2} = +tanh(r) ...``.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    phase = np.exp(1j * angle)
    if abs(phase.imag) < 1e-15:
        phase = float(np.sign(phase.real))
    amps = np.zeros(n_fock, dtype=type(phase))
    amps[0] = 1.0 / math.sqrt(math.cosh(r))
    th = -phase * math.tanh(r)
    for m in range(2, n_fock, 2):
        amps[m] = amps[m - 2] * th * math.sqrt((m - 1) / m)
    state = SqueezedState(float(r), amps, float(angle))
    if state.norm_deficit > TRUNCATION_TOL:
        warnings.warn(f"squeezed state r={r:.4g} loses {state.norm_deficit:.2e} of its norm "
                      f"to the Fock cutoff N={n_fock}", TruncationWarning, stacklevel=2)
    return state


def probe_state(params: PhysicalParams) -> SqueezedState:
    """Reference state for ``params`` (squeezing and its orientation)."""
    return squeezed_state(params.squeezing, params.fock_cutoff, params.squeezing_angle)


def initial_state(params: PhysicalParams, probe: SqueezedState | None = None) -> np.ndarray:
    """``|g><g| (x) |S(r)><S(r)|`` with the normalised (truncated) squeezed state."""
    if probe is None:
        probe = probe_state(params)
    s = probe.normalized()
    psi = np.concatenate([s, np.zeros_like(s)])
    return np.outer(psi, psi.conj()).astype(complex)


def motional_state(rho: np.ndarray) -> np.ndarray:
    """Partial trace over the electronic level."""
    n = rho.shape[-1] // 2
    r4 = rho.reshape(rho.shape[:-2] + (2, n, 2, n))
    return r4[..., 0, :, 0, :] + r4[..., 1, :, 1, :]


def povm_signal_raw(rho: np.ndarray, probe: SqueezedState) -> float | np.ndarray:
    """Unclipped ``1 - <S| Tr_e rho |S>``; works on stacks of states."""
    rho = np.asarray(rho)
    if rho.shape[-1] != 2 * probe.cutoff or rho.shape[-2] != 2 * probe.cutoff:
        raise DimensionMismatch(f"state dim {rho.shape[-1]} vs probe cutoff {probe.cutoff}")
    s = probe.normalized()
    fid = np.einsum("i,...ij,j->...", s.conj(), motional_state(rho), s).real
    return 1.0 - fid


def povm_signal(rho: np.ndarray, probe: SqueezedState) -> float:
    """Probability of the "not in the reference state" outcome, clipped to [0, 1]."""
    return float(np.clip(povm_signal_raw(rho, probe), 0.0, 1.0))


def density_matrix_defects(rho: np.ndarray) -> dict:
    """Hermiticity, trace and positivity diagnostics of a density matrix."""
    return {
        "hermiticity": float(np.max(np.abs(rho - rho.conj().T))),
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()),
    }


def cutoff_convergence(params: PhysicalParams, delta: float, t: float, extra: int = 5) -> float:
    """Change of the POVM signal when the Fock cutoff is raised by ``extra``.

    Diagnostic only; values below ~1e-4 indicate a converged cutoff.
    """
    values = []
    for n in (params.fock_cutoff, params.fock_cutoff + extra):
        p = params.replace(fock_cutoff=n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            probe = probe_state(p)
        rho = evolve(initial_state(p, probe), build_lindblad_generator(p, delta), t)
        values.append(povm_signal(rho, probe))
    return abs(values[1] - values[0])
