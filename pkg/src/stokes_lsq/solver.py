"""Normal equations of the least-squares functional and their PCG solution.

The functional is ``R(x) = x^T A x - 2 b^T x + c``. ``A`` is applied term by
term as ``sum B^T (I kron M) B`` where ``B`` maps the coefficients of the
elements touching a locus to stencil values at its quadrature nodes and ``M``
is the nodal norm matrix. Terms whose value count exceeds their coefficient
count keep the small local product ``B^T (I kron M) B`` instead of ``B``.

The preconditioner is block diagonal: per element, the reference-cube ``H^2``
Gram matrix for each velocity component and the ``H^1`` Gram matrix for the
pressure, each Cholesky factored once.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigvalsh_tridiagonal

from .catalog import GaugeTerm, Resolution, ResidualTerm, element_dofs, gauge_functional, sample_term
from .geometry import Decomposition
from .spectral import gauss_rule, legendre_basis, multi_indices


class SolverError(RuntimeError):
    pass


@dataclass
class _Block:
    dofs: np.ndarray
    op: np.ndarray  # (rows, nloc) operator, or (nloc, nloc) local normal matrix
    weight: Optional[np.ndarray]  # None when ``op`` is already the local normal matrix
    ncomp: int


class LeastSquaresSystem:
    """Matrix-free ``A``, right-hand side ``b`` and constant ``c`` of ``R``."""

    def __init__(self, decomp: Decomposition, degree: int, blocks: list, gauges: list,
                 rhs: np.ndarray, const: float, resolution: Resolution):
        self.decomp = decomp
        self.degree = degree
        self.resolution = resolution
        self._blocks = blocks
        self._gauges = gauges  # list of (vector a, value)
        self.rhs = rhs
        self.const = const

    @property
    def size(self) -> int:
        return self.rhs.shape[0]

    @property
    def n_terms(self) -> int:
        return len(self._blocks) + len(self._gauges)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.zeros_like(x)
        for blk in self._blocks:
            xl = x[blk.dofs]
            if blk.weight is None:
                y[blk.dofs] += blk.op @ xl
            else:
                v = (blk.op @ xl).reshape(blk.ncomp, -1) @ blk.weight
                y[blk.dofs] += blk.op.T @ v.ravel()
        for a, _ in self._gauges:
            y += a * (a @ x)
        return y

    def functional(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x) - 2.0 * self.rhs @ x + self.const)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.matvec(x) - self.rhs)

    def dense(self) -> np.ndarray:
        """``A`` assembled column by column from ``matvec``."""
        n = self.size
        a = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            a[:, j] = self.matvec(e)
            e[j] = 0.0
        return a


def assemble_system(terms: Sequence, decomp: Decomposition, degree: int,
                    resolution: Optional[Resolution] = None) -> LeastSquaresSystem:
    """Discretize residual and gauge terms at polynomial degree ``degree``."""
    if not terms:
        raise SolverError("cannot assemble a system from an empty term list")
    res = resolution or Resolution.default(degree)
    if res.degree != degree:
        raise SolverError("resolution degree does not match the requested degree")
    dim = decomp.dim
    n = decomp.n_elements * (dim + 1) * (degree + 1) ** dim
    rhs = np.zeros(n)
    const = 0.0
    blocks, gauges = [], []
    for term in terms:
        if isinstance(term, GaugeTerm):
            a = gauge_functional(term, decomp, degree)
            gauges.append((a, term.value))
            rhs += term.value * a
            const += term.value ** 2
            continue
        if not isinstance(term, ResidualTerm):
            raise SolverError(f"unsupported term type {type(term).__name__}")
        smp = sample_term(term, decomp, res)
        dofs = element_dofs(smp.elements, dim, degree)
        b = np.ascontiguousarray(smp.matrix.reshape(-1, smp.matrix.shape[2]))
        wg = smp.target @ smp.weight
        rhs[dofs] += b.T @ wg.ravel()
        const += float(np.sum(wg * smp.target))
        if b.shape[0] > b.shape[1]:
            mb = np.einsum("cpq,cqk->cpk", np.broadcast_to(smp.weight, (term.ncomp,) + smp.weight.shape),
                           smp.matrix).reshape(b.shape)
            k = b.T @ mb
            blocks.append(_Block(dofs, 0.5 * (k + k.T), None, term.ncomp))
        else:
            blocks.append(_Block(dofs, b, smp.weight, term.ncomp))
    return LeastSquaresSystem(decomp, degree, blocks, gauges, rhs, const, res)


# --- preconditioner --------------------------------------------------------

@lru_cache(maxsize=None)
def gram_1d(degree: int, order: int) -> np.ndarray:
    """``G[i, j] = int_{-1}^{1} P_i^(order) P_j^(order)`` (exact quadrature)."""
    rule = gauss_rule(degree + 2)
    v = legendre_basis(degree, rule.nodes, order)
    return (v.T * rule.weights) @ v


def reference_gram(dim: int, degree: int, order: int) -> np.ndarray:
    """``H^order`` Gram matrix of the tensor modes on the reference cube."""
    nb = (degree + 1) ** dim
    g = np.zeros((nb, nb))
    for alpha in multi_indices(dim, order):
        m = gram_1d(degree, alpha[0])
        for k in range(1, dim):
            m = np.kron(m, gram_1d(degree, alpha[k]))
        g += m
    return 0.5 * (g + g.T)


class BlockPreconditioner:
    """Block-diagonal ``U`` with Cholesky-factored reference Gram blocks."""

    def __init__(self, decomp: Decomposition, degree: int):
        self.dim = decomp.dim
        self.degree = degree
        self.n_elements = decomp.n_elements
        self.nbasis = (degree + 1) ** self.dim
        self.velocity_gram = reference_gram(self.dim, degree, 2)
        self.pressure_gram = reference_gram(self.dim, degree, 1)
        try:
            self._vel = cho_factor(self.velocity_gram)
            self._pre = cho_factor(self.pressure_gram)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Gram block in the preconditioner") from exc

    @property
    def n_blocks(self) -> int:
        return self.n_elements * (self.dim + 1)

    def blocks(self):
        """Gram matrix of every block in dof order."""
        for _ in range(self.n_elements):
            for f in range(self.dim + 1):
                yield self.velocity_gram if f < self.dim else self.pressure_gram

    def _split(self, r):
        return np.asarray(r, dtype=float).reshape(self.n_elements, self.dim + 1, self.nbasis)

    def apply(self, r: np.ndarray) -> np.ndarray:
        """``z = U^{-1} r``."""
        rb = self._split(r)
        z = np.empty_like(rb)
        d = self.dim
        # all velocity blocks share one factor, so solve them together
        vel = rb[:, :d, :].reshape(-1, self.nbasis).T
        z[:, :d, :] = cho_solve(self._vel, vel).T.reshape(self.n_elements, d, self.nbasis)
        z[:, d, :] = cho_solve(self._pre, rb[:, d, :].T).T
        return z.ravel()

    def matvec(self, z: np.ndarray) -> np.ndarray:
        """``U z``."""
        zb = self._split(z)
        out = np.empty_like(zb)
        d = self.dim
        out[:, :d, :] = zb[:, :d, :] @ self.velocity_gram
        out[:, d, :] = zb[:, d, :] @ self.pressure_gram
        return out.ravel()


def build_preconditioner(decomp: Decomposition, degree: int) -> BlockPreconditioner:
    return BlockPreconditioner(decomp, degree)


class IdentityPreconditioner:
    def apply(self, r):
        return np.array(r, dtype=float)

    def matvec(self, z):
        return np.array(z, dtype=float)


# --- PCG -------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    rel_tolerance: float = 1e-12
    max_iterations: int = 20000
    report_cadence: int = 0  # history rows kept every n iterations (0: all)

    def __post_init__(self):
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.report_cadence < 0:
            raise ValueError("report_cadence must be non-negative")


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    history: list  # (iteration, relative preconditioned residual)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return self.history[-1][1] if self.history else 0.0


def pcg_solve(system, preconditioner=None, config: Optional[SolverConfig] = None,
              x0: Optional[np.ndarray] = None, history_csv=None) -> PCGResult:
    """Preconditioned conjugate gradients on ``A x = b``.

    ``system`` needs ``matvec`` and ``rhs``; it may also be a dense array paired
    with ``b`` through :class:`DenseSystem`. Stops when the preconditioned
    residual norm ``sqrt(r^T U^{-1} r)`` has dropped by ``rel_tolerance``
    relative to its initial value. On hitting ``max_iterations`` the last
    iterate is returned with ``converged=False``.
    """
    cfg = config or SolverConfig()
    prec = preconditioner or IdentityPreconditioner()
    b = np.asarray(system.rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - system.matvec(x) if x0 is not None else b.copy()
    z = prec.apply(r)
    rz = float(r @ z)
    history = [(0, 1.0)]
    alphas, betas = [], []
    if not np.isfinite(rz):
        raise SolverError("non-finite initial residual")
    if rz <= 0.0:
        return PCGResult(x, 0, True, history)
    rz0 = rz
    p = z.copy()
    converged = False
    k = 0
    while k < cfg.max_iterations:
        ap = system.matvec(p)
        pap = float(p @ ap)
        if not np.isfinite(pap):
            raise SolverError(f"breakdown at iteration {k + 1}: non-finite curvature")
        if pap <= 0.0:
            raise SolverError(f"breakdown at iteration {k + 1}: operator not positive on search direction")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = prec.apply(r)
        rz_new = float(r @ z)
        k += 1
        alphas.append(alpha)
        rel = math.sqrt(max(rz_new, 0.0) / rz0)
        if not np.isfinite(rel):
            raise SolverError(f"breakdown at iteration {k}: non-finite residual")
        if cfg.report_cadence == 0 or k % cfg.report_cadence == 0:
            history.append((k, rel))
        if rel <= cfg.rel_tolerance or rz_new <= 0.0:
            converged = True
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    if history[-1][0] != k:
        history.append((k, rel))
    if history_csv is not None:
        write_history_csv(history_csv, history)
    return PCGResult(x, k, converged, history, alphas, betas)


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual"])
        for it, res in history:
            w.writerow([it, f"{res:.6e}"])


@dataclass
class DenseSystem:
    """A dense SPD matrix and right-hand side exposing the system interface."""

    matrix: np.ndarray
    rhs: np.ndarray

    def matvec(self, x):
        return self.matrix @ x


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix implied by CG steps."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)[: len(a) - 1]
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    return diag, off


MIN_LANCZOS_STEPS = 10


def condition_estimate(system=None, preconditioner=None, result: Optional[PCGResult] = None,
                       config: Optional[SolverConfig] = None):
    """Extreme Ritz values ``(lambda_min, lambda_max)`` of ``U^{-1} A``.

    Uses the CG coefficients of ``result`` (or of a fresh solve of
    ``system``). Fewer than ten steps are rejected unless CG terminated on an
    invariant subspace, where the Ritz values are exact.
    """
    if result is None:
        if system is None:
            raise ValueError("need a system or a PCG result")
        result = pcg_solve(system, preconditioner, config)
    steps = len(result.alphas)
    # a residual at roundoff level means the Krylov space became invariant
    exact = result.converged and result.final_residual < 1e-14
    if steps == 0 or (steps < MIN_LANCZOS_STEPS and not exact):
        raise SolverError(f"condition estimate needs at least {MIN_LANCZOS_STEPS} CG iterations, got {steps}")
    diag, off = lanczos_tridiagonal(result.alphas, result.betas)
    ev = eigvalsh_tridiagonal(diag, off) if len(diag) > 1 else diag
    return float(ev.min()), float(ev.max())

