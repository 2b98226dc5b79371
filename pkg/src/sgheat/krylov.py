"""Flexible GMRES and the stochastic block-Jacobi preconditioner.

The preconditioner's diagonal blocks are the per-mode deterministic
space-time operators, assembled sparse and solved by a cached direct
factorization; identical blocks share one factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix, kron
from scipy.sparse.linalg import splu


class FgmresError(RuntimeError):
    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class FgmresConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int = 500
    restart: int = 0  # 0 = no restart

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def fgmres(
    apply_op,
    apply_prec,
    rhs: np.ndarray,
    config: FgmresConfig = FgmresConfig(),
    x0: np.ndarray | None = None,
):
    """Right-preconditioned flexible GMRES.

    ``apply_op`` and ``apply_prec`` map flat vectors to flat vectors; the
    preconditioner may vary between iterations.  Arnoldi uses modified
    Gram-Schmidt with one reorthogonalization pass.

    Returns (solution, iterations, residual history).
    """
    n = len(rhs)
    x = np.zeros(n) if x0 is None else x0.copy()
    b_norm = np.linalg.norm(rhs)
    tol = max(config.rel_tol * b_norm, config.abs_tol)
    r = rhs - apply_op(x) if x0 is not None else rhs.copy()
    beta = np.linalg.norm(r)
    residuals = [float(beta)]
    if beta <= tol:
        return x, 0, residuals

    max_inner = config.restart if config.restart > 0 else config.max_iter
    total_iters = 0
    while True:
        V = [r / beta]
        Z: list[np.ndarray] = []
        H = np.zeros((max_inner + 1, max_inner))
        g = np.zeros(max_inner + 1)
        g[0] = beta
        cs = np.zeros(max_inner)
        sn = np.zeros(max_inner)
        k = 0
        converged = False
        while k < max_inner and total_iters < config.max_iter:
            z = apply_prec(V[k])
            w = apply_op(z)
            Z.append(z)
            for i in range(k + 1):
                H[i, k] = np.dot(V[i], w)
                w -= H[i, k] * V[i]
            # one reorthogonalization pass
            for i in range(k + 1):
                corr = np.dot(V[i], w)
                H[i, k] += corr
                w -= corr * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 0:
                V.append(w / H[k + 1, k])
            # apply stored Givens rotations, then form a new one
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k] = H[k, k] / denom if denom > 0 else 1.0
            sn[k] = H[k + 1, k] / denom if denom > 0 else 0.0
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k += 1
            total_iters += 1
            res = abs(g[k])
            residuals.append(float(res))
            if res <= tol:
                converged = True
                break
        # back-substitution on the triangular system
        if k > 0:
            yk = np.zeros(k)
            for i in range(k - 1, -1, -1):
                yk[i] = (g[i] - H[i, i + 1 : k] @ yk[i + 1 : k]) / H[i, i]
            for i in range(k):
                x += yk[i] * Z[i]
        if converged:
            return x, total_iters, residuals
        if total_iters >= config.max_iter:
            raise FgmresError(
                f"FGMRES did not converge in {config.max_iter} iterations "
                f"(residual {residuals[-1]:.3e}, target {tol:.3e})",
                residuals,
            )
        r = rhs - apply_op(x)
        beta = np.linalg.norm(r)


@dataclass
class BlockJacobiPreconditioner:
    """Per-stochastic-mode exact inverse of the deterministic slab blocks.

    Mode alpha's block is kron(A_t, M_x) + sum_mu [G_mu]_{aa} kron(B_t, K_mu).
    Factorizations are shared between modes with identical diagonal couplings.
    """

    n_modes: int
    block_size: int
    mode_keys: list[tuple]
    factorizations: dict[tuple, object] = field(repr=False)
    applications: int = 0

    def apply(self, v: np.ndarray) -> np.ndarray:
        blocks = v.reshape(self.n_modes, self.block_size)
        out = np.empty_like(blocks)
        for a in range(self.n_modes):
            out[a] = self.factorizations[self.mode_keys[a]].solve(blocks[a])
        self.applications += 1
        return out.ravel()


def build_block_jacobi(
    A_t: np.ndarray,
    B_t: np.ndarray,
    M_x: csr_matrix,
    K_mus: list[csr_matrix],
    G_diags: np.ndarray,
) -> BlockJacobiPreconditioner:
    """Factorize the per-mode diagonal space-time blocks.

    ``G_diags`` has shape (n_modes, n_mu): the diagonal triple products
    [G_mu]_{alpha alpha} for every retained mode and active coefficient mode.
    """
    n_modes, n_mu = G_diags.shape
    if n_mu != len(K_mus):
        raise ValueError("G_diags and K_mus disagree on the active set size")
    nt = A_t.shape[0]
    nh = M_x.shape[0]
    base = kron(A_t, M_x, format="csc")
    mode_keys = [tuple(np.round(G_diags[a], 14)) for a in range(n_modes)]
    factorizations: dict[tuple, object] = {}
    for a, key in enumerate(mode_keys):
        if key in factorizations:
            continue
        block = base.copy()
        for g, K in zip(G_diags[a], K_mus):
            if g != 0.0:
                block = block + kron(g * B_t, K, format="csc")
        try:
            factorizations[key] = splu(block.tocsc())
        except RuntimeError as exc:
            raise RuntimeError(f"singular diagonal block for mode {a}") from exc
    return BlockJacobiPreconditioner(
        n_modes=n_modes,
        block_size=nt * nh,
        mode_keys=mode_keys,
        factorizations=factorizations,
    )
