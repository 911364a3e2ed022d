"""Spectral diagnostics: economic SVD, covariance/Laplacian alignment, low-rank
synthesis on graph eigenbases, and the recovery-bound verifier."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from .graph import GraphEigs, SparseGraph, partial_eigs
from .matrixio import DataMatrix
from .solver import LowRankResult, SolverConfig, _fidelity, _values


class DegenerateEigengapError(ValueError):
    """The eigenvalue just above the retained band is zero, so gamma/lambda is undefined."""


@dataclass(frozen=True)
class SvdTriplet:
    """Economic SVD factors: U = V diag(sigma) W^T with orthonormal V, W."""

    V: np.ndarray      # p x c
    sigma: np.ndarray  # c, descending, >= 0
    W: np.ndarray      # n x c


@dataclass(frozen=True)
class LowRankOnGraphs:
    """Matrix whose columns/rows live in the low bands of two graph eigenbases."""

    Xstar: DataMatrix
    k1: int
    k2: int
    C: np.ndarray    # k2 x k1 coefficients
    Qk1: np.ndarray  # n x k1
    Pk2: np.ndarray  # p x k2


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    holds: bool
    lam_ratio: float  # lambda_k1 / lambda_{k1+1}
    om_ratio: float   # omega_k2 / omega_{k2+1}


def economic_svd(U, c: Optional[int] = None) -> SvdTriplet:
    """SVD through the p x p Gram eigendecomposition.

    V and sigma come from eigendecomposing U U^T, then W = Sigma^{-1} V^T U.
    Keeps the c largest triplets (all, when c is None), restricted to
    numerically positive singular values.
    """
    U = _values(U)
    p, n = U.shape
    if c is not None and not 0 <= c <= min(p, n):
        raise ValueError(f"c must lie in [0, min(p, n)], got {c}")
    evals, evecs = eigh(U @ U.T)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    sigma = np.sqrt(np.maximum(evals, 0.0))
    # numerical rank in the Gram eigenvalue domain, where the eigh noise
    # floor sits at eps * lambda_max
    cutoff = evals[0] * max(p, n) * np.finfo(np.float64).eps if sigma.size else 0.0
    rank = int(np.count_nonzero(evals > max(cutoff, 0.0)))
    keep = rank if c is None else min(c, rank)
    V = evecs[:, order[:keep]]
    sigma = sigma[:keep]
    W = (U.T @ V) / sigma if keep else np.zeros((n, 0))
    return SvdTriplet(V=V, sigma=sigma, W=W)


def covariance(X) -> np.ndarray:
    """Experimental covariance with the scalar global mean removed: Xc Xc^T / n."""
    X = _values(X)
    centered = X - X.mean()
    return centered @ centered.T / X.shape[1]


def alignment_ratio(P: np.ndarray, C: np.ndarray):
    """Alignment of an orthonormal basis P with the covariance eigenbasis.

    Returns Gamma = P^T C P and the stationarity ratio
    s_r = ||diag(Gamma)||_2 / ||Gamma||_F, which is 1 exactly when P
    diagonalizes C.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"P must be square, got shape {P.shape}")
    if np.abs(P.T @ P - np.eye(P.shape[0])).max() > 1e-8:
        raise ValueError("P must have orthonormal columns (within 1e-8)")
    Gamma = P.T @ C @ P
    total = np.linalg.norm(Gamma)
    if total == 0:
        return Gamma, 1.0
    return Gamma, float(np.linalg.norm(np.diag(Gamma)) / total)


def make_lowrank_on_graphs(L1: SparseGraph, L2: SparseGraph, k1: int, k2: int,
                           coeff_scale: float = 1.0, seed: int = 0) -> LowRankOnGraphs:
    """Draw Xstar = P_{k2} C Q_{k1}^T with uniform random coefficients.

    Q_{k1} and P_{k2} are the lowest eigenvectors of the sample and feature
    Laplacians; C has independent entries uniform in [-coeff_scale, coeff_scale].
    """
    n, p = L1.vertex_count, L2.vertex_count
    if not 1 <= k1 <= n or not 1 <= k2 <= p:
        raise ValueError(f"need 1 <= k1 <= n and 1 <= k2 <= p, got k1={k1}, k2={k2}")
    Qk1 = partial_eigs(L1, k1).vectors
    Pk2 = partial_eigs(L2, k2).vectors
    rng = np.random.default_rng(seed)
    C = rng.uniform(-coeff_scale, coeff_scale, size=(k2, k1))
    Xstar = DataMatrix(Pk2 @ C @ Qk1.T)
    return LowRankOnGraphs(Xstar=Xstar, k1=k1, k2=k2, C=C, Qk1=Qk1, Pk2=Pk2)


def recovery_gammas(L1: SparseGraph, L2: SparseGraph, k1: int, k2: int, gamma: float):
    """gamma1 = gamma/lambda_{k1+1}, gamma2 = gamma/omega_{k2+1} for the bound.

    Eigenvalues are counted from 1 here, so lambda_{k1+1} is the smallest
    eigenvalue outside the retained band (index k1 of the ascending array).
    """
    lam = partial_eigs(L1, min(k1 + 1, L1.vertex_count)).values
    om = partial_eigs(L2, min(k2 + 1, L2.vertex_count)).values
    if k1 >= L1.vertex_count or k2 >= L2.vertex_count:
        raise ValueError("k1, k2 must leave at least one eigenvalue above the band")
    if lam[k1] <= 1e-12 or om[k2] <= 1e-12:
        raise DegenerateEigengapError(
            "eigenvalue above the retained band is zero; the bound's gammas are undefined")
    return gamma / lam[k1], gamma / om[k2]


def check_recovery_bound(Xstar: LowRankOnGraphs, E, gamma: float,
                        solver_out: LowRankResult, cfg: SolverConfig,
                        L1: SparseGraph, L2: SparseGraph) -> BoundReport:
    """Evaluate both sides of the recovery bound for a solved instance.

    The solver must have run on X = Xstar + E with gamma1 = gamma/lambda_{k1+1}
    and gamma2 = gamma/omega_{k2+1}; this is re-derived and verified here.
    """
    E = _values(E)
    Xs = Xstar.Xstar.values
    X = Xs + E
    k1, k2 = Xstar.k1, Xstar.k2
    lam, Q = eigh(L1.laplacian.toarray())
    om, P = eigh(L2.laplacian.toarray())
    if lam[k1] <= 1e-12 or om[k2] <= 1e-12:
        raise DegenerateEigengapError(
            "eigenvalue above the retained band is zero; the bound's gammas are undefined")
    g1, g2 = gamma / lam[k1], gamma / om[k2]
    for got, want, name in ((cfg.gamma1, g1, "gamma1"), (cfg.gamma2, g2, "gamma2")):
        if abs(got - want) > 1e-9 * max(1.0, abs(want)):
            raise ValueError(f"solver ran with {name}={got}, bound requires {want}")

    Ustar = solver_out.U.values
    Qbar = Q[:, k1:]
    Pbar = P[:, k2:]
    lhs = (_fidelity(Ustar - X, cfg.loss)
           + g1 * float(np.linalg.norm(Ustar @ Qbar) ** 2)
           + g2 * float(np.linalg.norm(Pbar.T @ Ustar) ** 2))
    lam_ratio = lam[k1 - 1] / lam[k1]
    om_ratio = om[k2 - 1] / om[k2]
    rhs = (_fidelity(E, cfg.loss)
           + gamma * float(np.linalg.norm(Xs) ** 2) * (lam_ratio + om_ratio))
    holds = lhs <= rhs + 1e-9 * max(1.0, rhs)
    return BoundReport(lhs=lhs, rhs=rhs, holds=holds,
                       lam_ratio=float(lam_ratio), om_ratio=float(om_ratio))


def rank_estimate(sigma: np.ndarray, threshold: float) -> int:
    """Number of singular values above threshold * sigma_max."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0:
        return 0
    return int(np.count_nonzero(sigma > threshold * sigma[0]))


def shape_interaction(W: np.ndarray) -> np.ndarray:
    """Projector W W^T onto the span of the principal components."""
    W = np.asarray(W, dtype=np.float64)
    return W @ W.T


def alignment_energy(triplet: SvdTriplet, L1eigs: GraphEigs, L2eigs: GraphEigs,
                     gamma1: float, gamma2: float) -> float:
    """Tikhonov energy expanded in the Laplacian bases.

    sum_{i,j} sigma_i^2 * (g1*lambda_j*(w_i.q_j)^2 + g2*omega_j*(v_i.p_j)^2),
    which equals g1*tr(U L1 U^T) + g2*tr(U^T L2 U) when full eigenbases are
    supplied.
    """
    n, p = triplet.W.shape[0], triplet.V.shape[0]
    if L1eigs.count != n or L1eigs.vectors.shape[0] != n:
        raise ValueError("L1eigs must be the full n x n eigenbasis")
    if L2eigs.count != p or L2eigs.vectors.shape[0] != p:
        raise ValueError("L2eigs must be the full p x p eigenbasis")
    s2 = triplet.sigma ** 2
    M1 = triplet.W.T @ L1eigs.vectors  # c x n
    M2 = triplet.V.T @ L2eigs.vectors  # c x p
    e1 = s2 @ ((M1 ** 2) @ L1eigs.values)
    e2 = s2 @ ((M2 ** 2) @ L2eigs.values)
    return float(gamma1 * e1 + gamma2 * e2)


def save_spectrum_csv(sigma, path) -> None:
    """Singular values as a two-column CSV (index, sigma)."""
    with open(path, "w") as fh:
        fh.write("index,sigma\n")
        for i, val in enumerate(np.asarray(sigma, dtype=np.float64)):
            fh.write(f"{i},{val:.17g}\n")


def save_bound_report_csv(report: BoundReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("lhs,rhs,holds,lam_ratio,om_ratio\n")
        fh.write(f"{report.lhs:.17g},{report.rhs:.17g},{int(report.holds)},"
                 f"{report.lam_ratio:.17g},{report.om_ratio:.17g}\n")
