"""Critical cluster configurations of the reduced energy by multi-start ascent.

The reduced energy confines the rescaled peak positions quadratically and
repels them pairwise with a Riesz kernel; interior maxima in tau balance the
two.  Stationarity in the scale fluctuations is exact at d = 0, so the search
runs over tau only: seeded starts on the two-peak equilibrium sphere, gradient
ascent with backtracking, then a Newton polish on the analytic gradient with a
pseudo-inverse step (the rotation orbit of an isotropic confinement makes the
Hessian singular along orbit directions).

Reports are deterministic functions of (k, geometry, options): starts use
spawned substreams of the seed and the merge scans results in start order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import warnings

import numpy as np

from .constants import ConstantsTable
from .geometry import GeometryData
from .reduced_energy import (
    MIN_SEPARATION,
    ClusterConfig,
    eval_J_reduced,
    grad_J_reduced,
)

__all__ = [
    "OptimizerOptions",
    "OptimizerReport",
    "find_critical_config",
    "verify_second_order",
    "two_peak_radius",
    "canonicalize_tau",
]


@dataclass(frozen=True)
class OptimizerOptions:
    seed: int = 0
    n_starts: int = 8
    tol: float = 1e-10
    max_iter: int = 400
    threads: int = 1


@dataclass(frozen=True)
class OptimizerReport:
    best: ClusterConfig
    value: float
    grad_norm: float
    n_starts: int
    converged_fraction: float
    symmetry_tag: str
    distinct_values: tuple = field(default=())

    def __post_init__(self) -> None:
        if self.best.k >= 1 and not np.isfinite(self.value):
            raise ValueError("report carries a non-finite value")


def two_peak_radius(table: ConstantsTable, d0: float, N: int, q_scale: float = 1.0) -> float:
    """Equilibrium radius t* of the antipodal pair for Q = q_scale * identity:

    t*^N = (N-2) E_N d0^{N-2} 2^{2-N} / (A_N d0^4 q_scale).
    """
    return ((N - 2) * table.E_N * d0 ** (N - 2) * 2.0 ** (2 - N)
            / (table.A_N * d0**4 * q_scale)) ** (1.0 / N)


def _value_and_grad(tau, k, d0, geo, table):
    cfg = ClusterConfig(k=k, d=np.zeros(k), tau=tau, d0=d0)
    val = eval_J_reduced(cfg, geo, table).total
    _, tau_grad = grad_J_reduced(cfg, geo, table)
    return val, tau_grad


def _min_separation(tau):
    if tau.shape[0] < 2:
        return np.inf
    diff = tau[:, None, :] - tau[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


def _clip_step(tau, step):
    """Shrink the step until the iterate keeps peaks separated."""
    scale = 1.0
    for _ in range(60):
        if _min_separation(tau + scale * step) > 10 * MIN_SEPARATION:
            return scale * step
        scale *= 0.5
    return 0.0 * step


def _ascend(tau0, k, d0, geo, table, opts, length_scale):
    """Backtracking gradient ascent followed by a Newton polish.

    Returns (tau, value, scaled_grad_norm, converged, history).  The scaled
    gradient is grad * length_scale / max(|value|, 1), a dimensionless
    stationarity measure the tolerance applies to; history is the sequence of
    accepted values (never decreasing beyond roundoff).
    """
    tau = tau0.copy()
    val, grad = _value_and_grad(tau, k, d0, geo, table)
    history = [val]

    def scaled_norm(g, v):
        return float(np.max(np.abs(g))) * length_scale / max(abs(v), 1.0)

    step_size = 0.1 * length_scale / max(np.max(np.abs(grad)), 1e-30)
    for _ in range(opts.max_iter):
        if scaled_norm(grad, val) <= opts.tol:
            break
        step = _clip_step(tau, step_size * grad)
        accepted = False
        for _ in range(40):
            cand = tau + step
            try:
                cand_val, cand_grad = _value_and_grad(cand, k, d0, geo, table)
            except ValueError:
                step *= 0.5
                continue
            if cand_val >= val + 1e-4 * float(np.sum(step * grad)):
                tau, val, grad = cand, cand_val, cand_grad
                history.append(val)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        step_size = min(step_size * 1.5, 10.0 * length_scale / max(np.max(np.abs(grad)), 1e-30))

    # Newton polish on the analytic gradient; pseudo-inverse tolerates the
    # rotation-orbit null space.  Steps must shrink the stationarity measure
    # and may not lose value beyond roundoff.
    for _ in range(40):
        if scaled_norm(grad, val) <= opts.tol:
            break
        H = _fd_hessian_from_grad(tau, k, d0, geo, table, length_scale)
        flat = grad.ravel()
        delta, *_ = np.linalg.lstsq(H, -flat, rcond=1e-10)
        step = _clip_step(tau, delta.reshape(tau.shape))
        improved = False
        for _ in range(30):
            cand = tau + step
            try:
                cand_val, cand_grad = _value_and_grad(cand, k, d0, geo, table)
            except ValueError:
                step *= 0.5
                continue
            if (
                scaled_norm(cand_grad, cand_val) < scaled_norm(grad, val)
                and cand_val >= val - 1e-12 * max(abs(val), 1.0)
            ):
                tau, val, grad = cand, cand_val, cand_grad
                history.append(val)
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    norm = scaled_norm(grad, val)
    return tau, val, norm, norm <= opts.tol, history


def _fd_hessian_from_grad(tau, k, d0, geo, table, length_scale):
    """Centered-difference Hessian of the reduced energy in tau, symmetrized."""
    n = tau.size
    H = np.empty((n, n))
    h = 1e-6 * length_scale
    flat = tau.ravel()
    for j in range(n):
        tp, tm = flat.copy(), flat.copy()
        tp[j] += h
        tm[j] -= h
        _, gp = _value_and_grad(tp.reshape(tau.shape), k, d0, geo, table)
        _, gm = _value_and_grad(tm.reshape(tau.shape), k, d0, geo, table)
        H[:, j] = (gp - gm).ravel() / (2 * h)
    return 0.5 * (H + H.T)


def _is_isotropic(Q: np.ndarray) -> bool:
    c = float(np.trace(Q)) / Q.shape[0]
    return float(np.max(np.abs(Q - c * np.eye(Q.shape[0])))) <= 1e-12 * max(abs(c), 1.0)


def canonicalize_tau(tau: np.ndarray) -> np.ndarray:
    """Rotate a configuration to a canonical frame (isotropic case only):

    tau_1 on the positive first axis, tau_2 in the (e1, e2) half-plane with
    positive second component, and so on; deterministic representative of the
    rotation orbit for regression comparisons.
    """
    k, n = tau.shape
    basis = []
    for i in range(k):
        v = tau[i].copy()
        for b in basis:
            v -= (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-12 * max(1.0, np.linalg.norm(tau[i])):
            basis.append(v / nv)
        if len(basis) == n:
            break
    for e in np.eye(n):
        if len(basis) == n:
            break
        v = e.copy()
        for b in basis:
            v -= (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-10:
            basis.append(v / nv)
    R = np.array(basis)
    return tau @ R.T


def _symmetry_tag(tau: np.ndarray) -> str:
    k = tau.shape[0]
    if k == 1:
        return "single-peak" if np.max(np.abs(tau)) < 1e-8 else "none-detected"
    radii = np.linalg.norm(tau, axis=1)
    r0 = radii.mean()
    if r0 <= 0:
        return "none-detected"
    equal_radii = np.max(np.abs(radii - r0)) < 1e-6 * r0
    if k == 2:
        if equal_radii and np.linalg.norm(tau[0] + tau[1]) < 1e-6 * r0:
            return "antipodal-pair"
        return "none-detected"
    # planar regular k-gon: equal radii, rank <= 2, vertex distance multiset
    if equal_radii and np.linalg.matrix_rank(tau, tol=1e-8 * r0) <= 2:
        dists = np.sort(
            [np.linalg.norm(tau[i] - tau[j]) for i in range(k) for j in range(i + 1, k)]
        )
        expected = np.sort(
            [2 * r0 * np.sin(np.pi * abs(i - j) / k) for i in range(k) for j in range(i + 1, k)]
        )
        if np.max(np.abs(dists - expected)) < 1e-6 * r0:
            return "regular-polygon"
    return "none-detected"


def find_critical_config(
    k: int,
    geo: GeometryData,
    table: ConstantsTable,
    opts: OptimizerOptions | None = None,
    d0: float | None = None,
) -> OptimizerReport:
    """Locate an interior maximum of the reduced energy in tau (d fixed at 0).

    d0 defaults to the optimal base scale of the geometry; it may be supplied
    explicitly when the geometry's Weyl norm is synthetic.  The search warns
    and proceeds when the confinement form is not positive definite.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    opts = opts or OptimizerOptions()
    N = geo.dim.n
    Q = geo.weyl_hessian
    eigs = np.linalg.eigvalsh(Q)
    if eigs.min() <= 0:
        warnings.warn(
            "confinement form is not positive definite: interior maxima may not exist",
            stacklevel=2,
        )
    if d0 is None:
        from .constants import compute_d0

        d0 = compute_d0(table, geo.weyl_norm_sq)
    q_scale = max(float(np.mean(eigs)), 1e-12)
    t2 = two_peak_radius(table, d0, N, q_scale)

    if k == 1:
        tau = np.zeros((1, N))
        cfg = ClusterConfig(k=1, d=np.zeros(1), tau=tau, d0=d0)
        val = eval_J_reduced(cfg, geo, table).total
        return OptimizerReport(
            best=cfg, value=val, grad_norm=0.0, n_starts=opts.n_starts,
            converged_fraction=1.0, symmetry_tag=_symmetry_tag(tau),
            distinct_values=(val,),
        )

    streams = np.random.SeedSequence(opts.seed).spawn(opts.n_starts)

    def run_start(idx: int):
        rng = np.random.default_rng(streams[idx])
        dirs = rng.normal(size=(k, N))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = t2 * (1.0 + 0.2 * rng.uniform(-1, 1, size=(k, 1)))
        tau0 = dirs * radii
        if _min_separation(tau0) < 1e-3 * t2:
            tau0 += 0.1 * t2 * rng.normal(size=(k, N))
        try:
            return _ascend(tau0, k, d0, geo, table, opts, length_scale=t2)
        except ValueError:
            return None

    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            results = list(pool.map(run_start, range(opts.n_starts)))
    else:
        results = [run_start(i) for i in range(opts.n_starts)]

    converged = [r for r in results if r is not None and r[3]]
    if not converged:
        raise RuntimeError(
            f"no start converged out of {opts.n_starts} "
            f"(best scaled gradient {min((r[2] for r in results if r), default=np.inf):.2e})"
        )
    # deterministic merge: best value, ties broken by start order
    best = None
    values = []
    for r in converged:
        values.append(r[1])
        if best is None or r[1] > best[1] + 0.0:
            best = r
    tau, val, gnorm, _, _ = best
    if _is_isotropic(Q):
        tau = canonicalize_tau(tau)
    cfg = ClusterConfig(k=k, d=np.zeros(k), tau=tau, d0=d0)
    distinct: list[float] = []
    for v in sorted(values, reverse=True):
        if not distinct or abs(v - distinct[-1]) > 1e-8 * max(abs(v), 1.0):
            distinct.append(v)
    return OptimizerReport(
        best=cfg,
        value=val,
        grad_norm=gnorm,
        n_starts=opts.n_starts,
        converged_fraction=len(converged) / opts.n_starts,
        symmetry_tag=_symmetry_tag(tau),
        distinct_values=tuple(distinct),
    )


def verify_second_order(
    cfg: ClusterConfig, geo: GeometryData, table: ConstantsTable
) -> tuple[float, bool]:
    """Finite-difference second-order test at a stationary configuration.

    Returns (max eigenvalue of the tau Hessian transverse to exact symmetry
    null directions, is_local_max).  For isotropic confinement the common
    rotation orbit is projected out before the eigenvalue test; the d block
    is exactly -4 B_N times the identity and needs no differencing.
    """
    N = geo.dim.n
    k = cfg.k
    scale = max(float(np.max(np.abs(cfg.tau))), 1.0)
    H = _fd_hessian_from_grad(cfg.tau, k, cfg.d0, geo, table, scale)
    if _is_isotropic(geo.weyl_hessian) and k >= 1:
        generators = []
        for a in range(N):
            for b in range(a + 1, N):
                E = np.zeros((N, N))
                E[a, b], E[b, a] = 1.0, -1.0
                v = (cfg.tau @ E.T).ravel()
                nv = np.linalg.norm(v)
                if nv > 1e-12 * scale:
                    generators.append(v / nv)
        if generators:
            G = np.array(generators).T  # (kN, n_gen), possibly rank-deficient
            U, s, _ = np.linalg.svd(G, full_matrices=False)
            Vmat = U[:, s > 1e-10 * s[0]]
            proj = np.eye(k * N) - Vmat @ Vmat.T
            W, s2, _ = np.linalg.svd(proj)
            Wt = W[:, s2 > 0.5]  # orthonormal basis transverse to the orbit
            H = Wt.T @ H @ Wt
    eigs = np.linalg.eigvalsh(H)
    hess_scale = max(float(np.max(np.abs(eigs))), 1e-30)
    is_max = bool(np.all(eigs <= -1e-12 * hess_scale))
    return float(eigs.max()), is_max
