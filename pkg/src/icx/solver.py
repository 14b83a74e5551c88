"""Alternating minimization for low-rank fitting and the outer rank sweep.

At a fixed target rank ``r`` we minimize ``||X Y - (R - A S) T||_F`` over
the block-diagonal decoder part ``A`` and the factors ``X`` (rows x r) and
``Y`` (r x D), cycling exact least-squares updates A -> X -> Y. The code
length is the smallest ``r`` whose best residual drops below ``eps``.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import InvalidArgs, InvalidRank, NoFeasibleRank, ShapeMismatch
from .instance import stack_system
from .numerics import DEFAULT_TOL, pseudo_inverse, truncated_svd

log = logging.getLogger(__name__)

STALL_WINDOW = 10
_observers = []


def add_run_observer(fn):
    """Call ``fn(solution)`` for every alternating-minimization run."""
    _observers.append(fn)


def remove_run_observer(fn):
    _observers.remove(fn)

# Projected-rate early exit: checked every RATE_WINDOW iterations after
# RATE_WARMUP; a run is dropped when its current rate would need more than
# RATE_SLACK * t_max iterations in total to reach eps.
RATE_WARMUP = 100
RATE_WINDOW = 50
RATE_SLACK = 3.0


@dataclass(frozen=True)
class SolverOptions:
    eps: float = 1e-8
    t_max: int = 1000
    restarts: int = 10
    seed: int = 0
    init_scale: float = 1.0
    stall_tol: float = 1e-12

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidArgs("eps must be positive")
        if self.t_max < 1:
            raise InvalidArgs("t_max must be at least 1")
        if self.restarts < 1:
            raise InvalidArgs("restarts must be at least 1")
        if not self.init_scale > 0:
            raise InvalidArgs("init_scale must be positive")


@dataclass
class Solution:
    rank_r: int
    A_blocks: list
    X: np.ndarray
    Y: np.ndarray
    residual: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    init: str = "random"

    @property
    def Z(self):
        return self.X @ self.Y

    def A_matrix(self):
        """Block-diagonal assembly of the per-user decoder parts."""
        rows = sum(a.shape[0] for a in self.A_blocks)
        cols = sum(a.shape[1] for a in self.A_blocks)
        A = np.zeros((rows, cols))
        i = k = 0
        for a in self.A_blocks:
            A[i:i + a.shape[0], k:k + a.shape[1]] = a
            i += a.shape[0]
            k += a.shape[1]
        return A


@dataclass
class LengthResult:
    length: int
    solution: Solution
    per_rank_log: list
    warm_start_used: bool = False
    no_transmission: bool = False
    seconds: float = 0.0

    @property
    def converged(self):
        return self.solution.converged


class _Fit:
    """Per-system constants reused by every iteration.

    Iterations run in an orthonormal basis ``Q`` of the subspace
    (``T = Q Rt``); fits map back through ``Y -> Y Rt``. The working
    threshold is ``eps / ||Rt||_2`` so a working fit within it is within
    ``eps`` in the original coordinates.
    """

    def __init__(self, system, tol=DEFAULT_TOL):
        self.system = system
        self.tol = tol
        if system.aware:
            Q, Rt = np.linalg.qr(system.T)
            self.Rt = Rt
            self.scale = float(np.linalg.norm(Rt, 2))
        else:
            Q, self.Rt, self.scale = system.T, None, 1.0
        self.Tw = Q
        self.RT = system.R @ Q
        D = Q.shape[1]
        self.side_pinv = []
        self.side_T = []
        proj = []
        for j in range(system.n_users):
            ST = system.S_block(j) @ Q
            P = pseudo_inverse(ST, tol)
            self.side_T.append(ST)
            self.side_pinv.append(P)
            proj.append(P @ ST if ST.shape[0] else np.zeros((D, D)))
        self.proj = proj
        counts = np.diff(system.row_offsets)
        self._uniform = system.n_users > 0 and bool(np.all(counts == counts[0]))
        if self._uniform:
            self._proj_stack = np.stack(proj)
        else:
            rows_of = system.user_of_rows()
            self._row_proj = np.stack([proj[j] for j in rows_of]) if len(rows_of) else np.zeros((0, D, D))

    def project(self, E):
        """Row-wise projection of ``E`` (``(..., rows, D)``) onto each user's side span."""
        if self._uniform:
            U = self.system.n_users
            lead = E.shape[:-2]
            V = E.shape[-2] // U
            return (E.reshape(*lead, U, V, E.shape[-1]) @ self._proj_stack).reshape(E.shape)
        return (E[..., None, :] @ self._row_proj)[..., 0, :]

    def fitted(self, Z):
        """``(R - A S) T`` for the A that is optimal given ``Z``."""
        return self.RT - self.project(self.RT - Z)

    def A_blocks(self, Z):
        off = self.system.row_offsets
        return [(self.RT[off[j]:off[j + 1]] - Z[off[j]:off[j + 1]]) @ self.side_pinv[j]
                for j in range(self.system.n_users)]

    def fitted_from_A(self, A_blocks):
        s = self.system
        out = self.RT.copy()
        for j, Aj in enumerate(A_blocks):
            if Aj.size:
                out[s.row_offsets[j]:s.row_offsets[j + 1]] -= Aj @ self.side_T[j]
        return out

    def eps_work(self, eps):
        return eps / self.scale

    def to_original(self, M):
        return M if self.Rt is None else M @ self.Rt

    def from_original(self, M):
        if self.Rt is None:
            return M
        return scipy.linalg.solve_triangular(self.Rt, np.asarray(M).T, trans="T").T

    def original_residual(self, Z, A_blocks):
        """``||Z - (R - A S) T||_F`` in the caller's basis for a working-basis ``Z``."""
        return float(np.linalg.norm(self.to_original(Z - self.fitted_from_A(A_blocks))))

    def best_side_residual(self):
        """Residual of the best A with nothing transmitted (rank 0)."""
        return float(np.linalg.norm(self.to_original(self.fitted(np.zeros_like(self.RT)))))


def update_A(R_blocks, S_blocks, T_eff, Z_blocks, tol=DEFAULT_TOL):
    """Closed-form decoder update ``A_j = (R_j T - Z_j)(S_j T)^+`` per user."""
    if not len(R_blocks) == len(S_blocks) == len(Z_blocks):
        raise ShapeMismatch("block lists differ in length")
    out = []
    for Rj, Sj, Zj in zip(R_blocks, S_blocks, Z_blocks):
        Rj, Sj, Zj = (np.asarray(a, dtype=float) for a in (Rj, Sj, Zj))
        if Rj.shape[0] != Zj.shape[0] or Zj.shape[1] != T_eff.shape[1]:
            raise ShapeMismatch(f"Z block {Zj.shape} incompatible with R block {Rj.shape} and T {T_eff.shape}")
        if Sj.shape[0] == 0:
            out.append(np.zeros((Rj.shape[0], 0)))
            continue
        if Sj.shape[1] != T_eff.shape[0]:
            raise ShapeMismatch(f"S block {Sj.shape} incompatible with T {T_eff.shape}")
        out.append((Rj @ T_eff - Zj) @ pseudo_inverse(Sj @ T_eff, tol))
    return out


def update_factors(target, X, Y, tol=DEFAULT_TOL):
    """One X-then-Y least-squares sweep against ``target``."""
    target = np.asarray(target, dtype=float)
    if X.shape[0] != target.shape[0] or Y.shape[1] != target.shape[1] or X.shape[1] != Y.shape[0]:
        raise ShapeMismatch(f"X {X.shape}, Y {Y.shape} incompatible with target {target.shape}")
    X_new = target @ pseudo_inverse(Y, tol)
    Y_new = pseudo_inverse(X_new, tol) @ target
    return X_new, Y_new


def _restart_rng(seed, r, k):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(r), int(k)]))


def _pinv_stack(M, rel):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cut = rel * s[..., :1]
    s_inv = np.divide(1.0, s, out=np.zeros_like(s), where=s > cut)
    return np.swapaxes(Vt, -1, -2) @ (s_inv[..., :, None] * np.swapaxes(U, -1, -2))


def _hopeless(trace, t, eps, t_max):
    """True when the recent convergence rate cannot reach eps within t_max."""
    if t < RATE_WARMUP or t % RATE_WINDOW:
        return False
    now, then = trace[-1], trace[-1 - RATE_WINDOW]
    if now <= 0 or then <= 0:
        return False
    if now >= then:
        return True
    per_iter = np.log(now / then) / RATE_WINDOW
    needed = np.log(eps / now) / per_iter
    return t + needed > RATE_SLACK * t_max


def _run(fit, X, Y, A_list, opts, r, inits, eps=None):
    """Iterate a stack of working-basis starting points in lockstep.

    Each run stops on its own when it reaches the working threshold,
    stalls, looks hopeless, or hits t_max; the whole batch stops once any
    run reaches the threshold. Traces hold working-basis residuals.
    """
    pinv_rel = fit.tol.pinv_rel
    eps = fit.eps_work(opts.eps) if eps is None else eps
    K = X.shape[0]
    targets = np.stack([fit.fitted_from_A(A) for A in A_list])
    Z = X @ Y
    res = np.linalg.norm(Z - targets, axis=(1, 2))
    traces = [[float(v)] for v in res]
    iters = np.zeros(K, dtype=int)
    stall = np.zeros(K, dtype=int)
    active = res > eps
    t = 0
    while active.any() and t < opts.t_max:
        idx = np.flatnonzero(active)
        Xa, Ya = X[idx], Y[idx]
        Za = Z[idx]
        target = fit.fitted(Za)
        Xa = target @ _pinv_stack(Ya, pinv_rel)
        Ya = _pinv_stack(Xa, pinv_rel) @ target
        Za = Xa @ Ya
        X[idx], Y[idx], Z[idx] = Xa, Ya, Za
        ra = np.linalg.norm(Za - target, axis=(1, 2))
        t += 1
        for k, v in zip(idx, ra):
            prev = traces[k][-1]
            traces[k].append(float(v))
            iters[k] = t
            if v <= eps:
                active[k] = False
                continue
            stall[k] = stall[k] + 1 if prev - v <= opts.stall_tol * prev else 0
            if stall[k] >= STALL_WINDOW or _hopeless(traces[k], t, eps, opts.t_max):
                active[k] = False
        if (ra <= eps).any():
            break
    out = []
    for k in range(K):
        A_blocks = fit.A_blocks(Z[k]) if iters[k] else A_list[k]
        # Residual is recomputed against the returned A so the pair is consistent.
        residual = fit.original_residual(Z[k], A_blocks)
        out.append(Solution(r, A_blocks, X[k], fit.to_original(Y[k]), residual, int(iters[k]),
                            residual <= opts.eps, traces[k], inits[k]))
    for fn in _observers:
        for sol in out:
            fn(sol)
    return out


def _random_start(fit, r, rng, scale):
    s = fit.system
    X = scale * rng.standard_normal((s.total_requests, r))
    Y = scale * rng.standard_normal((r, s.dim))
    A = [scale * rng.standard_normal((s.row_offsets[j + 1] - s.row_offsets[j],
                                      s.side_offsets[j + 1] - s.side_offsets[j]))
         for j in range(s.n_users)]
    return X, Y, A


def _check_rank(system, r):
    hi = min(system.total_requests, system.dim)
    if not 0 <= r <= hi:
        raise InvalidRank(f"rank {r} outside [0, {hi}]")


def _zero_rank_solution(fit, opts):
    s = fit.system
    Z = np.zeros_like(fit.RT)
    A = fit.A_blocks(Z)
    res = fit.original_residual(Z, A)
    return Solution(0, A, np.zeros((s.total_requests, 0)), np.zeros((0, s.dim)),
                    res, 0, res <= opts.eps, [res], "closed-form")


def alt_min_fixed_rank(system, r, opts=SolverOptions(), warm_start=None, init=None,
                       tol=DEFAULT_TOL, _fit=None):
    """Best-of-restarts alternating minimization at target rank ``r``.

    ``warm_start`` adds a deterministic candidate seeded from the given A
    blocks and the best rank-``r`` truncation of the resulting fit.
    ``init=(X, Y, A_blocks)`` replaces the first random restart.
    """
    _check_rank(system, r)
    fit = _fit or _Fit(system, tol)
    if r == 0:
        return _zero_rank_solution(fit, opts)
    runs = []
    if init is not None:
        X0, Y0, A0 = init
        runs += _run(fit, np.array(X0, float)[None], np.array(fit.from_original(np.array(Y0, float)))[None],
                     [[np.array(a, float) for a in A0]], opts, r, ["given"])
    if warm_start is not None:
        A0 = [np.array(a, float) for a in warm_start]
        X0, Y0, _ = truncated_svd(fit.fitted_from_A(A0), r)
        runs += _run(fit, X0[None], Y0[None], [A0], opts, r, ["warm"])
    if not any(s.converged for s in runs):
        starts = [_random_start(fit, r, _restart_rng(opts.seed, r, k), opts.init_scale)
                  for k in range(opts.restarts)]
        runs += _run(fit, np.stack([s[0] for s in starts]), np.stack([s[1] for s in starts]),
                     [s[2] for s in starts], opts, r, ["random"] * opts.restarts)
    # min() keeps the first of equal residuals, so ties resolve by run order.
    return min(runs, key=lambda s: s.residual)


def pad_rank(solution):
    """Lift a rank-r solution to rank r+1 with an identical residual."""
    X = np.hstack([solution.X, np.zeros((solution.X.shape[0], 1))])
    Y = np.vstack([solution.Y, np.zeros((1, solution.Y.shape[1]))])
    return replace(solution, rank_r=solution.rank_r + 1, X=X, Y=Y, iterations=0,
                   objective_trace=[solution.residual], init="padded")


def min_length(system, opts=SolverOptions(), warm_start=None, lower_bound=None, tol=DEFAULT_TOL):
    """Smallest rank at which the fit becomes feasible."""
    from .oracle import lower_bound_unconstrained

    t0 = time.perf_counter()
    fit = _Fit(system, tol)
    hi = min(system.dim, system.total_requests)
    zero = _zero_rank_solution(fit, opts)
    if zero.converged:
        log.info("all requests satisfiable from side information")
        return LengthResult(0, zero, [(0, zero.residual, True)], False, True,
                            time.perf_counter() - t0)
    lb = lower_bound_unconstrained(system, tol) if lower_bound is None else lower_bound
    start = min(max(1, lb), hi)
    per_rank = []
    warm_used = False
    for r in range(start, hi + 1):
        sol = alt_min_fixed_rank(system, r, opts, warm_start=warm_start, tol=tol, _fit=fit)
        per_rank.append((r, sol.residual, sol.converged))
        log.debug("rank %d: residual %.3e feasible=%s (%s)", r, sol.residual, sol.converged, sol.init)
        if sol.converged:
            warm_used = sol.init == "warm"
            return LengthResult(r, sol, per_rank, warm_used, False, time.perf_counter() - t0)
    raise NoFeasibleRank(f"no rank in [{start}, {hi}] reached eps={opts.eps:g}")


def solve(instance, opts=SolverOptions(), warm_start=None, tol=DEFAULT_TOL):
    return min_length(stack_system(instance, tol), opts, warm_start=warm_start, tol=tol)


def solve_unaware(instance, opts=SolverOptions(), tol=DEFAULT_TOL):
    return solve(instance.unaware(), opts, tol=tol)


def polish(system, solution, eps, opts=SolverOptions(), tol=DEFAULT_TOL):
    """Continue iterating ``solution`` until its residual is at most ``eps``.

    Returns the continued solution (or the input if it already qualifies);
    the caller checks ``residual`` since the budget is still ``t_max``.
    """
    if solution.residual <= eps or solution.rank_r == 0:
        return solution
    fit = _Fit(system, tol)
    A0 = [np.array(a, float) for a in solution.A_blocks]
    # _run updates its stacks in place; copy so the input solution stays intact.
    (out,) = _run(fit, solution.X[None].copy(), np.array(fit.from_original(solution.Y))[None], [A0],
                  replace(opts, eps=eps), solution.rank_r, ["polish"])
    return out if out.residual < solution.residual else solution


def solve_pair(instance, opts=SolverOptions(), tol=DEFAULT_TOL, unaware_result=None):
    """Unaware solve followed by the aware solve warm-started from it.

    The unaware fit is first tightened to ``eps / ||T||_2`` so that its A
    yields a feasible aware candidate at rank ``min(unaware length, D)``.
    """
    un = unaware_result or solve_unaware(instance, opts, tol)
    if not instance.aware:
        return un, un
    system = stack_system(instance, tol)
    target = opts.eps / np.linalg.norm(system.T, 2)
    seed = polish(stack_system(instance.unaware(), tol), un.solution, target, opts, tol)
    if seed.residual > target:
        log.warning("unaware fit polished only to %.3e (> %.3e); aware <= unaware is not "
                    "guaranteed by construction", seed.residual, target)
    aw = min_length(system, opts, warm_start=seed.A_blocks, tol=tol)
    return un, aw
