"""Length bounds and a brute-force reference for tiny instances."""

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation, InvalidArgs, TooLarge
from .numerics import DEFAULT_TOL, numerical_rank


@dataclass
class Certificate:
    lower_bound: int
    achieved: int
    trivial_upper: int
    corollary_bounds: tuple = None
    corollary_printed: tuple = None
    optimal: bool = False
    aware_le_unaware: bool = None
    corollary_consistent: bool = None
    notes: list = field(default_factory=list)

    def lines(self, verbose=False):
        out = [f"lower_bound: {self.lower_bound}",
               f"achieved: {self.achieved}",
               f"trivial_upper: {self.trivial_upper}",
               f"optimal: {str(self.optimal).lower()}"]
        if self.corollary_bounds is not None:
            lb, ub = self.corollary_bounds
            out.append(f"corollary_bounds: [{lb}, {ub}]")
            if verbose:
                out.append(f"corollary_printed_form: [{self.corollary_printed[0]}, {self.corollary_printed[1]}]")
            out.append(f"aware_le_unaware: {str(self.aware_le_unaware).lower()}")
            out.append(f"corollary_consistent: {str(self.corollary_consistent).lower()}")
        if verbose:
            out += [f"note: {n}" for n in self.notes]
        return out


def lower_bound_unconstrained(system, tol=DEFAULT_TOL):
    """``rank([RT; ST]) - rank(ST)``: the minimum rank when A is unrestricted."""
    RT = system.R @ system.T
    ST = system.S @ system.T
    return max(0, numerical_rank(np.vstack([RT, ST]), tol) - numerical_rank(ST, tol))


def trivial_upper_bound(system):
    L = min(system.dim, system.total_requests)
    if system.dim <= system.total_requests:
        desc = "C = (T^T T)^-1 T^T, B = R T, A = 0 (send the latent coordinates)"
    else:
        desc = "C = R, B = I, A = 0 (send every requested packet)"
    return L, desc


def corollary1_bounds(l_unaware, n, d):
    """``(max(L~ - (N - D), 1), L~)`` for an unaware length ``L~``."""
    if l_unaware < 1 or not 1 <= d <= n:
        raise InvalidArgs(f"need L~ >= 1 and 1 <= d <= n (got {l_unaware}, {n}, {d})")
    return max(l_unaware - (n - d), 1), l_unaware


def corollary1_printed(l_unaware, n, d):
    """The min-form lower end, reported alongside the clamped one."""
    return min(l_unaware - (n - d), 1), l_unaware


def _free_entries(system, block_diagonal):
    if block_diagonal:
        pos = []
        for j in range(system.n_users):
            for a in range(system.row_offsets[j], system.row_offsets[j + 1]):
                for b in range(system.side_offsets[j], system.side_offsets[j + 1]):
                    pos.append((a, b))
        return pos
    return [(a, b) for a in range(system.total_requests) for b in range(system.S.shape[0])]


def _ranks(mats, rank_rel):
    s = np.linalg.svd(mats, compute_uv=False)
    top = s[:, :1]
    return np.where(top[:, 0] > 0, np.count_nonzero(s > rank_rel * top, axis=1), 0)


def brute_force_tiny(system, grid=(-3.0, 3.0, 0.25), max_dims=6, refinements=200,
                     block_diagonal=True, seed=0, tol=DEFAULT_TOL, chunk=65536):
    """Smallest numerical rank of ``(R - A S) T`` over a grid of A entries.

    Every free entry of A takes every grid value; the best grid point is then
    perturbed randomly ``refinements`` times. A grid can miss exact
    cancellations at off-grid values, so the result upper-bounds the true
    minimum. ``block_diagonal=False`` lets every entry of A vary.
    """
    pos = _free_entries(system, block_diagonal)
    if len(pos) > max_dims:
        raise TooLarge(f"{len(pos)} free entries exceed max_dims={max_dims}")
    RT = system.R @ system.T
    ST = system.S @ system.T
    if not pos:
        return numerical_rank(RT, tol)
    lo, hi, step = grid
    values = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    rows = np.array([p[0] for p in pos])
    cols = np.array([p[1] for p in pos])
    k = len(pos)
    total = len(values) ** k
    best, best_a = None, None

    def evaluate(A_vals):
        A = np.zeros((A_vals.shape[0], system.total_requests, system.S.shape[0]))
        A[:, rows, cols] = A_vals
        return _ranks(RT[None] - A @ ST[None], tol.rank_rel)

    radix = len(values) ** np.arange(k - 1, -1, -1)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        digits = (flat[:, None] // radix[None, :]) % len(values)
        A_vals = values[digits]
        r = evaluate(A_vals)
        i = int(np.argmin(r))
        if best is None or r[i] < best:
            best, best_a = int(r[i]), A_vals[i]
        if best == 0:
            return 0
    rng = np.random.default_rng(seed)
    pert = best_a[None] + rng.uniform(-step / 2, step / 2, size=(refinements, k))
    r = evaluate(pert)
    return int(min(best, int(r.min())))


def proven_lower_bound(system, opts_eps, tol=DEFAULT_TOL):
    """Largest lower bound that holds independently of the heuristic."""
    from .solver import _Fit
    lb = lower_bound_unconstrained(system, tol)
    if _Fit(system, tol).best_side_residual() > opts_eps:
        lb = max(lb, 1)
    return lb


def certify(length_result, system, eps=DEFAULT_TOL.fit_abs, l_unaware=None,
            unaware_optimal=False, tol=DEFAULT_TOL):
    """Bound sandwich around a solver length.

    ``l_unaware`` enables the aware-vs-unaware checks; its lower end only
    counts as proven when ``unaware_optimal`` says the unaware length was
    itself certified.
    """
    achieved = length_result.length
    lb = proven_lower_bound(system, eps, tol)
    ub, desc = trivial_upper_bound(system)
    notes = [f"trivial code: {desc}"]
    cert = Certificate(lb, achieved, ub, notes=notes)
    proven = [lb]
    if l_unaware is not None and l_unaware >= 1:
        n, d = system.n_packets, system.dim
        cert.corollary_bounds = corollary1_bounds(l_unaware, n, d)
        cert.corollary_printed = corollary1_printed(l_unaware, n, d)
        cert.aware_le_unaware = achieved <= l_unaware
        cert.corollary_consistent = achieved >= cert.corollary_bounds[0]
        if unaware_optimal:
            proven.append(cert.corollary_bounds[0])
        else:
            notes.append("unaware length is heuristic; its corollary lower end is recorded, not enforced")
        if cert.corollary_printed[0] < 1:
            notes.append("printed min-form lower end is below 1; the max-form is used")
    cert.lower_bound = max(proven)
    if length_result.converged:
        if achieved < cert.lower_bound:
            raise BoundViolation(f"achieved length {achieved} below proven lower bound {cert.lower_bound}")
        if achieved > ub:
            raise BoundViolation(f"achieved length {achieved} above trivial upper bound {ub}")
        if cert.aware_le_unaware is False:
            raise BoundViolation(f"aware length {achieved} exceeds unaware length {l_unaware}")
    cert.optimal = bool(length_result.converged and achieved == cert.lower_bound)
    return cert
