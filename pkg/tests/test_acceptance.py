"""Acceptance criteria 1-10, one test each; a PASS/FAIL line per criterion is
printed in the terminal summary."""

import time

import numpy as np
import pytest

from icx.codec import build_code, end_to_end_error
from icx.experiments import ExperimentConfig, reproduce_5a, sweep_side_info, sweep_subspace_dim, write_csv
from icx.instance import generate_random, stack_system
from icx.numerics import Tolerances, numerical_rank, pseudo_inverse, row_combination, select_independent_rows
from icx.oracle import brute_force_tiny, proven_lower_bound, trivial_upper_bound
from icx.solver import SolverOptions, add_run_observer, min_length, remove_run_observer, solve_pair

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

ARTIFACTS = {}
RUNS = {"count": 0, "bad": 0}


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


@pytest.fixture(scope="module", autouse=True)
def trace_watch():
    def watch(sol):
        trace = sol.objective_trace
        slack = 1e-9 * (1 + trace[0])
        RUNS["count"] += 1
        RUNS["bad"] += any(b > a + slack for a, b in zip(trace, trace[1:]))
    add_run_observer(watch)
    yield
    remove_run_observer(watch)


def csv_bytes(table, tmp):
    path = tmp / f"{table.sweep_name}.csv"
    write_csv(table, path)
    return path.read_bytes()


# -- runners (deterministic; the byte artifacts feed criterion 10) -----------

def run_c1():
    rep = reproduce_5a(eps=1e-10, t_max=1000, restarts=10, seed=0)
    ok = rep.ok and rep.lengths == {"unaware": 2, "aware": 1} and max(rep.errors.values()) <= 1e-8
    detail = (f"lengths {rep.lengths['unaware']}/{rep.lengths['aware']}, errors "
              f"{rep.errors['unaware']:.2e}/{rep.errors['aware']:.2e}")
    return ok, detail, "\n".join(rep.lines()).encode(), rep.seconds


def _random_case(i):
    rng = np.random.default_rng(np.random.SeedSequence([2024, i]))
    n = int(rng.integers(4, 21))
    u = int(rng.integers(2, 7))
    v = int(rng.integers(1, min(3, n // 2) + 1))
    mode = ("USI", "CSI")[i % 2]
    m = int(rng.integers(0, n - v + 1 if mode == "USI" else n))
    d = int(rng.integers(1, n))
    return generate_random(n, u, v, m, d, mode, seed=i)


def run_random_suite(count=200, audits=10):
    """Criteria 2-4 over one shared set of random solves."""
    t0 = time.perf_counter()
    out = {"aware_ok": 0, "audit_bad": 0, "audits": 0, "bound_bad": 0, "solves": 0, "max_err": 0.0}
    lines = []
    for i in range(count):
        inst = _random_case(i)
        opts = SolverOptions(seed=i)
        un, aw = solve_pair(inst, opts)
        out["aware_ok"] += aw.length <= un.length
        rng = np.random.default_rng(np.random.SeedSequence([7, i]))
        worst = 0.0
        for case, res in ((inst.unaware(), un), (inst, aw)):
            system = stack_system(case)
            out["solves"] += 1
            lb = proven_lower_bound(system, opts.eps)
            ub = trivial_upper_bound(system)[0]
            out["bound_bad"] += not (res.converged and lb <= res.length <= ub)
            if not res.converged:
                continue
            code = build_code(res, system)
            for _ in range(audits):
                w = rng.standard_normal(system.dim)
                w *= rng.uniform() / np.linalg.norm(w)
                err = end_to_end_error(case, code, system.T @ w).total
                worst = max(worst, err)
                out["audits"] += 1
                out["audit_bad"] += err > opts.eps + 1e-9
        out["max_err"] = max(out["max_err"], worst)
        lines.append(f"{i},{inst.n_packets},{inst.dim},{un.length},{aw.length},{worst:.6g}")
    out["seconds"] = time.perf_counter() - t0
    out["artifact"] = "\n".join(lines).encode()
    return out


def sylvester_draws(count=100):
    bad = 0
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([99, i]))
        inst = _random_case(1000 + i)
        system = stack_system(inst)
        A = np.zeros((system.total_requests, system.S.shape[0]))
        for j in range(system.n_users):
            r0, r1 = system.row_offsets[j], system.row_offsets[j + 1]
            c0, c1 = system.side_offsets[j], system.side_offsets[j + 1]
            A[r0:r1, c0:c1] = rng.standard_normal((r1 - r0, c1 - c0))
        fit = system.R - A @ system.S
        bad += numerical_rank(fit @ system.T) < numerical_rank(fit) - (inst.n_packets - inst.dim)
    return bad


def _tiny_instances():
    """Ten instances with 1-6 free decoder entries; aware ones use integer bases."""
    shapes = [(3, 2, 1, None), (3, 3, 1, None), (4, 2, 2, None), (4, 3, 2, None), (4, 3, 2, 3),
              (3, 3, 2, None), (4, 2, 3, None), (5, 3, 2, None), (5, 2, 3, 4), (4, 3, 1, 3)]
    out = []
    for i, (n, u, m, d) in enumerate(shapes):
        inst = generate_random(n, u, 1, m, None, "USI", seed=i)
        if d is not None:
            rng = np.random.default_rng(i)
            while True:
                T = rng.integers(-2, 3, size=(n, d)).astype(float)
                if numerical_rank(T) == d:
                    break
            inst = inst.with_subspace(T)
        out.append(inst)
    return out


def run_c6():
    t0 = time.perf_counter()
    lines, below, equal = [], 0, 0
    for i, inst in enumerate(_tiny_instances()):
        system = stack_system(inst)
        k = sum(len(u.requests) * len(u.side_info.indices) for u in inst.users)
        # The default grid has 25 points per entry; coarsen it past four entries.
        grid = (-3.0, 3.0, 0.25) if k <= 4 else (-3.0, 3.0, 0.5)
        brute = brute_force_tiny(system, grid=grid)
        found = min_length(system, SolverOptions(seed=i)).length
        below += found <= brute
        equal += found == brute
        lines.append(f"{i},{k},{found},{brute}")
    seconds = time.perf_counter() - t0
    ok = below == 10 and equal >= 8 and seconds < 300
    return ok, f"solver <= grid on {below}/10, equal on {equal}/10, {seconds:.1f}s", "\n".join(lines).encode(), seconds


C7_D = (1, 2, 3, 4, 5, 6, 7, 8, 19)


def run_c7(tmp):
    cfg = ExperimentConfig(n=20, u=20, v_per_user=5, m_per_user=15, trials=20, seed=0, sweep_values=C7_D,
                           cases=("UnawareUSI", "AwareUSI"), timing=False)
    t0 = time.perf_counter()
    table = sweep_subspace_dim(cfg)
    seconds = time.perf_counter() - t0
    low = {d: table.mean(d, "AwareUSI") / table.mean(d, "UnawareUSI") for d in C7_D if d <= 8}
    high = table.mean(19, "AwareUSI") / table.mean(19, "UnawareUSI")
    ok = all(r <= 0.3 for r in low.values()) and high >= 0.8 and seconds < 1200
    detail = (f"D<=8 worst ratio {max(low.values()):.3f} (<= 0.3), D=19 ratio {high:.3f} (>= 0.8), "
              f"unaware mean {table.mean(19, 'UnawareUSI'):.2f}, {seconds:.0f}s")
    return ok, detail, csv_bytes(table, tmp), seconds


def run_c8(tmp):
    cfg = ExperimentConfig(n=20, u=20, v_per_user=5, d=15, trials=20, seed=0, sweep_values=(10,), timing=False)
    t0 = time.perf_counter()
    table = sweep_side_info(cfg)
    seconds = time.perf_counter() - t0
    ratios = {m: table.mean(10, f"Aware{m}") / table.mean(10, f"Unaware{m}") for m in ("USI", "CSI")}
    ok = all(r <= 0.7 for r in ratios.values())
    detail = f"aware/unaware USI {ratios['USI']:.3f}, CSI {ratios['CSI']:.3f} (<= 0.7), {seconds:.0f}s"
    return ok, detail, csv_bytes(table, tmp), seconds


def _test_matrix(rng, i):
    m, n = (int(x) for x in rng.integers(1, 13, size=2))
    if i % 3 == 0:
        return rng.standard_normal((m, n))
    k = int(rng.integers(0, min(m, n) + 1))
    M = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
    return M * (10.0 ** rng.uniform(-3, 3)) if i % 3 == 2 else M


def run_c9(count=100):
    bad_mp, bad_sel = 0, 0
    tol = Tolerances()
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([9, i]))
        M = _test_matrix(rng, i)
        P = pseudo_inverse(M)
        lim = 1e-9 * (1 + np.linalg.norm(M))
        checks = [M @ P @ M - M, (P @ M @ P - P) / max(1.0, np.linalg.norm(P)),
                  (M @ P).T - M @ P, (P @ M).T - P @ M]
        bad_mp += any(np.linalg.norm(c) > lim for c in checks)
        r = numerical_rank(M)
        idx, Mt = select_independent_rows(M)
        ok = len(idx) == r and numerical_rank(Mt) == r and list(idx) == sorted(set(idx))
        if r:
            B = row_combination(Mt, M)
            ok &= np.linalg.norm(B @ Mt - M) <= tol.fit_abs * (1 + np.linalg.norm(M))
        ok &= numerical_rank(M.T) == r and numerical_rank(3.0 * M) == r
        bad_sel += not ok
    lines = f"{bad_mp},{bad_sel}".encode()
    return bad_mp == 0 and bad_sel == 0, f"Moore-Penrose violations {bad_mp}, rank/selection violations {bad_sel}", lines


# -- tests --------------------------------------------------------------------

@pytest.fixture(scope="module")
def random_suite():
    return run_random_suite()


def test_criterion_01_worked_example():
    ok, detail, art, seconds = run_c1()
    ARTIFACTS[1] = art
    record(1, ok and seconds < 5, f"{detail}, {seconds:.2f}s")


def test_criterion_02_aware_never_longer(random_suite):
    s = random_suite
    ARTIFACTS[2] = s["artifact"]
    record(2, s["aware_ok"] == 200 and s["seconds"] < 600,
           f"aware <= unaware on {s['aware_ok']}/200, {s['seconds']:.0f}s")


def test_criterion_03_decoding_audit(random_suite):
    s = random_suite
    record(3, s["audit_bad"] == 0,
           f"{s['audit_bad']} violations in {s['audits']} decodes, max error {s['max_err']:.2e}")


def test_criterion_04_bound_sandwich(random_suite):
    s = random_suite
    syl = sylvester_draws()
    ARTIFACTS[4] = f"{s['bound_bad']},{syl}".encode()
    record(4, s["bound_bad"] == 0 and syl == 0,
           f"bound violations {s['bound_bad']} of {s['solves']} solves, Sylvester violations {syl}/100")


def test_criterion_06_tiny_oracle():
    ok, detail, art, _ = run_c6()
    ARTIFACTS[6] = art
    record(6, ok, detail)


def test_criterion_07_subspace_trend(tmp_path):
    ok, detail, art, _ = run_c7(tmp_path)
    ARTIFACTS[7] = art
    record(7, ok, detail)


def test_criterion_08_side_info_trend(tmp_path):
    ok, detail, art, _ = run_c8(tmp_path)
    ARTIFACTS[8] = art
    record(8, ok, detail)


def test_criterion_09_numerics():
    ok, detail, art = run_c9()
    ARTIFACTS[9] = art
    record(9, ok, detail)


def test_criterion_10_determinism(tmp_path):
    again = {1: run_c1()[2], 6: run_c6()[2], 7: run_c7(tmp_path)[2], 8: run_c8(tmp_path)[2], 9: run_c9()[2]}
    suite = run_random_suite()
    again[2] = suite["artifact"]
    again[4] = f"{suite['bound_bad']},{sylvester_draws()}".encode()
    missing = sorted(set(again) - set(ARTIFACTS))
    differ = sorted(k for k in again if k in ARTIFACTS and again[k] != ARTIFACTS[k])
    record(10, not missing and not differ,
           f"{len(again) - len(differ) - len(missing)}/{len(again)} outputs byte-identical"
           + (f"; differ {differ}" if differ else "") + (f"; not run first {missing}" if missing else ""))


def test_criterion_05_monotone_objective():
    # Last, so it covers every alternating-minimization run made by this module.
    record(5, RUNS["count"] > 0 and RUNS["bad"] == 0,
           f"{RUNS['bad']} non-monotone traces in {RUNS['count']} runs")
