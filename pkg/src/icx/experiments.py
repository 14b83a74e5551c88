"""Worked-example reproduction and randomized length sweeps."""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .codec import build_code, end_to_end_error
from .errors import BoundViolation, InvalidArgs
from .instance import (Instance, comparison_instance, random_basis, random_requests,
                       random_side_info, stack_system)
from .solver import SolverOptions, solve_pair, solve_unaware

log = logging.getLogger(__name__)

CASES = ("UnawareUSI", "UnawareCSI", "AwareUSI", "AwareCSI")
CSV_COLUMNS = ("sweep_name", "sweep_value", "case", "trials", "mean_length", "std_length",
               "mean_residual", "mean_decode_error", "mean_seconds")
AUDIT_SLACK = 1e-9


# -- worked example ---------------------------------------------------------

@dataclass
class Report:
    lengths: dict
    errors: dict
    expected: dict
    error_limit: dict
    seconds: float
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def lines(self):
        out = []
        for case in ("unaware", "aware"):
            out.append(f"{case}: length {self.lengths[case]} (expected {self.expected[case]}), "
                       f"decoding error {self.errors[case]:.3e}")
        out.append("status: " + ("PASS" if self.ok else "FAIL"))
        out += [f"  mismatch: {f}" for f in self.failures]
        return out


def reproduce_5a(eps=1e-10, t_max=1000, restarts=10, seed=0, basis="example", error_limit=None):
    """Solve the four-user comparison instance with and without its subspace.

    ``basis="identity"`` substitutes T = I, where both lengths must agree.
    The default error limit is ``max(1e-8, eps * ||w||)`` per case.
    """
    t0 = time.perf_counter()
    inst = comparison_instance()
    expected = {"unaware": 2, "aware": 1}
    if basis == "identity":
        inst = inst.with_subspace(np.eye(4))
        expected["aware"] = 2
    opts = SolverOptions(eps=eps, t_max=t_max, restarts=restarts, seed=seed)
    x = np.array([1.0, 1.0, -1.0, 2.0])
    un = solve_unaware(inst, opts)
    # T = I has D = N, which an Instance rejects; solve it as a raw system.
    if basis == "identity":
        system = stack_system(inst.unaware())
        aw = un
    else:
        system = stack_system(inst)
        _, aw = solve_pair(inst, opts, unaware_result=un)
    lengths = {"unaware": un.length, "aware": aw.length}
    errors = {
        "unaware": end_to_end_error(inst.unaware(), build_code(un, stack_system(inst.unaware())), x).total,
        "aware": end_to_end_error(inst if basis != "identity" else inst.unaware(),
                                  build_code(aw, system), x).total,
    }
    w_norm = {"unaware": float(np.linalg.norm(x)),
              "aware": 1.0 if basis != "identity" else float(np.linalg.norm(x))}
    limits = {c: error_limit if error_limit is not None else max(1e-8, eps * w_norm[c]) for c in w_norm}
    failures = []
    for case in ("unaware", "aware"):
        if lengths[case] != expected[case]:
            failures.append(f"{case} length {lengths[case]} != {expected[case]}")
        if not errors[case] <= limits[case]:
            failures.append(f"{case} decoding error {errors[case]:.3e} > {limits[case]:g}")
    return Report(lengths, errors, expected, limits, time.perf_counter() - t0, failures)


# -- sweeps -----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    n: int = 20
    u: int = 20
    v_per_user: int = 5
    m_per_user: int = 15
    d: int = 15
    trials: int = 20
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    sweep_values: tuple = ()
    cases: tuple = CASES
    timing: bool = True
    jobs: int = 1

    def check(self, sweep):
        if self.trials < 1:
            raise InvalidArgs("trials must be at least 1")
        bad = set(self.cases) - set(CASES)
        if bad:
            raise InvalidArgs(f"unknown cases {sorted(bad)}")
        if not self.sweep_values:
            raise InvalidArgs("empty sweep")
        if self.v_per_user < 1 or self.v_per_user > self.n:
            raise InvalidArgs("need 1 <= v <= n")
        dims = self.sweep_values if sweep == "d" else (self.d,)
        ms = self.sweep_values if sweep == "m" else (self.m_per_user,)
        if any(not 1 <= d < self.n for d in dims):
            raise InvalidArgs(f"subspace dimensions must lie in [1, {self.n - 1}]")
        if any(not 0 <= m < self.n for m in ms):
            raise InvalidArgs(f"side information sizes must lie in [0, {self.n - 1}]")
        if any(c.endswith("USI") for c in self.cases) and any(m + self.v_per_user > self.n for m in ms):
            raise InvalidArgs("USI needs v + m <= n")


@dataclass
class TrialRecord:
    length: int
    residual: float
    decode_error: float
    seconds: float
    no_transmission: bool


@dataclass
class ExperimentTable:
    sweep_name: str
    rows: list
    records: dict
    metadata: dict

    def lengths(self, value, case):
        return [r.length for r in self.records[(value, case)]]

    def mean(self, value, case):
        return float(np.mean(self.lengths(value, case)))


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key]))


_MODE_KEY = {"USI": 1, "CSI": 2}


def _audit(inst, result, eps, rng):
    """Build the code and decode one random latent vector with norm <= 1."""
    code = build_code(result, stack_system(inst))
    w = rng.standard_normal(inst.dim)
    w *= rng.uniform() / max(np.linalg.norm(w), 1e-300)
    x = inst.subspace.basis @ w if inst.aware else w
    err = end_to_end_error(inst, code, x).total
    if err > eps + AUDIT_SLACK:
        raise BoundViolation(f"decoding error {err:.3e} exceeds eps + {AUDIT_SLACK:g}")
    return err


def _record(inst, result, seconds, eps, rng):
    return TrialRecord(result.length, result.solution.residual, _audit(inst, result, eps, rng),
                       seconds, result.no_transmission)


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def _run_trial(sweep, cfg, trial):
    """All cases and sweep values for one trial; the request sets are shared."""
    n, u, v = cfg.n, cfg.u, cfg.v_per_user
    requests = random_requests(_rng(cfg.seed, trial, 0), n, u, v)
    opts = SolverOptions(**{**asdict(cfg.solver), "seed": int(_rng(cfg.seed, trial, 9).integers(2**31))})
    audit_rng = _rng(cfg.seed, trial, 7)
    modes = sorted({c[-3:] for c in cfg.cases}, key=lambda m: _MODE_KEY[m])
    out = {}
    if sweep == "d":
        m_values, d_values = [cfg.m_per_user], list(cfg.sweep_values)
    else:
        m_values, d_values = list(cfg.sweep_values), [cfg.d]
    for mode in modes:
        for m in m_values:
            users = random_side_info(_rng(cfg.seed, trial, 1, _MODE_KEY[mode], m), requests, n, m, mode)
            base = Instance(n, users)
            un, un_s = _timed(solve_unaware, base, opts)
            un_rec = _record(base, un, un_s, opts.eps, audit_rng)
            for d in d_values:
                value = d if sweep == "d" else m
                if f"Unaware{mode}" in cfg.cases:
                    out[(value, f"Unaware{mode}")] = un_rec
                if f"Aware{mode}" not in cfg.cases:
                    continue
                inst = base.with_subspace(random_basis(_rng(cfg.seed, trial, 2, d), n, d))
                (_, aw), aw_s = _timed(solve_pair, inst, opts, unaware_result=un)
                if aw.length > un.length:
                    raise BoundViolation(f"trial {trial}, {mode}, {sweep}={value}: aware length "
                                         f"{aw.length} > unaware {un.length}")
                out[(value, f"Aware{mode}")] = _record(inst, aw, aw_s, opts.eps, audit_rng)
    return out


def _run_sweep(sweep, cfg):
    cfg.check(sweep)
    args = [(sweep, cfg, t) for t in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            per_trial = list(pool.map(_run_trial, *zip(*args)))
    else:
        per_trial = [_run_trial(*a) for a in args]
    name = "subspace_dim" if sweep == "d" else "side_info"
    records = {}
    rows = []
    for value in cfg.sweep_values:
        for case in cfg.cases:
            recs = [pt[(value, case)] for pt in per_trial]
            records[(value, case)] = recs
            L = np.array([r.length for r in recs], dtype=float)
            secs = float(np.mean([r.seconds for r in recs])) if cfg.timing else float("nan")
            rows.append({"sweep_name": name, "sweep_value": value, "case": case, "trials": len(recs),
                         "mean_length": float(L.mean()), "std_length": float(L.std()),
                         "mean_residual": float(np.mean([r.residual for r in recs])),
                         "mean_decode_error": float(np.mean([r.decode_error for r in recs])),
                         "mean_seconds": secs})
    meta = {"config": {k: v for k, v in asdict(cfg).items() if k not in ("jobs",)},
            "seed": cfg.seed, "version": __version__}
    return ExperimentTable(name, rows, records, meta)


def sweep_subspace_dim(config):
    return _run_sweep("d", config)


def sweep_side_info(config):
    return _run_sweep("m", config)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_csv(table, path):
    rows = table.rows if table is not None else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
