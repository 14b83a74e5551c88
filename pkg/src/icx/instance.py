"""Problem instances: users, side information, optional subspace basis.

Packet indices are 0-based throughout.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (DuplicateRequest, IndexOutOfRange, InfeasibleParams,
                     ShapeMismatch, ValidationError)
from .numerics import DEFAULT_TOL, numerical_rank

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Uncoded:
    indices: tuple

    def __init__(self, indices=()):
        object.__setattr__(self, "indices", tuple(int(i) for i in indices))

    @property
    def size(self):
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class Coded:
    matrix: np.ndarray

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.ndim == 1:
            m = m.reshape(1, -1) if m.size else m.reshape(0, 0)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def size(self):
        return self.matrix.shape[0]

    def __eq__(self, other):
        return (isinstance(other, Coded) and self.matrix.shape == other.matrix.shape
                and np.array_equal(self.matrix, other.matrix))


@dataclass(frozen=True)
class UserSpec:
    requests: tuple
    side_info: object = field(default_factory=Uncoded)

    def __init__(self, requests, side_info=None):
        object.__setattr__(self, "requests", tuple(int(i) for i in requests))
        object.__setattr__(self, "side_info", Uncoded() if side_info is None else side_info)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    basis: np.ndarray

    def __init__(self, basis):
        b = np.array(basis, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def dim(self):
        return self.basis.shape[1]

    def __eq__(self, other):
        return isinstance(other, SubspaceBasis) and np.array_equal(self.basis, other.basis)


@dataclass(frozen=True)
class Instance:
    n_packets: int
    users: tuple
    subspace: SubspaceBasis = None
    packet_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def aware(self):
        return self.subspace is not None

    @property
    def dim(self):
        return self.subspace.dim if self.aware else self.n_packets

    def unaware(self):
        return Instance(self.n_packets, self.users, None, self.packet_dim)

    def with_subspace(self, basis):
        sub = None if basis is None else SubspaceBasis(basis)
        return Instance(self.n_packets, self.users, sub, self.packet_dim)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass(eq=False)
class StackedSystem:
    """Stacked request selectors, side information and effective basis."""
    R: np.ndarray
    S: np.ndarray
    T: np.ndarray
    row_offsets: list
    side_offsets: list
    aware: bool

    @property
    def n_packets(self):
        return self.R.shape[1]

    @property
    def dim(self):
        return self.T.shape[1]

    @property
    def n_users(self):
        return len(self.row_offsets) - 1

    @property
    def total_requests(self):
        return self.R.shape[0]

    def R_block(self, j):
        return self.R[self.row_offsets[j]:self.row_offsets[j + 1]]

    def S_block(self, j):
        return self.S[self.side_offsets[j]:self.side_offsets[j + 1]]

    def user_of_rows(self):
        return np.repeat(np.arange(self.n_users), np.diff(self.row_offsets))


def build_requirement_matrix(requests, n):
    requests = [int(i) for i in requests]
    for i in requests:
        if not 0 <= i < n:
            raise IndexOutOfRange(f"request index {i} outside [0, {n})")
    if len(set(requests)) != len(requests):
        raise DuplicateRequest(f"duplicate request in {requests}")
    Rj = np.zeros((len(requests), n))
    Rj[np.arange(len(requests)), requests] = 1.0
    return Rj


def side_info_matrix(side_info, n):
    if isinstance(side_info, Coded):
        m = side_info.matrix
        if m.size == 0:
            return np.zeros((0, n))
        if m.shape[1] != n:
            raise ShapeMismatch(f"coded side information has {m.shape[1]} columns, expected {n}")
        return np.array(m)
    idx = list(side_info.indices)
    for i in idx:
        if not 0 <= i < n:
            raise IndexOutOfRange(f"side information index {i} outside [0, {n})")
    if len(set(idx)) != len(idx):
        raise DuplicateRequest(f"duplicate side information index in {idx}")
    Sj = np.zeros((len(idx), n))
    Sj[np.arange(len(idx)), idx] = 1.0
    return Sj


def validate(instance, tol=DEFAULT_TOL):
    """Collect every invariant violation; an empty list means valid."""
    out = []
    n = instance.n_packets
    if not isinstance(n, (int, np.integer)) or n < 1:
        return [Violation("InvalidPacketCount", f"n_packets={n!r} must be a positive integer")]
    if instance.packet_dim != 1:
        out.append(Violation("UnsupportedPacketDim", f"packet_dim={instance.packet_dim}, only 1 is supported"))
    if len(instance.users) == 0:
        out.append(Violation("NoUsers", "instance has no users"))
    for j, u in enumerate(instance.users):
        if len(u.requests) == 0:
            out.append(Violation("EmptyRequests", f"user {j} requests nothing"))
        bad = [i for i in u.requests if not 0 <= i < n]
        if bad:
            out.append(Violation("IndexOutOfRange", f"user {j} requests {bad} outside [0, {n})"))
        if len(set(u.requests)) != len(u.requests):
            out.append(Violation("DuplicateRequest", f"user {j} repeats a request"))
        si = u.side_info
        if isinstance(si, Coded):
            m = si.matrix
            if m.size and (m.ndim != 2 or m.shape[1] != n):
                out.append(Violation("ShapeMismatch", f"user {j} coded side information is {m.shape}, needs {n} columns"))
            elif m.size and not np.all(np.isfinite(m)):
                out.append(Violation("NonFiniteInput", f"user {j} coded side information is not finite"))
        elif isinstance(si, Uncoded):
            bad = [i for i in si.indices if not 0 <= i < n]
            if bad:
                out.append(Violation("IndexOutOfRange", f"user {j} side information {bad} outside [0, {n})"))
            if len(set(si.indices)) != len(si.indices):
                out.append(Violation("DuplicateSideInfo", f"user {j} repeats a side information index"))
        else:
            out.append(Violation("UnknownSideInfo", f"user {j} side information has type {type(si).__name__}"))
            continue
        if si.size >= n:
            out.append(Violation("TooMuchSideInfo", f"user {j} has M_j={si.size} >= N={n}"))
    if instance.subspace is not None:
        T = instance.subspace.basis
        if T.ndim != 2 or T.shape[0] != n:
            out.append(Violation("ShapeMismatch", f"subspace basis is {T.shape}, needs {n} rows"))
        elif not 1 <= T.shape[1] < n:
            out.append(Violation("InvalidSubspaceDim", f"D={T.shape[1]} must satisfy 1 <= D < N={n}"))
        elif not np.all(np.isfinite(T)):
            out.append(Violation("NonFiniteInput", "subspace basis is not finite"))
        elif numerical_rank(T, tol) != T.shape[1]:
            out.append(Violation("RankDeficientBasis",
                                 f"basis rank {numerical_rank(T, tol)} < D={T.shape[1]}"))
    return out


def stack_system(instance, tol=DEFAULT_TOL):
    problems = validate(instance, tol)
    if problems:
        raise ValidationError(problems)
    n = instance.n_packets
    Rs = [build_requirement_matrix(u.requests, n) for u in instance.users]
    Ss = [side_info_matrix(u.side_info, n) for u in instance.users]
    row_off = np.concatenate([[0], np.cumsum([r.shape[0] for r in Rs])]).astype(int).tolist()
    side_off = np.concatenate([[0], np.cumsum([s.shape[0] for s in Ss])]).astype(int).tolist()
    T = np.array(instance.subspace.basis) if instance.aware else np.eye(n)
    return StackedSystem(np.vstack(Rs), np.vstack(Ss), T, row_off, side_off, instance.aware)


def generate_random(n, u, v_per_user, m_per_user, d=None, side_mode="USI", seed=0):
    """Draw a random instance.

    Requests are uniform ``v``-subsets of the packets. USI side sets are
    uniform ``m``-subsets of the packets the user did not request; CSI
    matrices and the basis have i.i.d. standard normal entries.
    """
    side_mode = side_mode.upper()
    if side_mode not in ("USI", "CSI"):
        raise InfeasibleParams(f"unknown side_mode {side_mode!r}")
    if n < 1 or u < 1 or v_per_user < 1 or m_per_user < 0:
        raise InfeasibleParams("n, u, v must be positive and m non-negative")
    if v_per_user > n or m_per_user >= n:
        raise InfeasibleParams(f"need v <= n and m < n (n={n}, v={v_per_user}, m={m_per_user})")
    if side_mode == "USI" and v_per_user + m_per_user > n:
        raise InfeasibleParams(f"USI needs v + m <= n (got {v_per_user} + {m_per_user} > {n})")
    if d is not None and not 1 <= d < n:
        raise InfeasibleParams(f"subspace dimension must satisfy 1 <= d < n (got {d})")
    rng = np.random.default_rng(seed)
    base = random_users(rng, n, u, v_per_user, m_per_user, side_mode)
    inst = Instance(n, base)
    if d is not None:
        inst = inst.with_subspace(random_basis(rng, n, d))
    return inst


def random_users(rng, n, u, v, m, side_mode):
    requests = random_requests(rng, n, u, v)
    return random_side_info(rng, requests, n, m, side_mode)


def random_requests(rng, n, u, v):
    return [np.sort(rng.choice(n, size=v, replace=False)).tolist() for _ in range(u)]


def random_side_info(rng, requests, n, m, side_mode):
    """Attach USI (request-disjoint subsets) or Gaussian CSI to fixed requests."""
    users = []
    for req in requests:
        if side_mode.upper() == "USI":
            rest = np.setdiff1d(np.arange(n), req)
            if m > rest.size:
                raise InfeasibleParams(f"USI needs v + m <= n (got {len(req)} + {m} > {n})")
            si = Uncoded(np.sort(rng.choice(rest, size=m, replace=False)).tolist())
        else:
            si = Coded(rng.standard_normal((m, n)))
        users.append(UserSpec(req, si))
    return tuple(users)


def random_basis(rng, n, d, tol=DEFAULT_TOL):
    while True:
        T = rng.standard_normal((n, d))
        if numerical_rank(T, tol) == d:
            return T


# -- JSON -------------------------------------------------------------------

def instance_to_dict(instance):
    users = []
    for u in instance.users:
        if isinstance(u.side_info, Coded):
            si = {"coded": u.side_info.matrix.tolist()}
        else:
            si = {"uncoded": list(u.side_info.indices)}
        users.append({"requests": list(u.requests), "side_info": si})
    sub = None
    if instance.subspace is not None:
        sub = {"dim": instance.subspace.dim, "basis": instance.subspace.basis.tolist()}
    return {"version": FORMAT_VERSION, "n_packets": instance.n_packets,
            "packet_dim": instance.packet_dim, "subspace": sub, "users": users}


def _field_error(path, msg):
    return ValidationError([Violation("MalformedField", f"{path}: {msg}")])


def instance_from_dict(data):
    if not isinstance(data, dict):
        raise _field_error("<root>", "expected a JSON object")
    if data.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise _field_error("version", f"unsupported version {data.get('version')!r}")
    n = data.get("n_packets")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise _field_error("n_packets", f"must be a positive integer, got {n!r}")
    p = data.get("packet_dim", 1)
    if not isinstance(p, int) or isinstance(p, bool):
        raise _field_error("packet_dim", f"must be an integer, got {p!r}")
    raw_users = data.get("users")
    if not isinstance(raw_users, list):
        raise _field_error("users", "must be a list")
    users = []
    for j, ru in enumerate(raw_users):
        path = f"users[{j}]"
        if not isinstance(ru, dict):
            raise _field_error(path, "must be an object")
        req = ru.get("requests")
        if not isinstance(req, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in req):
            raise _field_error(f"{path}.requests", "must be a list of integers")
        si = ru.get("side_info", {"uncoded": []})
        if not isinstance(si, dict) or len(si) != 1 or not set(si) <= {"uncoded", "coded"}:
            raise _field_error(f"{path}.side_info", "must be {\"uncoded\": [...]} or {\"coded\": [[...]]}")
        if "uncoded" in si:
            idx = si["uncoded"]
            if not isinstance(idx, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in idx):
                raise _field_error(f"{path}.side_info.uncoded", "must be a list of integers")
            side = Uncoded(idx)
        else:
            rows = si["coded"]
            try:
                mat = np.array(rows, dtype=float)
            except (TypeError, ValueError):
                raise _field_error(f"{path}.side_info.coded", "must be a numeric matrix") from None
            if len(rows) and (mat.ndim != 2 or mat.shape[1] != n):
                raise _field_error(f"{path}.side_info.coded", f"rows must have {n} entries")
            side = Coded(mat if len(rows) else np.zeros((0, n)))
        users.append(UserSpec(req, side))
    sub = data.get("subspace")
    basis = None
    if sub is not None:
        if not isinstance(sub, dict) or "basis" not in sub:
            raise _field_error("subspace", "must be null or an object with 'dim' and 'basis'")
        try:
            T = np.array(sub["basis"], dtype=float)
        except (TypeError, ValueError):
            raise _field_error("subspace.basis", "must be a numeric matrix") from None
        if T.ndim != 2 or T.shape[0] != n:
            raise _field_error("subspace.basis", f"must have {n} rows")
        if "dim" in sub and sub["dim"] != T.shape[1]:
            raise _field_error("subspace.dim", f"{sub['dim']} disagrees with basis width {T.shape[1]}")
        basis = SubspaceBasis(T)
    return Instance(n, tuple(users), basis, p)


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _field_error("<root>", f"invalid JSON ({exc})") from None
    return instance_from_dict(data)


def save_instance(instance, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


# -- fixed instances --------------------------------------------------------

def comparison_instance(subspace=True):
    """Four users, one request each, uncoded side information (0-based)."""
    users = (
        UserSpec([0], Uncoded([1, 2])),
        UserSpec([1], Uncoded([0, 2])),
        UserSpec([2], Uncoded([1, 3])),
        UserSpec([3], Uncoded([0])),
    )
    inst = Instance(4, users)
    if subspace:
        inst = inst.with_subspace(np.array([[1, -2, 1, 1], [1, 1, -1, 2]], dtype=float).T)
    return inst
