"""Index code construction from a solved fit, and linear encode/decode."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, OffSubspaceInput, ShapeMismatch, SpanViolation, ValidationError
from .instance import Violation, side_info_matrix, stack_system
from .numerics import DEFAULT_TOL, pseudo_inverse, row_combination, select_independent_rows


@dataclass(eq=False)
class IndexCode:
    length: int
    n_packets: int
    subspace_dim: int
    encode_w: np.ndarray
    encode_x: np.ndarray
    decoders: list
    selected_rows: tuple = ()

    def side_size(self, j):
        return self.decoders[j].shape[1] - self.length

    def stacked_B(self):
        return np.vstack([D[:, D.shape[1] - self.length:] for D in self.decoders])


@dataclass
class DecodeReport:
    per_user: list
    total: float
    w_norm: float
    normalized: float
    projection_residual: float = 0.0


def build_code(length_result, system, tol=DEFAULT_TOL):
    """Encoding matrix and decoders for a converged length result.

    The independent rows of the fitted low-rank matrix become the code in
    latent coordinates; every other row is written over them to give the
    B part of each decoder.
    """
    sol = length_result.solution
    if not sol.converged:
        raise NotConverged(f"solution residual {sol.residual:.3e} above threshold")
    n, D = system.n_packets, system.dim
    if length_result.length == 0 or sol.rank_r == 0:
        decoders = [np.array(a) for a in sol.A_blocks]
        return IndexCode(0, n, D, np.zeros((0, D)), np.zeros((0, n)), decoders, ())
    Z = sol.Z
    idx, Zt = select_independent_rows(Z, tol)
    try:
        B = row_combination(Zt, Z, tol)
    except SpanViolation:
        # Near-degenerate trailing singular value: fall back to r rows.
        idx, Zt = select_independent_rows(Z, tol, count=sol.rank_r)
        B = row_combination(Zt, Z, tol)
    L = len(idx)
    decoders = []
    off = system.row_offsets
    for j, Aj in enumerate(sol.A_blocks):
        decoders.append(np.hstack([Aj, B[off[j]:off[j + 1]]]))
    enc_x = Zt @ pseudo_inverse(system.T, tol)
    return IndexCode(L, n, D, Zt, enc_x, decoders, tuple(idx))


def encode(code, w=None, x=None):
    """``y = encode_w w`` for a latent source or ``y = encode_x x`` for a raw one."""
    if (w is None) == (x is None):
        raise ShapeMismatch("pass exactly one of w (latent) or x (raw)")
    if w is not None:
        w = np.asarray(w, dtype=float).ravel()
        if w.size != code.subspace_dim:
            raise ShapeMismatch(f"latent vector has {w.size} entries, code expects {code.subspace_dim}")
        return code.encode_w @ w
    x = np.asarray(x, dtype=float).ravel()
    if x.size != code.n_packets:
        raise ShapeMismatch(f"source vector has {x.size} entries, code expects {code.n_packets}")
    return code.encode_x @ x


def decode_user(code, user_index, side_info_vec, y):
    Dj = code.decoders[user_index]
    s = np.asarray(side_info_vec, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if s.size != code.side_size(user_index):
        raise ShapeMismatch(f"user {user_index} expects {code.side_size(user_index)} side values, got {s.size}")
    if y.size != code.length:
        raise ShapeMismatch(f"received vector has {y.size} entries, code length is {code.length}")
    return Dj @ np.concatenate([s, y])


def end_to_end_error(instance, code, x, project=False, tol=DEFAULT_TOL):
    """Encode ``x``, decode at every user and measure the l2 errors.

    ``x`` must lie in the column span of the basis; with ``project=True``
    it is projected first and the projection residual is reported.
    """
    system = stack_system(instance, tol)
    T = system.T
    x = np.asarray(x, dtype=float).ravel()
    if x.size != system.n_packets:
        raise ShapeMismatch(f"source vector has {x.size} entries, instance has {system.n_packets} packets")
    Tp = pseudo_inverse(T, tol)
    w = Tp @ x
    off_resid = float(np.linalg.norm(x - T @ w))
    proj_resid = 0.0
    if off_resid > tol.rank_rel * max(float(np.linalg.norm(x)), 1e-300):
        if not project:
            raise OffSubspaceInput(f"source is {off_resid:.3e} away from the subspace")
        proj_resid = off_resid
        x = T @ w
    y = encode(code, x=x)
    per_user = []
    for j, u in enumerate(instance.users):
        s = side_info_matrix(u.side_info, system.n_packets) @ x
        xh = decode_user(code, j, s, y)
        per_user.append(float(np.linalg.norm(x[list(u.requests)] - xh)))
    total = float(np.sqrt(np.sum(np.square(per_user))))
    w_norm = float(np.linalg.norm(w))
    normalized = total / w_norm if w_norm > 0 else 0.0
    return DecodeReport(per_user, total, w_norm, normalized, proj_resid)


# -- JSON -------------------------------------------------------------------

def code_to_dict(code):
    return {"length": code.length, "n_packets": code.n_packets, "subspace_dim": code.subspace_dim,
            "encode_w": code.encode_w.tolist(), "encode_x": code.encode_x.tolist(),
            "decoders": [{"user": j, "matrix": D.tolist()} for j, D in enumerate(code.decoders)]}


def _matrix(data, rows, cols, name):
    m = np.array(data, dtype=float)
    if m.size == 0:
        m = m.reshape(rows, cols) if rows * cols == 0 else m
    if m.shape != (rows, cols):
        raise ValidationError([Violation("MalformedField", f"{name}: expected {rows}x{cols}, got {m.shape}")])
    return m


def code_from_dict(data):
    try:
        L, n, D = int(data["length"]), int(data["n_packets"]), int(data["subspace_dim"])
        enc_w = _matrix(data["encode_w"], L, D, "encode_w")
        enc_x = _matrix(data["encode_x"], L, n, "encode_x")
        decoders = []
        for k, entry in enumerate(sorted(data["decoders"], key=lambda e: e["user"])):
            if entry["user"] != k:
                raise ValidationError([Violation("MalformedField", f"decoders: user {k} missing")])
            m = np.array(entry["matrix"], dtype=float)
            if m.ndim != 2 or m.shape[1] < L:
                raise ValidationError([Violation("MalformedField", f"decoders[{k}].matrix: needs at least {L} columns")])
            decoders.append(m)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([Violation("MalformedField", f"code file: {exc}")]) from None
    return IndexCode(L, n, D, enc_w, enc_x, decoders)


def save_code(code, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(code_to_dict(code), fh, indent=1)
        fh.write("\n")


def load_code(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError([Violation("MalformedField", f"invalid JSON ({exc})")]) from None
    return code_from_dict(data)
