import numpy as np
import pytest

from icx.codec import (build_code, code_from_dict, code_to_dict, decode_user, encode, end_to_end_error,
                       load_code, save_code)
from icx.errors import NotConverged, OffSubspaceInput, ShapeMismatch, ValidationError
from icx.instance import Instance, Uncoded, UserSpec, generate_random, side_info_matrix, stack_system
from icx.numerics import Tolerances, numerical_rank, truncated_svd
from icx.solver import LengthResult, Solution, SolverOptions, solve_pair, solve_unaware

from conftest import EXAMPLE_X, PRINTED_AWARE_CODE, PRINTED_CODE, PRINTED_FIT

EXAMPLE_OPTS = SolverOptions(eps=1e-10, t_max=1000, restarts=10, seed=0)


@pytest.fixture(scope="module")
def example_pair():
    from icx.instance import comparison_instance
    inst = comparison_instance()
    return inst, solve_pair(inst, EXAMPLE_OPTS)


def _example_users():
    from icx.instance import comparison_instance
    return comparison_instance(subspace=False).users


def _printed_result(system):
    """A converged rank-2 result whose fit is the printed matrix."""
    A = []
    for j in range(system.n_users):
        rows = slice(system.row_offsets[j], system.row_offsets[j + 1])
        side = np.flatnonzero(system.S_block(j).any(axis=0))
        # R is zero on side columns, so the fit there is -A_j.
        A.append(-PRINTED_FIT[rows][:, side])
    X, Y, tail = truncated_svd(PRINTED_FIT, 2)
    sol = Solution(2, A, X, Y, tail, 0, True, [tail], "given")
    return LengthResult(2, sol, [(2, tail, True)], False, False, 0.0)


def test_printed_fit_gives_printed_code(example_unaware_system):
    tol = Tolerances(rank_rel=1e-6)
    code = build_code(_printed_result(example_unaware_system), example_unaware_system, tol)
    assert code.length == 2
    # Pivoting may pick a different independent pair; the row space is what matters.
    assert numerical_rank(np.vstack([code.encode_x, PRINTED_CODE]), tol) == 2
    assert end_to_end_error(Instance(4, _example_users()), code, EXAMPLE_X).total <= 1e-5


def test_printed_aware_code_is_valid_length_one(example_system):
    # The printed vector acts on x directly; check each user can decode over the subspace.
    T = example_system.T
    CT = PRINTED_AWARE_CODE @ T
    tol = Tolerances(rank_rel=1e-6)
    for j in range(example_system.n_users):
        known = np.vstack([example_system.S_block(j) @ T, CT])
        both = np.vstack([known, example_system.R_block(j) @ T])
        assert numerical_rank(both, tol) == numerical_rank(known, tol)


def test_example_codes_decode(example_pair):
    inst, (un, aw) = example_pair
    for instance, res in ((inst.unaware(), un), (inst, aw)):
        code = build_code(res, stack_system(instance))
        assert code.length == res.length
        assert end_to_end_error(instance, code, EXAMPLE_X).total <= 1e-8


def test_encode_paths_agree(example_pair):
    inst, (_, aw) = example_pair
    code = build_code(aw, stack_system(inst))
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.standard_normal(2)
        x = inst.subspace.basis @ w
        np.testing.assert_allclose(encode(code, w=w), encode(code, x=x), atol=1e-9 * (1 + np.linalg.norm(w)))


def test_decoding_error_within_residual():
    rng = np.random.default_rng(1)
    for seed in range(5):
        inst = generate_random(8, 4, 2, 3, 5, ("USI", "CSI")[seed % 2], seed=seed)
        _, aw = solve_pair(inst, SolverOptions(seed=seed))
        code = build_code(aw, stack_system(inst))
        for _ in range(100):
            w = rng.standard_normal(5)
            w *= rng.uniform() / np.linalg.norm(w)
            err = end_to_end_error(inst, code, inst.subspace.basis @ w).total
            assert err <= aw.solution.residual + 1e-9


def test_decoding_is_linear(example_pair):
    inst, (_, aw) = example_pair
    code = build_code(aw, stack_system(inst))
    rng = np.random.default_rng(2)
    x1, x2 = (inst.subspace.basis @ rng.standard_normal(2) for _ in range(2))
    a, b = 1.5, -0.25
    for j, u in enumerate(inst.users):
        S = side_info_matrix(u.side_info, 4)

        def dec(x):
            return decode_user(code, j, S @ x, encode(code, x=x))
        np.testing.assert_allclose(dec(a * x1 + b * x2), a * dec(x1) + b * dec(x2), atol=1e-9)


def test_decoder_uses_only_own_side_info(example_pair):
    # A decoder takes only its own side values and the broadcast, nothing from other users.
    inst, (_, aw) = example_pair
    code = build_code(aw, stack_system(inst))
    for j, u in enumerate(inst.users):
        assert code.decoders[j].shape == (len(u.requests), len(u.side_info.indices) + code.length)


def test_zero_length_code():
    users = (UserSpec([0], Uncoded([1, 2])), UserSpec([1], Uncoded([0, 2])))
    inst = Instance(3, users).with_subspace(np.array([[1.0], [1.0], [1.0]]))
    _, aw = solve_pair(inst)
    assert aw.length == 0 and aw.no_transmission
    code = build_code(aw, stack_system(inst))
    assert code.length == 0 and code.encode_x.shape == (0, 3)
    assert end_to_end_error(inst, code, np.array([2.0, 2.0, 2.0])).total <= 1e-8


def test_not_converged_rejected(example_system):
    res = _printed_result(example_system)
    bad = LengthResult(2, Solution(**{**res.solution.__dict__, "converged": False}), [], False, False, 0.0)
    with pytest.raises(NotConverged):
        build_code(bad, example_system)


def test_shape_errors(example_pair):
    inst, (_, aw) = example_pair
    code = build_code(aw, stack_system(inst))
    with pytest.raises(ShapeMismatch):
        encode(code, w=np.ones(3))
    with pytest.raises(ShapeMismatch):
        encode(code, x=np.ones(5))
    with pytest.raises(ShapeMismatch):
        encode(code)
    with pytest.raises(ShapeMismatch):
        decode_user(code, 0, np.ones(3), np.ones(code.length))
    with pytest.raises(ShapeMismatch):
        decode_user(code, 0, np.ones(2), np.ones(code.length + 1))


def test_off_subspace_input(example_pair):
    inst, (_, aw) = example_pair
    code = build_code(aw, stack_system(inst))
    x = np.array([1.0, 0.0, 0.0, 0.0])
    with pytest.raises(OffSubspaceInput):
        end_to_end_error(inst, code, x)
    rep = end_to_end_error(inst, code, x, project=True)
    assert rep.projection_residual > 0.1 and rep.total <= 1e-8


def test_json_round_trip(tmp_path, example_pair):
    inst, (un, aw) = example_pair
    code = build_code(aw, stack_system(inst))
    back = code_from_dict(code_to_dict(code))
    assert back.length == code.length
    np.testing.assert_array_equal(back.encode_x, code.encode_x)
    for a, b in zip(back.decoders, code.decoders):
        np.testing.assert_array_equal(a, b)
    path = tmp_path / "code.json"
    save_code(code, path)
    again = load_code(path)
    np.testing.assert_array_equal(again.encode_w, code.encode_w)


def test_malformed_code_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_code(path)
    with pytest.raises(ValidationError, match="encode_w"):
        code_from_dict({"length": 1, "n_packets": 2, "subspace_dim": 1, "encode_w": [[1, 2]],
                        "encode_x": [[1, 2]], "decoders": []})


def test_unaware_code_sends_requested_combinations():
    inst = generate_random(6, 3, 1, 2, None, "USI", seed=3)
    res = solve_unaware(inst)
    code = build_code(res, stack_system(inst))
    assert code.encode_x.shape == (res.length, 6)
    assert end_to_end_error(inst, code, np.arange(6.0)).total <= 1e-8 * (1 + np.linalg.norm(np.arange(6.0)))
