import numpy as np
import pytest

from proxicausal.data import (Layout, POINT, completeness_rank_check, load_table,
                              validate_dataset)
from proxicausal.dgp import build_discrete_law, law_from_factors
from proxicausal.errors import DatasetValidationError, ZeroMassCell

POINT_ROLES = {"Y": "outcome", "A": "treatment", "X": "covariate_x"}


def small_table():
    return {"Y": [1.0, 2.0, 3.0], "A": [0.0, 1.0, 0.0], "X": [0.5, -0.5, 0.2]}


def test_minimal_point_dataset():
    data = validate_dataset(small_table(), POINT_ROLES, POINT)
    assert data.n_rows == 3
    assert data.names_for("outcome") == ["Y"]
    assert not data.column("Y").flags.writeable


def test_nan_rejected_naming_column():
    table = small_table()
    table["X"][1] = float("nan")
    with pytest.raises(DatasetValidationError) as err:
        validate_dataset(table, POINT_ROLES, POINT)
    issues = err.value.issues
    assert any(i.code == "non_finite" and i.column == "X" for i in issues)


def test_missing_column_and_role_conflict_listed_together():
    roles = {"Y": "outcome", "A": "treatment", "B": "covariate_x", "Q": "banana"}
    with pytest.raises(DatasetValidationError) as err:
        validate_dataset(small_table(), roles, POINT)
    codes = {i.code for i in err.value.issues}
    assert "missing_column" in codes and "role_conflict" in codes


LONG_ROLES = {"id": "subject_id", "t": "time_index", "Y": "outcome",
              "A": "treatment", "Z": "proxy_z", "W": "proxy_w", "X": "covariate_x"}


def long_table():
    # 3 subjects x 2 periods
    return {
        "id": [0, 0, 1, 1, 2, 2],
        "t": [0, 1, 0, 1, 0, 1],
        "Y": [1, 1, 2, 2, 3, 3],
        "A": [0, 1, 1, 1, 0, 0],
        "Z": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        "W": [1, 2, 3, 4, 5, 6],
        "X": [0, 0, 1, 1, 2, 2],
    }


def test_longitudinal_missing_period_rejected():
    table = {k: list(v)[:5] for k, v in long_table().items()}  # drop subject 2, t=1
    with pytest.raises(DatasetValidationError) as err:
        validate_dataset(table, LONG_ROLES, Layout("longitudinal", 2))
    assert any(i.code == "duplicate_subject_time" for i in err.value.issues)


def test_longitudinal_duplicate_period_rejected():
    table = long_table()
    table["t"][1] = 0  # subject 0 has period 0 twice
    with pytest.raises(DatasetValidationError) as err:
        validate_dataset(table, LONG_ROLES, Layout("longitudinal", 2))
    assert any(i.code == "duplicate_subject_time" for i in err.value.issues)


def test_outcome_must_be_constant_within_subject():
    table = long_table()
    table["Y"][1] = 9.0
    with pytest.raises(DatasetValidationError):
        validate_dataset(table, LONG_ROLES, Layout("longitudinal", 2))


def test_validate_idempotent():
    data = validate_dataset(small_table(), POINT_ROLES, POINT)
    again = validate_dataset(data.columns, data.roles, data.layout)
    assert again.roles == data.roles
    for c in data.columns:
        assert np.array_equal(again.column(c), data.column(c))


def test_wide_pivot_sorted_by_subject_and_time():
    table = long_table()
    order = [5, 0, 3, 2, 4, 1]  # shuffle rows
    shuffled = {k: [v[i] for i in order] for k, v in table.items()}
    wide = validate_dataset(shuffled, LONG_ROLES, Layout("longitudinal", 2)).to_wide()
    np.testing.assert_array_equal(wide.w[:, :, 0], [[1, 2], [3, 4], [5, 6]])
    np.testing.assert_array_equal(wide.y, [1, 2, 3])
    np.testing.assert_array_equal(wide.a, [[0, 1], [1, 1], [0, 0]])


def test_subject_roles_rejected_in_point_layout():
    table = {**small_table(), "id": [0.0, 1.0, 2.0]}
    with pytest.raises(DatasetValidationError):
        validate_dataset(table, {**POINT_ROLES, "id": "subject_id"}, POINT)


def test_csv_one_hot_encoding(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("Y,A,G\n1.0,0,red\n2.0,1,blue\n3.0,0,red\n4.0,1,green\n")
    columns, roles = load_table(path, {"Y": "outcome", "A": "treatment", "G": "covariate_x"})
    # first observed level (red) is the reference
    assert "G=blue" in columns and "G=green" in columns and "G" not in roles
    np.testing.assert_array_equal(columns["G=blue"], [0, 1, 0, 0])
    data = validate_dataset(columns, roles, POINT)
    assert sorted(data.names_for("covariate_x")) == ["G=blue", "G=green"]


# ---------------------------------------------------------------------------
# discrete law and completeness
# ---------------------------------------------------------------------------


def test_rank_check_w_equals_z():
    # W = Z deterministically given U: P(w|z) is a permutation matrix
    law, _ = law_from_factors(
        p_u=[0.5, 0.5],
        p_z_given_u=[[0.999, 0.001], [0.001, 0.999]],
        p_w_given_u=[[0.999, 0.001], [0.001, 0.999]],
        p_a_given_uz=np.full((2, 2, 2), 0.5),
        p_y_given_ua=np.full((2, 2, 2), 0.5),
    )
    check = completeness_rank_check(law, a=0)
    assert check.rank == 2 and check.passes


def test_rank_check_independent_w_z():
    # W independent of U makes every column of P(w|z,a) identical
    law, _ = law_from_factors(
        p_u=[0.4, 0.6],
        p_z_given_u=[[0.8, 0.3], [0.2, 0.7]],
        p_w_given_u=[[0.5, 0.5], [0.5, 0.5]],
        p_a_given_uz=np.full((2, 2, 2), 0.5),
        p_y_given_ua=np.full((2, 2, 2), 0.5),
    )
    check = completeness_rank_check(law, a=1)
    assert check.rank == 1 and not check.passes


def test_rank_check_matches_svd_oracle_3x3():
    rng = np.random.default_rng(11)

    def simplex(shape):
        raw = rng.uniform(0.2, 1.0, size=shape)
        return raw / raw.sum(axis=0)

    law, _ = law_from_factors(
        p_u=np.array([0.3, 0.7]),
        p_z_given_u=simplex((3, 2)),
        p_w_given_u=simplex((3, 2)),
        p_a_given_uz=simplex((2, 2, 3)),
        p_y_given_ua=simplex((2, 2, 2)),
    )
    check = completeness_rank_check(law, a=0)
    # independent oracle: explicit construction of P(w|z,a) from the joint table
    joint = law.probabilities
    pwza = joint.sum(axis=4)[:, :, :, 0].sum(axis=0)  # (z, w) joint with a=0, u out
    mat = (pwza / pwza.sum(axis=1, keepdims=True)).T
    sv = np.linalg.svd(mat, compute_uv=False)
    oracle_rank = int(np.sum(sv > 1e-10 * sv[0]))
    assert check.rank == oracle_rank
    assert check.passes == (check.rank >= 2)


def test_rank_invariant_to_category_relabeling():
    law, _ = build_discrete_law(0.45, [0.7, 0.2], [0.75, 0.3],
                                np.full((2, 2), 0.5), np.full((2, 2), 0.4))
    base = completeness_rank_check(law, a=0).rank
    flipped = law.probabilities[:, ::-1, :, :, :]  # relabel Z categories
    from proxicausal.data import DiscreteJointLaw
    relabeled = DiscreteJointLaw(law.variables, flipped)
    assert completeness_rank_check(relabeled, a=0).rank == base


def test_conditional_matrix_marginalizes_consistently():
    rng = np.random.default_rng(13)
    from proxicausal.dgp import random_binary_law
    law, _ = random_binary_law(rng)
    obs = law.observable()
    mat = obs.conditional_matrix("w", "z", {"a": 1})
    pz = obs.conditional("z", {"a": 1})
    pw = obs.conditional("w", {"a": 1})
    np.testing.assert_allclose(mat @ pz, pw, atol=1e-12)


def test_zero_mass_cell_error():
    probs = np.zeros((2, 2))
    probs[0, 0] = 1.0  # all mass on one cell
    from proxicausal.data import CategoricalVariable, DiscreteJointLaw
    law = DiscreteJointLaw(
        (CategoricalVariable("w", 2), CategoricalVariable("a", 2)), probs)
    with pytest.raises(ZeroMassCell):
        law.conditional("w", {"a": 1})
