import numpy as np
import pytest

from conftest import d1_law, random_elliptic
from rwre_ldp.env_model import (
    Box,
    EnvironmentLaw,
    NestlingClass,
    PeriodicEnvironment,
    ProbVec,
    TimePeriodicSchedule,
    classify_drifts,
    classify_law,
    drift,
    mix,
    periodic_lookup,
    sample_environment,
    unit_vectors,
)
from rwre_ldp.errors import ClassificationError, ConfigError


def brute_force_drift(p):
    return sum(pi * e for pi, e in zip(p.probs, unit_vectors(p.dim).astype(float)))


class TestDrift:
    def test_symmetric_d2(self):
        assert np.allclose(drift(ProbVec.uniform(2)), [0.0, 0.0], atol=1e-15)

    def test_d1(self):
        assert drift(ProbVec(1, [0.8, 0.2]))[0] == pytest.approx(0.6, abs=1e-15)

    def test_d2_hand_value(self):
        p = ProbVec(2, [0.4, 0.1, 0.3, 0.2])
        assert np.allclose(drift(p), [0.3, 0.1], atol=1e-15)
        assert np.allclose(drift(p), brute_force_drift(p), atol=1e-15)

    def test_linearity_under_mix(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            d = int(rng.integers(1, 4))
            sigmas = [random_elliptic(rng, d, 0.02) for _ in range(3)]
            t = rng.dirichlet(np.ones(3))
            lhs = drift(mix(t, sigmas))
            rhs = sum(ti * drift(s) for ti, s in zip(t, sigmas))
            assert np.abs(lhs - rhs).max() <= 1e-12


class TestClassify:
    def test_three_d1_laws(self):
        assert classify_law(d1_law([0.6, 0.8], 0.2)) == NestlingClass.NON_NESTLING
        assert classify_law(d1_law([0.5, 0.7], 0.3)) == NestlingClass.MARGINALLY_NESTLING
        assert classify_law(d1_law([0.4, 0.9], 0.1)) == NestlingClass.NESTLING

    def test_permutation_invariant(self):
        law = d1_law([0.4, 0.9], 0.1)
        law_rev = d1_law([0.9, 0.4], 0.1)
        assert classify_law(law) == classify_law(law_rev)

    def test_duplicated_drift_with_split_weight(self):
        # two distinct d=2 atoms sharing one drift vector
        a = ProbVec(2, [0.4, 0.1, 0.3, 0.2])
        b = ProbVec(2, [0.35, 0.05, 0.35, 0.25])  # drift (0.3, 0.1), same as a
        assert np.allclose(drift(a), drift(b))
        c = ProbVec(2, [0.1, 0.4, 0.3, 0.2])
        base = EnvironmentLaw(2, (a, c), np.array([0.5, 0.5]), 0.05)
        split = EnvironmentLaw(2, (a, b, c), np.array([0.25, 0.25, 0.5]), 0.05)
        assert classify_law(base) == classify_law(split)

    def test_duplicate_rows_at_drift_level(self):
        drifts = np.array([[-1.0], [1.0]])
        dup = np.array([[-1.0], [-1.0], [1.0]])
        assert classify_drifts(drifts) == classify_drifts(dup)

    def test_common_sign_coordinate_is_non_nestling(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            d = int(rng.integers(1, 4))
            atoms = []
            while len(atoms) < 3:
                s = random_elliptic(rng, d, 0.01)
                if drift(s)[0] >= 0.05:
                    atoms.append(s)
            law = EnvironmentLaw(d, tuple(atoms), np.full(3, 1 / 3), 0.01)
            assert classify_law(law) == NestlingClass.NON_NESTLING

    def test_low_rank_support_in_d2_is_not_interior(self):
        # drifts on a line through 0: hull has empty interior in R^2
        drifts = np.array([[0.2, 0.0], [-0.2, 0.0]])
        assert classify_drifts(drifts) == NestlingClass.MARGINALLY_NESTLING

    def test_lp_failure_is_diagnosed(self, monkeypatch):
        import rwre_ldp.env_model as m

        class Res:
            status = 4
            message = "numerical trouble"

        monkeypatch.setattr(m, "linprog", lambda *a, **k: Res())
        with pytest.raises(ClassificationError):
            classify_law(d1_law([0.6, 0.8], 0.2))


class TestPeriodicLookup:
    def test_negative_residue(self):
        table = np.array([[0.8, 0.2], [0.3, 0.7]])
        env = PeriodicEnvironment((2,), table)
        assert np.allclose(periodic_lookup(env, (-3,)).probs, table[1])

    def test_componentwise(self):
        rng = np.random.default_rng(0)
        table = rng.dirichlet(np.ones(4), size=(2, 3))
        env = PeriodicEnvironment((2, 3), table)
        assert np.allclose(periodic_lookup(env, (4, -1)).probs, table[0, 2])

    def test_period_one_is_homogeneous(self):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        for x in (-7, 0, 13):
            assert np.allclose(periodic_lookup(env, (x,)).probs, [0.6, 0.4])

    def test_periodicity_property(self):
        rng = np.random.default_rng(3)
        table = rng.dirichlet(np.ones(4), size=(3, 4))
        env = PeriodicEnvironment((3, 4), table)
        for _ in range(100):
            x = rng.integers(-50, 50, size=2)
            for i, n in enumerate(env.period):
                shifted = x.copy()
                shifted[i] += n
                assert np.array_equal(
                    periodic_lookup(env, x).probs, periodic_lookup(env, shifted).probs
                )


class TestSampling:
    def test_single_atom(self):
        law = d1_law([0.7], 0.3)
        omega = sample_environment(law, Box((-5,), (5,)), seed=1)
        assert np.all(omega.atom_index == 0)

    def test_equal_weight_frequency(self):
        law = d1_law([0.6, 0.8], 0.2)
        omega = sample_environment(law, Box((0,), (10**6 - 1,)), seed=42)
        freq = float(np.mean(omega.atom_index == 0))
        assert abs(freq - 0.5) < 0.01  # 6-sigma would be 0.003

    def test_deterministic(self):
        law = d1_law([0.6, 0.8], 0.2)
        a = sample_environment(law, Box((-100,), (100,)), seed=9)
        b = sample_environment(law, Box((-100,), (100,)), seed=9)
        assert np.array_equal(a.atom_index, b.atom_index)

    def test_sub_box_agreement(self):
        law = d1_law([0.6, 0.8], 0.2)
        big = sample_environment(law, Box((-100,), (100,)), seed=9)
        small = sample_environment(law, Box((-10,), (30,)), seed=9)
        assert np.array_equal(big.atom_index[90:131], small.atom_index)

    def test_sub_box_agreement_d2(self):
        atoms = (ProbVec(2, [0.4, 0.1, 0.3, 0.2]), ProbVec(2, [0.1, 0.4, 0.3, 0.2]))
        law = EnvironmentLaw(2, atoms, np.array([0.5, 0.5]), 0.1)
        big = sample_environment(law, Box((-20, -20), (20, 20)), seed=3)
        small = sample_environment(law, Box((0, -5), (10, 5)), seed=3)
        assert np.array_equal(big.atom_index[20:31, 15:26], small.atom_index)


class TestMix:
    def test_vertex(self):
        sigmas = [ProbVec(1, [0.9, 0.1]), ProbVec(1, [0.4, 0.6])]
        assert np.allclose(mix([1.0, 0.0], sigmas).probs, sigmas[0].probs)

    def test_hand_value(self):
        sigmas = [ProbVec(1, [0.9, 0.1]), ProbVec(1, [0.4, 0.6])]
        assert np.allclose(mix([0.2, 0.8], sigmas).probs, [0.5, 0.5], atol=1e-15)

    def test_idempotent(self):
        s = ProbVec(2, [0.4, 0.1, 0.3, 0.2])
        assert np.allclose(mix([0.5, 0.5], [s, s]).probs, s.probs, atol=1e-15)

    def test_rejects_points_off_the_simplex(self):
        sigmas = [ProbVec(1, [0.9, 0.1]), ProbVec(1, [0.4, 0.6])]
        with pytest.raises(ConfigError):
            mix([0.6, 0.6], sigmas)
        with pytest.raises(ConfigError):
            mix([-0.1, 1.1], sigmas)


class TestValidation:
    def test_probvec_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            ProbVec(1, [0.8, 0.1])

    def test_probvec_nonnegative(self):
        with pytest.raises(ConfigError):
            ProbVec(1, [1.1, -0.1])

    def test_law_weights(self):
        atom = ProbVec(1, [0.6, 0.4])
        other = ProbVec(1, [0.7, 0.3])
        with pytest.raises(ConfigError):
            EnvironmentLaw(1, (atom, other), np.array([0.7, 0.2]), 0.3)

    def test_law_atoms_distinct(self):
        atom = ProbVec(1, [0.6, 0.4])
        with pytest.raises(ConfigError):
            EnvironmentLaw(1, (atom, ProbVec(1, [0.6, 0.4])), np.array([0.5, 0.5]), 0.3)

    def test_law_ellipticity(self):
        with pytest.raises(ConfigError):
            d1_law([0.6, 0.95], kappa=0.2)

    def test_periodic_table_rows(self):
        with pytest.raises(ConfigError):
            PeriodicEnvironment((2,), np.array([[0.8, 0.3], [0.3, 0.7]]))


class TestTimePeriodicSchedule:
    def test_frequencies(self):
        a = ProbVec(1, [0.8, 0.2])
        b = ProbVec(1, [0.3, 0.7])
        sched = TimePeriodicSchedule((a, b, a, a))
        assert len(sched.support) == 2
        assert np.allclose(sched.frequencies, [0.75, 0.25])
        assert np.allclose(sorted(sched.frequencies * 4), [1, 3])
