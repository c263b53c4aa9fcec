import itertools
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from lnp.crm import CrmSpec
from lnp.errors import DomainError, ValidationError
from lnp.partition import (
    LnpParams,
    TwoSamplePartition,
    enumerate_two_sample_partitions,
    eppf_full,
    eppf_marginal,
    log_peppf_lnp_stable,
    log_stable_branches,
    peppf_lnp_dirichlet,
    peppf_lnp_general,
    peppf_lnp_stable,
    peppf_nested,
)
from lnp.partition import _log_lnp_general_terms
from lnp.specialfn import DEFAULT_QUADRATURE, JMethod

GAMMA1 = CrmSpec("gamma", 1.0)
STABLE5 = CrmSpec("stable", sigma=0.5)
QUAD = JMethod(kind="quadrature")


def all_label_vectors(part):
    """Every labelling of a partition's idiosyncratic clusters (shared 0)."""
    for zeta in itertools.product((0, 1), repeat=part.k1 + part.k2):
        yield part.with_labels(zeta[: part.k1], zeta[part.k1:], (0,) * part.k0)


class TestTwoSamplePartition:
    def test_counts_and_masses(self):
        part = TwoSamplePartition(
            (1, 1), (1,), ((3, 2), (2, 1)), (1, 0), (1,), (0, 1)
        )
        # the worked example: n1 = 7, n2 = 4, k1 = 2, k2 = 1, k0 = 2
        assert (part.n1, part.n2, part.total) == (7, 4, 11)
        assert (part.k0, part.k1, part.k2, part.k) == (2, 2, 1, 5)
        assert part.pooled_freqs == (1, 1, 1, 5, 3)
        assert part.kbar == 3
        kbar1, nbar1 = part.label_mass(1)
        assert (kbar1, nbar1) == (2, 1 + 2)  # label-1 idio + shared (2,1)
        kbar2, nbar2 = part.label_mass(2)
        assert (kbar2, nbar2) == (2, 1 + 1)

    def test_validation(self):
        with pytest.raises(ValidationError):
            TwoSamplePartition((0,), (1,))
        with pytest.raises(ValidationError):
            TwoSamplePartition((1,), (1,), ((1, 0),))
        with pytest.raises(ValidationError):
            TwoSamplePartition((1,), (1,), (), labels1=(1, 0))
        with pytest.raises(ValidationError):
            TwoSamplePartition((1,), (1,), (), labels1=(2,))

    def test_json_round_trip(self):
        part = TwoSamplePartition((2, 1), (3,), ((1, 2),), (1, 0), (1,), (0,))
        again = TwoSamplePartition.from_json(part.to_json())
        assert again == part

    def test_from_json_rejects_garbage(self):
        with pytest.raises(ValidationError):
            TwoSamplePartition.from_json("{not json")
        with pytest.raises(ValidationError):
            TwoSamplePartition.from_json('{"freq1": [[1]], "freq2": [1]}')

    def test_swapped(self):
        part = TwoSamplePartition((2,), (3, 1), ((1, 2),))
        sw = part.swapped()
        assert sw.freq1 == (3, 1) and sw.freq2 == (2,) and sw.shared == ((2, 1),)


class TestEnumeration:
    def test_tiny_counts(self):
        assert len(enumerate_two_sample_partitions(1, 0)) == 1
        assert len(enumerate_two_sample_partitions(1, 1)) == 2

    def test_bell_number_cross_check(self):
        bell = {2: 2, 3: 5, 4: 15, 5: 52, 6: 203}
        assert len(enumerate_two_sample_partitions(2, 1)) == bell[3]
        for n1, n2 in ((2, 2), (1, 4), (3, 3), (2, 4)):
            assert len(enumerate_two_sample_partitions(n1, n2)) == bell[n1 + n2]

    def test_no_duplicates(self):
        parts = enumerate_two_sample_partitions(3, 2)
        keys = set()
        for p in parts:
            key = (
                tuple(sorted(p.freq1)),
                tuple(sorted(p.freq2)),
                tuple(sorted(p.shared)),
            )
            keys.add((key, parts.index(p)))
        # partitions as set partitions are distinct even when frequency
        # vectors repeat, so just check totals and sizes
        assert all(p.n1 == 3 and p.n2 == 2 for p in parts)

    def test_budget(self):
        with pytest.raises(DomainError):
            enumerate_two_sample_partitions(5, 4)


class TestEppf:
    def test_stable_pair(self):
        # sigma0-stable law of {1,2} in one block: 1 - sigma0
        assert eppf_full(STABLE5, [2]) == pytest.approx(0.5, rel=1e-12)

    def test_ewens_singletons(self):
        assert eppf_full(GAMMA1, [1, 1]) == pytest.approx(0.5, rel=1e-12)

    def test_enumeration_normalization(self):
        # sum over set partitions of {1,2,3}
        freq_lists = [p.freq1 for p in enumerate_two_sample_partitions(3, 0)]
        for inner in (STABLE5, CrmSpec("gamma", 2.0), CrmSpec("stable", sigma=0.25)):
            total = sum(eppf_full(inner, freqs) for freqs in freq_lists)
            assert total == pytest.approx(1.0, rel=1e-10)

    def test_quadrature_matches_closed_form(self):
        for inner in (STABLE5, CrmSpec("stable", sigma=0.8), CrmSpec("gamma", 0.5)):
            for freqs in ([3], [2, 1], [1, 1, 2, 4]):
                assert eppf_full(inner, freqs, "quadrature") == pytest.approx(
                    eppf_full(inner, freqs), rel=1e-8
                )

    def test_zero_frequency_convention(self):
        assert eppf_full(STABLE5, [0, 2, 4]) == pytest.approx(
            eppf_full(STABLE5, [2, 4]), rel=1e-14
        )

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            eppf_full(STABLE5, [])
        with pytest.raises(DomainError):
            eppf_full(STABLE5, [0, 0])

    def test_marginal_reduces_to_full(self):
        assert eppf_marginal(GAMMA1, (2,), (1,)) == pytest.approx(
            eppf_full(GAMMA1, (2, 1)), rel=1e-14
        )
        assert eppf_marginal(CrmSpec("gamma", 2.0), (2,), ()) == pytest.approx(
            eppf_full(CrmSpec("gamma", 2.0), (2,)), rel=1e-14
        )


class TestPeppfNested:
    def test_shared_pair_kills_second_term(self):
        params = LnpParams(GAMMA1, GAMMA1, 0.0)
        part = TwoSamplePartition((), (), ((1, 1),))
        assert peppf_nested(params, part) == pytest.approx(
            0.5 * eppf_full(GAMMA1, [2]), rel=1e-12
        )

    def test_two_singletons_value(self):
        params = LnpParams(GAMMA1, GAMMA1, 0.0)
        part = TwoSamplePartition((1,), (1,))
        assert peppf_nested(params, part) == pytest.approx(0.75, rel=1e-12)

    def test_enumeration_normalization(self):
        for params in (
            LnpParams(GAMMA1, CrmSpec("gamma", 2.0), 0.0),
            LnpParams(CrmSpec("stable", sigma=0.3), STABLE5, 0.0),
        ):
            for n1, n2 in ((1, 1), (2, 2), (3, 2)):
                total = sum(
                    peppf_nested(params, p)
                    for p in enumerate_two_sample_partitions(n1, n2)
                )
                assert total == pytest.approx(1.0, rel=1e-9)

    def test_degeneracy_exact(self):
        from lnp.crm import prior_coincidence
        from lnp.partition import log_eppf, log_peppf_nested

        params = LnpParams(CrmSpec("stable", sigma=0.6), STABLE5, 0.0)
        for part in enumerate_two_sample_partitions(3, 2):
            if part.k0 == 0:
                continue
            expected = math.log(prior_coincidence(params.outer)) + log_eppf(
                params.inner, part.pooled_freqs
            )
            assert log_peppf_nested(params, part) == expected  # bitwise


class TestPeppfLnpGeneral:
    def test_gamma_limit_matches_nested(self):
        params0 = LnpParams(STABLE5, CrmSpec("stable", sigma=0.4), 0.0)
        params = LnpParams(STABLE5, CrmSpec("stable", sigma=0.4), 1e-10)
        for part in enumerate_two_sample_partitions(2, 2):
            near = peppf_lnp_general(params, part)
            nested = peppf_nested(params0, part)
            assert near == pytest.approx(nested, rel=1e-4)

    def test_branch_terms_individually_normalized(self):
        params = LnpParams(CrmSpec("stable", sigma=0.4), STABLE5, 1.0)
        t1 = t2 = 0.0
        for part in enumerate_two_sample_partitions(2, 2):
            lt1, lt2 = _log_lnp_general_terms(params, part, DEFAULT_QUADRATURE)
            t1 += math.exp(lt1)
            t2 += math.exp(lt2)
        assert t1 == pytest.approx(1.0, rel=1e-7)
        assert t2 == pytest.approx(1.0, rel=1e-7)

    def test_normalization_both_families(self):
        for params in (
            LnpParams(CrmSpec("stable", sigma=0.6), CrmSpec("stable", sigma=0.3), 0.5),
            LnpParams(CrmSpec("gamma", 2.0), CrmSpec("gamma", 0.5), 2.0),
        ):
            total = sum(
                peppf_lnp_general(params, p)
                for p in enumerate_two_sample_partitions(2, 2)
            )
            assert total == pytest.approx(1.0, rel=1e-6)

    def test_zeta_guard(self):
        params = LnpParams(GAMMA1, GAMMA1, 1.0)
        part = TwoSamplePartition((1,) * 12, (1,) * 12)
        with pytest.raises(DomainError, match="guard"):
            peppf_lnp_general(params, part)


class TestPeppfLnpStable:
    def test_matches_general_small(self):
        params = LnpParams(STABLE5, STABLE5, 1.0)
        for part in enumerate_two_sample_partitions(2, 2):
            closed = peppf_lnp_stable(0.5, 0.5, 1.0, part)
            general = peppf_lnp_general(params, part)
            assert closed == pytest.approx(general, rel=1e-6)

    def test_gamma_zero_no_shared_matches_nested(self):
        params0 = LnpParams(CrmSpec("stable", sigma=0.3), STABLE5, 0.0)
        for part in enumerate_two_sample_partitions(2, 2):
            if part.k0 > 0:
                continue
            assert peppf_lnp_stable(0.3, 0.5, 0.0, part) == pytest.approx(
                peppf_nested(params0, part), rel=1e-9
            )

    def test_normalization(self):
        total = sum(
            peppf_lnp_stable(0.5, 0.5, 1.0, p)
            for p in enumerate_two_sample_partitions(2, 2)
        )
        assert total == pytest.approx(1.0, rel=1e-6)

    def test_fallback_path_flagged_and_consistent(self):
        # no sample-1 idiosyncratic cluster: the label-sum path is used
        part = TwoSamplePartition((), (1,), ((2, 1),))
        value, method = log_peppf_lnp_stable(0.4, 0.6, 0.8, part, return_detail=True)
        assert method == "zeta_sum"
        params = LnpParams(CrmSpec("stable", sigma=0.4), CrmSpec("stable", sigma=0.6), 0.8)
        assert math.exp(value) == pytest.approx(
            peppf_lnp_general(params, part), rel=1e-6
        )
        part2 = TwoSamplePartition((1,), (1,), ())
        _, method2 = log_peppf_lnp_stable(0.4, 0.6, 0.8, part2, return_detail=True)
        assert method2 == "beta_integral"

    def test_cluster_permutation_invariance(self):
        a = TwoSamplePartition((3, 1), (2,), ((1, 2), (2, 1)))
        b = TwoSamplePartition((1, 3), (2,), ((2, 1), (1, 2)))
        assert log_peppf_lnp_stable(0.4, 0.35, 1.5, a) == pytest.approx(
            log_peppf_lnp_stable(0.4, 0.35, 1.5, b), rel=1e-12
        )

    def test_sample_swap_invariance(self):
        part = TwoSamplePartition((3, 1), (2,), ((1, 2),))
        assert log_peppf_lnp_stable(0.4, 0.35, 1.5, part) == pytest.approx(
            log_peppf_lnp_stable(0.4, 0.35, 1.5, part.swapped()), rel=1e-9
        )


class TestPeppfLnpDirichlet:
    def test_first_summand_is_tilted_ewens(self):
        # the full-exchangeability branch equals the Ewens law whose total
        # mass is c0 (1 + gamma)
        c, c0, gamma = 1.0, 1.0, 0.5
        params = LnpParams(CrmSpec("gamma", c), CrmSpec("gamma", c0), gamma)
        pi1 = 1.0 / (1.0 + c)
        for part in enumerate_two_sample_partitions(2, 2):
            lt1, _ = _log_lnp_general_terms(params, part, DEFAULT_QUADRATURE)
            tilted = eppf_full(CrmSpec("gamma", c0 * (1.0 + gamma)), part.pooled_freqs)
            assert math.exp(lt1) == pytest.approx(tilted, rel=1e-8)
            assert pi1 * math.exp(lt1) <= peppf_lnp_dirichlet(c, c0, gamma, part)

    def test_matches_general_small(self):
        c, c0, gamma = 1.0, 1.5, 0.75
        params = LnpParams(CrmSpec("gamma", c), CrmSpec("gamma", c0), gamma)
        for part in enumerate_two_sample_partitions(2, 2):
            closed = peppf_lnp_dirichlet(c, c0, gamma, part)
            general = peppf_lnp_general(params, part)
            assert closed == pytest.approx(general, rel=1e-5)

    def test_normalization(self):
        total = sum(
            peppf_lnp_dirichlet(1.0, 1.0, 1.0, p)
            for p in enumerate_two_sample_partitions(2, 2)
        )
        assert total == pytest.approx(1.0, rel=1e-6)

    def test_sample_swap_invariance(self):
        part = TwoSamplePartition((2,), (1, 1), ((1, 2),))
        a = peppf_lnp_dirichlet(0.7, 2.0, 1.2, part)
        b = peppf_lnp_dirichlet(0.7, 2.0, 1.2, part.swapped())
        assert a == pytest.approx(b, rel=1e-9)

    def test_domain_errors(self):
        part = TwoSamplePartition((1,), (1,))
        with pytest.raises(DomainError):
            peppf_lnp_dirichlet(0.0, 1.0, 1.0, part)
        with pytest.raises(DomainError):
            peppf_lnp_dirichlet(1.0, 1.0, -0.5, part)


class TestStableBranches:
    def test_labelled_branches_each_normalize(self):
        sigma0, gamma = 0.45, 0.9
        full_total = split_total = 0.0
        for part in enumerate_two_sample_partitions(2, 2):
            for labelled in all_label_vectors(part):
                # full branch also ranges over shared labels
                for shared_labels in itertools.product((0, 1), repeat=part.k0):
                    lf, _ = log_stable_branches(
                        labelled.with_labels(
                            labelled.labels1, labelled.labels2, shared_labels
                        ),
                        sigma0,
                        gamma,
                        QUAD,
                    )
                    full_total += math.exp(lf)
                _, ls = log_stable_branches(labelled, sigma0, gamma, QUAD)
                if ls > -math.inf:
                    split_total += math.exp(ls)
        assert full_total == pytest.approx(1.0, rel=1e-8)
        assert split_total == pytest.approx(1.0, rel=1e-8)

    def test_split_vanishes_on_shared_label_one(self):
        part = TwoSamplePartition((1,), (1,), ((1, 1),), (1,), (1,), (1,))
        _, ls = log_stable_branches(part, 0.5, 1.0, QUAD)
        assert ls == -math.inf

    def test_i2_quadrature_agrees_with_closed_form(self):
        # one labelled split term evaluated by the 2-d integral equals the
        # J-integral expression derived for the stable family
        from lnp.partition import _log_i2_quadrature

        inner = CrmSpec("stable", sigma=0.5)
        part = TwoSamplePartition((2, 1), (1,), ((1, 1),))
        for zeta in itertools.product((0, 1), repeat=3):
            labelled = part.with_labels(zeta[:2], zeta[2:], (0,))
            direct = _log_i2_quadrature(inner, 0.8, part, zeta, DEFAULT_QUADRATURE)
            _, closed = log_stable_branches(labelled, 0.5, 0.8, QUAD)
            assert direct == pytest.approx(closed, rel=1e-7)
