import math
import random

import numpy as np
import pytest

from circle_ifs.certifier import (
    ContractionFails,
    NoAttractingSide,
    RationalRotation,
    SearchExhausted,
    c1_distance,
    certify_robust_minimality,
    check_certificate,
    find_universal_word,
    locate_basin,
    nested_limit,
    perturb_map,
    reverify_certificate,
    search_cover_words,
    verify_contraction,
    verify_global_cover,
)
from circle_ifs.circle_maps import Arc, Rotation, SinePerturbed
from circle_ifs.ifs_core import IFS, branch_apply
from circle_ifs.symbolic import all_words_concatenated

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TWO_PI = 2.0 * math.pi


class TestLocateBasin:
    def test_sine_map_geometry_matches_closed_form(self, sine_map):
        basin = locate_basin(sine_map)
        g2 = lambda x: x - 0.5 / TWO_PI * math.sin(TWO_PI * x)
        assert basin.p == pytest.approx(0.0, abs=1e-9)
        # Derivative stays below 1 - margin up to ~arccos(margin)/2pi ~ 0.2468.
        assert 0.24 <= basin.eps <= 0.247
        d1 = g2(basin.eps)
        assert basin.arc_D.length == pytest.approx(d1, abs=1e-12)
        assert basin.arc_B.start == pytest.approx(g2(d1), abs=1e-12)
        assert basin.arc_B.length == pytest.approx(d1 - g2(d1), abs=1e-12)
        # delta is the midpoint of the admissible interval (0, eps - |D|).
        assert basin.delta == pytest.approx(0.5 * (basin.eps - d1), abs=1e-12)

    def test_rotation_has_no_attracting_side(self):
        with pytest.raises(NoAttractingSide):
            locate_basin(Rotation(0.3))

    def test_positive_bump_attracts_at_one_half(self):
        basin = locate_basin(SinePerturbed(0.0, 0.5))
        assert basin.p == pytest.approx(0.5, abs=1e-9)

    def test_basin_inclusion_invariant(self, sine_map):
        basin = locate_basin(sine_map)
        window = Arc(basin.p + basin.delta, basin.eps - basin.delta)
        assert window.contains_arc(basin.arc_B)
        assert basin.arc_A.contains_arc(basin.arc_B)


class TestSearchCoverWords:
    def test_regression_fixture(self, golden_rotation, sine_map):
        # Frozen output of the documented greedy search on the canonical pair.
        basin = locate_basin(sine_map)
        cover = search_cover_words(golden_rotation, sine_map, basin)
        assert cover.exponents == (568, 26, 115)
        assert cover.margin_cover > 0.0
        assert cover.margin_window > 0.0

    def test_rational_rotation_rejected(self, sine_map):
        basin = locate_basin(sine_map)
        with pytest.raises(RationalRotation):
            search_cover_words(Rotation(0.5), sine_map, basin)

    def test_images_stay_in_return_window(self, golden_rotation, sine_map):
        basin = locate_basin(sine_map)
        cover = search_cover_words(golden_rotation, sine_map, basin)
        window = Arc(basin.p + basin.delta, basin.eps - basin.delta)
        for h in cover.h_maps:
            lo = float(h.lift(basin.arc_B.start))
            hi = float(h.lift(basin.arc_B.start + basin.arc_B.length))
            assert window.contains_arc(Arc(lo % 1.0, hi - lo))


class TestVerifyContraction:
    def test_lambda_below_one(self, golden_rotation, sine_map):
        basin = locate_basin(sine_map)
        cover = search_cover_words(golden_rotation, sine_map, basin)
        res = verify_contraction(cover.h_maps, basin)
        assert res.lam < 1.0
        assert res.margin == pytest.approx(1.0 - res.lam)

    def test_identity_fails(self, golden_rotation, sine_map):
        basin = locate_basin(sine_map)
        with pytest.raises(ContractionFails):
            verify_contraction([Rotation(GOLDEN)], basin)

    def test_grid_refinement_does_not_worsen(self, golden_rotation, sine_map):
        basin = locate_basin(sine_map)
        cover = search_cover_words(golden_rotation, sine_map, basin)
        coarse = verify_contraction(cover.h_maps, basin, grid_n=512)
        fine = verify_contraction(cover.h_maps, basin, grid_n=1024)
        assert fine.lam <= coarse.lam + 1e-12


class TestGlobalCover:
    def test_five_percent_arc(self, golden_rotation):
        gc = verify_global_cover(golden_rotation, Arc(0.1, 0.2))
        assert 6 <= len(gc.forward_exponents) <= 9
        assert gc.margin > 0.0

    def test_full_circle_trivial(self, golden_rotation):
        gc = verify_global_cover(golden_rotation, Arc(0.0, 1.0))
        assert gc.forward_exponents == (0,)

    def test_small_budget_exhausts(self, golden_rotation):
        with pytest.raises(SearchExhausted):
            verify_global_cover(golden_rotation, Arc(0.1, 0.2), n_max=2)


class TestCertifyEndToEnd:
    def test_both_directions_with_positive_margins(self, certificate_pair):
        for cert in (certificate_pair.forward, certificate_pair.backward):
            assert all(v > 0.0 for v in cert.margins.values())
            assert cert.lam < 1.0
            assert cert.radius > 0.0
        assert certificate_pair.radius > 0.0

    def test_two_rotations_fail_at_basin(self, golden_rotation):
        with pytest.raises(NoAttractingSide):
            certify_robust_minimality(golden_rotation, Rotation(0.3))

    def test_json_round_trip_and_self_check(self, certificate_pair):
        from circle_ifs.certifier import CertificatePair

        blob = certificate_pair.to_json()
        back = CertificatePair.from_json(blob)
        ok_f, _ = check_certificate(back.forward)
        ok_b, _ = check_certificate(back.backward)
        assert ok_f and ok_b

    def test_corrupted_lambda_fails_check(self, certificate_pair):
        from circle_ifs.certifier import Certificate

        blob = certificate_pair.forward.to_json()
        blob["lambda"] = 1.01
        ok, _ = check_certificate(Certificate.from_json(blob))
        assert not ok

    def test_margins_reproduce_to_1e12(self, certificate_pair):
        rev = reverify_certificate(certificate_pair.forward)
        for k, v in certificate_pair.forward.margins.items():
            assert rev.margins[k] == pytest.approx(v, abs=1e-12)

    def test_survives_half_radius_perturbations(
        self, certificate_pair, golden_rotation, sine_map
    ):
        size = certificate_pair.radius / 2.0
        for i in range(20):
            rng = np.random.Generator(np.random.Philox(key=np.array([9, i], dtype=np.uint64)))
            f1 = perturb_map(golden_rotation, size, rng)
            f2 = perturb_map(sine_map, size, rng)
            assert reverify_certificate(certificate_pair.forward, f1, f2).valid
            assert reverify_certificate(
                certificate_pair.backward, f1.inverse(), f2.inverse()
            ).valid

    def test_ten_radius_perturbation_reattempted(
        self, certificate_pair, golden_rotation, sine_map
    ):
        # The radius is a lower bound, not sharp: at 10x the re-check must
        # complete and report a verdict either way.
        rng = np.random.Generator(np.random.Philox(key=np.array([77, 0], dtype=np.uint64)))
        f1 = perturb_map(golden_rotation, 10.0 * certificate_pair.radius, rng)
        f2 = perturb_map(sine_map, 10.0 * certificate_pair.radius, rng)
        rev = reverify_certificate(certificate_pair.forward, f1, f2)
        assert isinstance(rev.valid, bool)


class TestClaimInvariants:
    def test_random_h_words_stay_in_window(self, certificate_pair):
        # Arbitrary compositions of the h_i keep B inside (p+delta, p+eps).
        cert = certificate_pair.forward
        basin = cert.basin
        h_maps = cert.h_maps()
        window = Arc(basin.p + basin.delta, basin.eps - basin.delta)
        rng = random.Random(31)
        b_lo = basin.arc_B.start
        b_hi = b_lo + basin.arc_B.length
        for _ in range(200):
            length = rng.randint(1, 50)
            lo, hi = b_lo, b_hi
            for _ in range(length):
                h = h_maps[rng.randrange(len(h_maps))]
                lo, hi = float(h.lift(lo)), float(h.lift(hi))
            assert window.contains_arc(Arc(lo % 1.0, hi - lo))

    def test_nested_diameter_decay(self, certificate_pair):
        cert = certificate_pair.forward
        h_maps = cert.h_maps()
        rng = random.Random(32)
        b = cert.basin.arc_B
        for _ in range(100):
            length = rng.randint(1, 50)
            lo, hi = b.start, b.start + b.length
            for _ in range(length):
                h = h_maps[rng.randrange(len(h_maps))]
                lo, hi = float(h.lift(lo)), float(h.lift(hi))
            assert hi - lo <= cert.lam**length * b.length + 1e-12


class TestNestedLimit:
    def test_zero_levels(self, certificate_pair):
        cert = certificate_pair.forward
        x = float(cert.basin.arc_B.midpoint)
        res = nested_limit(cert.h_maps(), cert.basin, x, 0, cert.lam)
        assert len(res.word) == 0
        assert res.bound == pytest.approx(cert.basin.arc_B.length)

    def test_midpoint_twenty_levels(self, certificate_pair):
        cert = certificate_pair.forward
        x = float(cert.basin.arc_B.midpoint)
        res = nested_limit(cert.h_maps(), cert.basin, x, 20, cert.lam)
        assert res.error <= cert.lam**20 * cert.basin.arc_B.length

    def test_hundred_random_points(self, certificate_pair):
        cert = certificate_pair.forward
        b = cert.basin.arc_B
        h_maps = cert.h_maps()
        rng = random.Random(33)
        y = b.start + 0.25 * b.length
        bound = cert.lam**20 * b.length
        for _ in range(100):
            x = b.start + rng.random() * b.length
            res = nested_limit(h_maps, cert.basin, x, 20, cert.lam, y=y)
            assert res.error <= bound

    def test_outside_point_rejected(self, certificate_pair):
        cert = certificate_pair.forward
        with pytest.raises(ValueError):
            nested_limit(cert.h_maps(), cert.basin, 0.9, 5, cert.lam)


class TestUniversalWord:
    def test_full_circle_gives_empty_word(self, golden_sine_ifs):
        res = find_universal_word(golden_sine_ifs, Arc(0.2, 1.0))
        assert len(res.word) == 0

    def test_single_rotation_repeats_one_letter(self, golden_rotation):
        ifs = IFS([golden_rotation])
        res = find_universal_word(ifs, Arc(0.3, 0.1), z_grid=200, max_len=100)
        assert set(res.word.letters) <= {1}
        assert 5 <= len(res.word) <= 40
        assert res.fine_verified

    def test_certified_instance(self, golden_sine_ifs):
        res = find_universal_word(golden_sine_ifs, Arc(0.3, 0.05), z_grid=1000, max_len=500)
        assert len(res.word) <= 500
        assert res.fine_verified
        assert all(t >= 0 for t in res.capture_times)

    def test_prefix_dense_sequence_enters_at_predicted_offset(self, golden_sine_ifs, fair_coin):
        # Graft the universal word into a sequence that is prefix-dense by
        # construction; the orbit must enter the target at offset + t(z).
        target = Arc(0.3, 0.05)
        res = find_universal_word(golden_sine_ifs, target, z_grid=500, max_len=500)
        prefix = fair_coin.sample(37, seed=5)
        tail = all_words_concatenated(2, 8)
        omega = prefix.concat(res.word).concat(tail)
        x = 0.123
        z = branch_apply(golden_sine_ifs, prefix, x)
        t = res.capture_time_for(golden_sine_ifs, float(z))
        assert t is not None and t <= len(res.word)
        hit = branch_apply(golden_sine_ifs, omega[: len(prefix) + t], x)
        assert target.contains(float(hit))


class TestPerturbations:
    def test_requested_c1_size_achieved(self, golden_rotation, sine_map):
        rng = np.random.Generator(np.random.Philox(key=np.array([3, 4], dtype=np.uint64)))
        for g in (golden_rotation, sine_map):
            for size in (1e-3, 1e-6, 1e-9):
                f = perturb_map(g, size, rng)
                assert c1_distance(f, g) == pytest.approx(size, rel=1e-6)

    def test_zero_size_is_identity(self, sine_map):
        rng = np.random.Generator(np.random.Philox(key=np.array([3, 5], dtype=np.uint64)))
        assert perturb_map(sine_map, 0.0, rng) is sine_map
