import numpy as np
import pytest

from circle_ifs.symbolic import (
    BernoulliModel,
    Cylinder,
    InvalidModel,
    MarkovMinorizedModel,
    Word,
    all_words_concatenated,
    cylinder_measure,
    is_prefix_dense,
    model_from_json,
    sample_sequence,
)


class TestWord:
    def test_letter_bounds_enforced(self):
        with pytest.raises(ValueError):
            Word((0, 1), 2)
        with pytest.raises(ValueError):
            Word((3,), 2)

    def test_concat_and_reverse(self):
        w = Word((1, 2), 2).concat(Word((2,), 2))
        assert w.letters == (1, 2, 2)
        assert w.reversed().letters == (2, 2, 1)


class TestSampling:
    def test_same_seed_same_word(self):
        m = BernoulliModel([0.5, 0.5])
        a = sample_sequence(m, 1000, seed=42)
        b = sample_sequence(m, 1000, seed=42)
        assert a == b

    def test_streams_differ(self):
        m = BernoulliModel([0.5, 0.5])
        a = m.sample(1000, seed=42, stream=0)
        b = m.sample(1000, seed=42, stream=1)
        assert a != b

    def test_frequencies_converge(self):
        # Binomial concentration: at n = 1e5 each frequency is within 0.01.
        m = BernoulliModel([0.5, 0.5])
        w = sample_sequence(m, 100_000, seed=7)
        freq1 = w.letters.count(1) / len(w)
        assert 0.49 <= freq1 <= 0.51

    def test_degenerate_weights_rejected(self):
        with pytest.raises(InvalidModel):
            BernoulliModel([1.0, 0.0])
        with pytest.raises(InvalidModel):
            BernoulliModel([0.7, 0.7])

    def test_markov_rows_validated(self):
        with pytest.raises(InvalidModel):
            MarkovMinorizedModel([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(InvalidModel):
            MarkovMinorizedModel([[0.5, 0.5]])

    def test_markov_transition_frequencies(self):
        rows = [[0.8, 0.2], [0.3, 0.7]]
        m = MarkovMinorizedModel(rows)
        w = sample_sequence(m, 1_000_000, seed=5)
        letters = np.array(w.letters)
        for i in range(2):
            mask = letters[:-1] == i + 1
            total = int(mask.sum())
            for j in range(2):
                freq = int(((letters[1:] == j + 1) & mask).sum()) / total
                assert freq == pytest.approx(rows[i][j], abs=0.01)

    def test_shift_compatibility(self):
        # Dropping the first letter leaves the Bernoulli distribution intact.
        m = BernoulliModel([0.3, 0.7])
        w = sample_sequence(m, 100_000, seed=11)
        shifted = w.letters[1:]
        freq2 = shifted.count(2) / len(shifted)
        assert freq2 == pytest.approx(0.7, abs=0.01)


class TestCylinders:
    def test_fair_coin_measure(self):
        m = BernoulliModel([0.5, 0.5])
        assert cylinder_measure(m, Cylinder(Word((1, 2, 1), 2))) == 0.125

    def test_biased_product(self):
        m = BernoulliModel([0.3, 0.7])
        assert cylinder_measure(m, Cylinder(Word((2, 2), 2))) == pytest.approx(0.49)

    def test_floor_bound(self):
        m = BernoulliModel([0.2, 0.3, 0.5])
        for letters in [(1,), (1, 1), (1, 2, 1), (3, 1, 1, 1)]:
            c = Cylinder(Word(letters, 3))
            assert cylinder_measure(m, c) >= m.p ** len(letters) - 1e-15

    def test_kolmogorov_consistency(self):
        m = MarkovMinorizedModel([[0.8, 0.2], [0.3, 0.7]])
        for letters in [(1,), (2, 1), (1, 1, 2)]:
            base = cylinder_measure(m, Cylinder(Word(letters, 2)))
            split = sum(
                cylinder_measure(m, Cylinder(Word(letters + (i,), 2))) for i in (1, 2)
            )
            assert split == pytest.approx(base, abs=1e-12)


class TestPrefixDensity:
    def test_concatenation_of_all_words_is_dense(self):
        w = all_words_concatenated(2, 3)
        assert is_prefix_dense(w, 3)

    def test_constant_word_is_not_dense(self):
        w = Word((1,) * 100, 2)
        assert not is_prefix_dense(w, 1)

    def test_random_words_dense_with_high_probability(self):
        # Monte Carlo: 2^16-letter fair-coin words contain every depth-8
        # factor in >= 99 of 100 seeds.
        m = BernoulliModel([0.5, 0.5])
        hits = sum(
            is_prefix_dense(sample_sequence(m, 2**16, seed=s), 8) for s in range(100)
        )
        assert hits >= 99


class TestSerialization:
    def test_model_round_trip(self):
        for m in (
            BernoulliModel([0.25, 0.75]),
            MarkovMinorizedModel([[0.9, 0.1], [0.2, 0.8]], [0.5, 0.5]),
        ):
            m2 = model_from_json(m.to_json())
            assert m2.sample(50, seed=3) == m.sample(50, seed=3)

    def test_word_json_is_integer_array(self):
        w = Word((1, 2, 2), 2)
        assert w.to_json() == [1, 2, 2]
        assert Word.from_json([1, 2, 2], 2) == w
