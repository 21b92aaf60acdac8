import numpy as np
import pytest

from vstg.codec import COVER, CodebookSpec, Corpus, corpus_to_bytes
from vstg.cover import CoverSource, build_cover_source, dirichlet_rows, sample_cover, stationary_distribution
from vstg.errors import FormatError, UsageError
from vstg.qim import correlation_score

ADJ_C1 = ((1, 0), (1, 1))


def test_build_is_deterministic(default_spec):
    assert build_cover_source(default_spec, 0.1, 7) == build_cover_source(default_spec, 0.1, 7)
    assert build_cover_source(default_spec, 0.1, 7) != build_cover_source(default_spec, 0.1, 8)


@pytest.mark.parametrize("concentration", [1e-3, 0.1, 1.0, 1e6])
def test_rows_are_distributions(default_spec, concentration):
    src = build_cover_source(default_spec, concentration, 1)
    for m in (src.t1, src.e21, src.t3, src.init1[None], src.init3[None]):
        assert np.all(m >= 0)
        assert np.all(np.isfinite(m))
        assert np.allclose(m.sum(axis=1), 1.0, atol=1e-9, rtol=0)


def test_large_concentration_is_nearly_uniform(default_spec):
    src = build_cover_source(default_spec, 1e6, 3)
    for m in (src.t1, src.e21, src.t3):
        assert m.max() <= 2.0 / m.shape[1]


def test_small_concentration_is_peaky(default_spec):
    src = build_cover_source(default_spec, 0.1, 3)
    assert np.median(src.t1.max(axis=1)) > 0.9


def test_rejects_bad_concentration(default_spec):
    for c in (0.0, -1.0, float("inf")):
        with pytest.raises(UsageError):
            build_cover_source(default_spec, c, 0)


def test_dirichlet_rows_match_dirichlet_moments():
    # Symmetric Dirichlet(a) over w components: E[x] = 1/w, Var[x] = (w-1)/(w^2 (w a + 1)).
    rng = np.random.default_rng(0)
    w, conc = 4, 2.0
    a = conc / w
    x = dirichlet_rows(rng, 200_000, w, conc)
    assert np.allclose(x.mean(axis=0), 1 / w, atol=3e-3)
    assert np.allclose(x.var(axis=0), (w - 1) / (w**2 * (w * a + 1)), rtol=0.03)


def test_stationary_distribution_solves_balance():
    P = np.array([[0.9, 0.1, 0.0], [0.2, 0.7, 0.1], [0.0, 0.5, 0.5]])
    pi = stationary_distribution(P)
    assert np.allclose(pi @ P, pi, atol=1e-12)
    # periodic chain: lazy limit still exists
    Q = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(stationary_distribution(Q), [0.5, 0.5])


def test_counter_based_prefix(default_spec):
    src = build_cover_source(default_spec, 0.1, 0)
    a = sample_cover(src, 10, 3, seed=11)
    b = sample_cover(src, 10, 5, seed=11)
    assert np.array_equal(a.codes, b.codes[:3])
    # a later slice starting at index 3 reproduces the tail
    c = sample_cover(src, 10, 2, seed=11, start=3)
    assert np.array_equal(c.codes, b.codes[3:])


def test_samples_within_bounds_and_labelled_cover(default_spec):
    src = build_cover_source(default_spec, 1.0, 2)
    c = sample_cover(src, 20, 300, seed=2)
    assert np.all(c.codes.max(axis=(0, 1)) < np.array(default_spec.sizes))
    assert np.all(c.labels == COVER)


def test_determinism_bytes(default_spec):
    src = build_cover_source(default_spec, 0.1, 4)
    assert corpus_to_bytes(sample_cover(src, 10, 50, 9)) == corpus_to_bytes(sample_cover(src, 10, 50, 9))


def test_peaky_source_beats_iid_uniform(default_spec):
    src = build_cover_source(default_spec, 0.1, 0)
    cover = sample_cover(src, 10, 10_000, seed=0)
    rng = np.random.default_rng(99)
    iid = np.stack([rng.integers(0, n, size=(10_000, 10)) for n in default_spec.sizes], axis=2)
    uniform = Corpus(default_spec, 10, iid, np.zeros(10_000))
    assert correlation_score(cover, ADJ_C1) > correlation_score(uniform, ADJ_C1)


def test_empirical_marginal_approaches_stationary():
    spec = CodebookSpec(16, 4, 4)
    src = build_cover_source(spec, 10.0, 5)
    long = sample_cover(src, 40_000, 1, seed=1).codes[0, :, 0]

    pi = stationary_distribution(src.t1)

    def tv(n):
        emp = np.bincount(long[:n], minlength=16) / n
        return 0.5 * np.abs(emp - pi).sum()

    assert tv(40_000) < tv(400)


def test_concentration_controls_correlation(default_spec):
    levels = [0.1, 10.0, 100.0, 1000.0]
    means = []
    for conc in levels:
        scores = [
            correlation_score(sample_cover(build_cover_source(default_spec, conc, s), 10, 3000, s), ADJ_C1)
            for s in range(5)
        ]
        means.append(np.mean(scores))
    assert all(a > b for a, b in zip(means, means[1:])), means


def test_recipe_round_trip(default_spec):
    src = build_cover_source(default_spec, 0.25, 42)
    text = src.to_recipe()
    assert "concentration=0.25" in text
    assert CoverSource.from_recipe(text) == src
    with pytest.raises(FormatError):
        CoverSource.from_recipe("spec=8,4,4\nseed=1\n")
