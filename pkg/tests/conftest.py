import numpy as np
import pytest

from vstg.codec import COVER, STEGO, CodebookSpec, Corpus


def random_corpus(spec, T, n, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    codes = np.stack([rng.integers(0, k, size=(n, T)) for k in spec.sizes], axis=2)
    if labels is None:
        labels = rng.integers(0, 2, size=n)
    return Corpus(spec, T, codes.astype(np.uint16), np.asarray(labels, dtype=np.uint8))


@pytest.fixture
def tiny_spec():
    return CodebookSpec(8, 4, 4)


@pytest.fixture
def default_spec():
    return CodebookSpec()


@pytest.fixture
def small_corpus(default_spec):
    return random_corpus(default_spec, 10, 40, seed=3)


def toy_separable(spec, T=4, n=200, seed=0):
    """Cover windows use only even c1 indices, stego only odd ones."""
    rng = np.random.default_rng(seed)
    codes = np.stack([rng.integers(0, k, size=(n, T)) for k in spec.sizes], axis=2)
    labels = np.arange(n) % 2
    codes[:, :, 0] = (codes[:, :, 0] // 2) * 2 + labels[:, None]
    return Corpus(spec, T, codes.astype(np.uint16), labels.astype(np.uint8))


__all__ = ["random_corpus", "toy_separable", "ACCEPTANCE_LINES", "COVER", "STEGO"]


# Acceptance criteria register one PASS/FAIL line each; they are echoed at the
# end of the run so they show up even when output capture is on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
