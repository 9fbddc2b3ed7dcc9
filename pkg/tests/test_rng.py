import math

import numpy as np
import pytest

from tcemu.rng import (
    DEFAULT_SEED,
    RandomStream,
    box_muller,
    default_seed,
    generate_normal,
    splitmix64_words,
    substream_seed,
    trial_normals,
)

MASK = (1 << 64) - 1


def _reference_splitmix64(seed, count):
    # textbook sequential form: advance the state, then mix
    state = seed & MASK
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_known_first_word():
    assert int(splitmix64_words([0], 0, 1)[0, 0]) == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("seed", [0, 1, 42, MASK, 0x123456789ABCDEF])
def test_matches_sequential_reference(seed):
    ours = [int(w) for w in splitmix64_words([seed], 0, 64)[0]]
    assert ours == _reference_splitmix64(seed, 64)


def test_stream_position_advances():
    s = RandomStream(7)
    first = list(s.next_words(5)) + list(s.next_words(3))
    assert [int(w) for w in first] == _reference_splitmix64(7, 8)
    assert s.position == 8


def test_same_seed_same_sequence():
    a = generate_normal(RandomStream(123), 1001)
    b = generate_normal(RandomStream(123), 1001)
    assert a.tobytes() == b.tobytes()
    assert len(a) == 1001


def test_box_muller_reference():
    w = splitmix64_words([5], 0, 2)[0]
    u1 = ((int(w[0]) >> 11) + 1) * 2.0**-53
    u2 = (int(w[1]) >> 11) * 2.0**-53
    r = math.sqrt(-2 * math.log(u1))
    z = box_muller(w)
    assert z[0] == pytest.approx(r * math.cos(2 * math.pi * u2), rel=1e-15)
    assert z[1] == pytest.approx(r * math.sin(2 * math.pi * u2), rel=1e-15)


def test_moments_of_a_million_draws():
    z = generate_normal(RandomStream(DEFAULT_SEED), 1_000_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    assert np.all(np.isfinite(z))


def test_substream_collisions():
    seeds = [substream_seed(DEFAULT_SEED, i) for i in range(10_000)]
    assert len(set(seeds)) == 10_000
    words = splitmix64_words(np.array(seeds, dtype=np.uint64), 0, 16)
    # 160k 64-bit words: a birthday collision would have probability ~7e-10
    assert len(np.unique(words)) == words.size


def test_trial_normals_independent_of_batching():
    whole = trial_normals(42, np.arange(100), 7)
    parts = np.vstack([trial_normals(42, np.arange(i, i + 10), 7) for i in range(0, 100, 10)])
    assert whole.tobytes() == parts.tobytes()
    assert np.array_equal(trial_normals(42, [17], 7)[0], generate_normal(RandomStream(42 ^ 17), 7))


def test_substream_method():
    assert RandomStream(42).substream(3).seed == 42 ^ 3


def test_distribution_is_fixed():
    with pytest.raises(ValueError):
        RandomStream(1, mu=1.0)
    with pytest.raises(ValueError):
        generate_normal(RandomStream(1), -1)


def test_seed_env_override(monkeypatch):
    monkeypatch.delenv("TCEMU_SEED", raising=False)
    assert default_seed() == 42
    monkeypatch.setenv("TCEMU_SEED", "0x10")
    assert default_seed() == 16
