"""Replay buffer: priorities, proportional sampling, segment boundaries."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mrq.buffer import ReplayBuffer, SumTree, Transition
from mrq.errors import ConfigurationError, ContractViolation, SamplingError

OBS = np.zeros(3, dtype=np.float32)


def make_transition(reward=0.0, terminal=0, truncated=0, state=None):
    return Transition(
        state if state is not None else OBS,
        np.array([1.0, 0.0], dtype=np.float32),
        reward,
        terminal,
        truncated,
        OBS,
    )


def fill(buf, n, terminal_at=()):
    for i in range(n):
        state = np.full(3, float(i), dtype=np.float32)
        buf.add(
            Transition(
                state,
                np.array([1.0, 0.0], dtype=np.float32),
                float(i),
                1 if i in terminal_at else 0,
                0,
                state + 0.5,
            )
        )


class TestSumTree:
    def test_total_and_find(self):
        tree = SumTree(4)
        tree.set([0, 1, 2], [1.0, 1.0, 2.0])
        assert tree.total() == 4.0
        # prefix intervals: [0,1) -> 0, [1,2) -> 1, [2,4) -> 2
        found = tree.find([0.5, 1.5, 2.5, 3.999])
        np.testing.assert_array_equal(found, [0, 1, 2, 2])

    def test_update_propagates(self):
        tree = SumTree(8)
        tree.set(np.arange(8), np.ones(8))
        tree.set(3, 5.0)
        assert tree.total() == 12.0
        assert tree.find([7.9])[0] == 3 or tree.total() == 12.0


class TestAdd:
    def test_first_insertion_gets_priority_one(self):
        buf = ReplayBuffer(10, (3,), 2)
        i = buf.add(make_transition())
        assert buf.tree.get([i])[0] == 1.0

    def test_new_insertions_track_running_max(self):
        buf = ReplayBuffer(10, (3,), 2)
        i0 = buf.add(make_transition())
        # an update that sets priority 4 = 32^0.4 lifts the running max
        buf.update_priorities([i0], [32.0])
        i1 = buf.add(make_transition())
        assert buf.tree.get([i1])[0] == pytest.approx(4.0)

    def test_ring_eviction(self):
        buf = ReplayBuffer(3, (3,), 2)
        fill(buf, 4)
        assert len(buf) == 3
        assert sorted(buf.rewards.tolist()) == [1.0, 2.0, 3.0]

    def test_shape_mismatch_is_configuration_error(self):
        buf = ReplayBuffer(4, (3,), 2)
        with pytest.raises(ConfigurationError):
            buf.add(make_transition(state=np.zeros(5, dtype=np.float32)))

    def test_one_hot_enforced_for_discrete(self):
        buf = ReplayBuffer(4, (3,), 2, discrete_actions=True)
        buf.add(make_transition())
        with pytest.raises(ContractViolation):
            buf.add(
                Transition(OBS, np.array([0.5, 0.5], dtype=np.float32), 0.0, 0, 0, OBS)
            )

    def test_terminal_and_truncated_exclusive(self):
        with pytest.raises(ContractViolation):
            make_transition(terminal=1, truncated=1)


class TestPriorities:
    def test_update_formula(self):
        buf = ReplayBuffer(8, (3,), 2)
        fill(buf, 3)
        buf.update_priorities([0, 1, 2], [0.0, 32.0, 1.0])
        np.testing.assert_allclose(buf.tree.get([0, 1, 2]), [1.0, 4.0, 1.0])

    def test_negative_td_rejected(self):
        buf = ReplayBuffer(8, (3,), 2)
        fill(buf, 1)
        with pytest.raises(ContractViolation):
            buf.update_priorities([0], [-1.0])

    @given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=32))
    @settings(max_examples=100, deadline=None)
    def test_min_priority_floor(self, tds):
        buf = ReplayBuffer(64, (3,), 2)
        fill(buf, len(tds))
        buf.update_priorities(np.arange(len(tds)), tds)
        assert buf.tree.get(np.arange(len(tds))).min() >= 1.0


class TestSampling:
    def test_empty_buffer_raises(self):
        buf = ReplayBuffer(4, (3,), 2)
        with pytest.raises(SamplingError):
            buf.sample_segments(1, 1, np.random.default_rng(0))

    def test_proportional_frequencies(self):
        buf = ReplayBuffer(4, (3,), 2)
        fill(buf, 3)
        buf.update_priorities([0, 1, 2], [1.0, 1.0, 2.0**2.5])  # -> [1, 1, 2]
        np.testing.assert_allclose(buf.tree.get([0, 1, 2]), [1.0, 1.0, 2.0])
        rng = np.random.default_rng(0)
        draws = buf.sample_indices(100_000, rng)
        freqs = np.bincount(draws, minlength=3) / len(draws)
        np.testing.assert_allclose(freqs, [0.25, 0.25, 0.5], atol=0.01)

    def test_uniform_chi_square(self):
        buf = ReplayBuffer(4, (3,), 2)
        fill(buf, 3)
        rng = np.random.default_rng(42)
        draws = buf.sample_indices(100_000, rng)
        counts = np.bincount(draws, minlength=3)
        result = stats.chisquare(counts)
        assert result.pvalue >= 0.01

    def test_chi_square_against_nonuniform_priorities(self):
        buf = ReplayBuffer(8, (3,), 2)
        fill(buf, 5)
        tds = np.array([0.0, 2.0, 8.0, 32.0, 128.0])
        buf.update_priorities(np.arange(5), tds)
        p = buf.tree.get(np.arange(5))
        expected = p / p.sum()
        rng = np.random.default_rng(123)
        draws = buf.sample_indices(100_000, rng)
        counts = np.bincount(draws, minlength=5)
        result = stats.chisquare(counts, f_exp=expected * len(draws))
        assert result.pvalue >= 0.01


class TestSegments:
    def test_anchor_on_terminal_transition(self):
        buf = ReplayBuffer(16, (3,), 2)
        fill(buf, 5, terminal_at={2})
        seg = buf._build_segments(np.array([2]), horizon=3)
        assert seg.valid_length[0] == 1
        np.testing.assert_array_equal(seg.step_mask()[0], [1.0, 0.0, 0.0])
        assert seg.terminals[0, 0] == 1.0

    def test_segment_stops_at_episode_boundary(self):
        buf = ReplayBuffer(16, (3,), 2)
        fill(buf, 6, terminal_at={2})
        seg = buf._build_segments(np.array([1]), horizon=4)
        # transitions 1 and 2 share an episode; 3 starts a new one
        assert seg.valid_length[0] == 2
        np.testing.assert_allclose(seg.rewards[0, :2], [1.0, 2.0])

    def test_states_chain_through_next_state(self):
        buf = ReplayBuffer(16, (3,), 2)
        fill(buf, 4)
        seg = buf._build_segments(np.array([0]), horizon=2)
        np.testing.assert_allclose(seg.states[0, 0], np.zeros(3))
        np.testing.assert_allclose(seg.states[0, 1], np.full(3, 0.5))
        np.testing.assert_allclose(seg.states[0, 2], np.full(3, 1.5))

    def test_next_actions_masked_at_boundaries(self):
        buf = ReplayBuffer(16, (3,), 2)
        fill(buf, 4, terminal_at={1})
        seg = buf._build_segments(np.array([0]), horizon=3)
        assert seg.valid_length[0] == 2
        # step 0 has a same-episode successor (transition 1); step 1 does not
        np.testing.assert_array_equal(seg.next_action_valid[0], [1.0, 0.0, 0.0])

    def test_segment_never_crosses_write_head(self):
        buf = ReplayBuffer(4, (3,), 2)
        fill(buf, 6)  # slots hold transitions 2..5, head at slot 2
        anchor = (6 - 1) % 4  # most recent transition
        seg = buf._build_segments(np.array([anchor]), horizon=3)
        assert seg.valid_length[0] == 1

    @given(
        st.lists(st.integers(1, 7), min_size=1, max_size=6),
        st.integers(1, 5),
        st.integers(0, 10_000),
    )
    @settings(max_examples=80, deadline=None)
    def test_segments_stay_within_episodes(self, episode_lengths, horizon, seed):
        buf = ReplayBuffer(64, (3,), 2)
        step = 0
        for ep, length in enumerate(episode_lengths):
            for i in range(length):
                state = np.full(3, float(ep), dtype=np.float32)
                buf.add(
                    Transition(
                        state,
                        np.array([1.0, 0.0], dtype=np.float32),
                        0.0,
                        1 if i == length - 1 else 0,
                        0,
                        state,
                    )
                )
                step += 1
        rng = np.random.default_rng(seed)
        seg, anchors = buf.sample_segments(8, horizon, rng)
        ids = buf.episode_ids
        for b, anchor in enumerate(anchors):
            L = seg.valid_length[b]
            assert 1 <= L <= horizon
            episode = ids[anchor]
            for t in range(L):
                assert ids[(anchor + t) % buf.capacity] == episode
            # all states in the segment belong to the anchor's episode
            assert np.all(seg.states[b, 0] == seg.states[b, L - 1])


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        buf = ReplayBuffer(8, (3,), 2)
        fill(buf, 5, terminal_at={2})
        buf.update_priorities([0, 3], [32.0, 7.0])
        path = tmp_path / "buffer.npz"
        buf.snapshot(path)
        restored = ReplayBuffer.restore(path)
        assert len(restored) == len(buf)
        np.testing.assert_array_equal(restored.rewards[:5], buf.rewards[:5])
        np.testing.assert_array_equal(restored.episode_ids[:5], buf.episode_ids[:5])
        np.testing.assert_allclose(
            restored.tree.get(np.arange(5)), buf.tree.get(np.arange(5))
        )
        assert restored.max_priority == buf.max_priority
        assert restored.terminal_seen == buf.terminal_seen
