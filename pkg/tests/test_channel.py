"""Channel contracts: normalization, the uniform quantizer and its
round-trip bound, the straight-through estimator, Gumbel-softmax
sampling, capacity accounting, and both channel architectures."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commgame import GradTape, Rng, Tensor
from commgame import tensor as T
from commgame.channel import (
    ChannelSpec,
    InstantReceiverChannel,
    InstantSenderChannel,
    RecurrentReceiverChannel,
    RecurrentSenderChannel,
    capacity,
    effective_message_capacity,
    gumbel_softmax_word,
    instant_send,
    message_capacity,
    normalize,
    quantize_word,
    receive,
    recurrent_send,
    scaling_factor,
    ste_quantize,
    symbol_range,
)
from commgame.errors import ConfigError, ContractError, UnsupportedModeError

from conftest import assert_gradients_match


def qt_spec(v=10, word=4, scheme="levels", regime="infer_only", arch="instant", msg=1):
    return ChannelSpec(
        mode="quantized",
        architecture=arch,
        alphabet_size=v,
        word_length=word,
        message_length=msg,
        quantize_regime=regime,
        quantizer_scheme=scheme,
    )


class TestNormalize:
    def test_endpoints(self):
        out = normalize(np.array([[0.0, 2.0]]))
        assert np.array_equal(out.data, [[0.0, 1.0]])

    def test_constant_word_maps_to_zero(self):
        out = normalize(np.array([[5.0, 5.0, 5.0]]))
        assert np.array_equal(out.data, [[0.0, 0.0, 0.0]])

    def test_exact_affine_map(self):
        out = normalize(np.array([[-1.0, 0.0, 3.0]]))
        assert np.array_equal(out.data, [[0.0, 0.25, 1.0]])

    def test_output_spans_unit_interval(self):
        rng = Rng(0)
        out = normalize(rng.uniform_range(-7, 7, (50, 9))).data
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert np.allclose(out.min(axis=-1), 0.0)
        assert np.allclose(out.max(axis=-1), 1.0)

    def test_gradients_match_finite_differences(self):
        rng = Rng(1)
        x = T.parameter(rng.uniform_range(-3, 3, (3, 6)))
        weights = rng.uniform_range(-1, 1, (3, 6))
        assert_gradients_match(lambda: T.sum_(T.mul(normalize(x), weights)), [x])

    def test_degenerate_word_gradient_is_zero(self):
        x = T.parameter(np.full((1, 4), 2.0))
        with GradTape() as tape:
            loss = T.sum_(normalize(x))
        tape.backward(loss)
        assert np.array_equal(x.grad, np.zeros((1, 4)))


class TestScalingFactor:
    def test_levels_binary(self):
        assert scaling_factor(qt_spec(v=2)) == 1.0

    def test_paper_scheme_v10(self):
        assert scaling_factor(qt_spec(v=10, scheme="paper")) == pytest.approx(0.1)

    def test_levels_v5(self):
        assert scaling_factor(qt_spec(v=5)) == 0.25

    def test_alphabet_below_two_rejected(self):
        with pytest.raises(ConfigError):
            qt_spec(v=1)


class TestQuantizeWord:
    def test_exact_lattice_points(self):
        deq, sym = quantize_word(np.array([0.0, 0.25, 0.5, 1.0]), qt_spec(v=5))
        assert sym.tolist() == [0, 1, 2, 4]
        assert deq.tolist() == [0.0, 0.25, 0.5, 1.0]

    def test_binary_nearest_endpoint(self):
        deq, sym = quantize_word(np.array([0.4, 0.6]), qt_spec(v=2))
        assert sym.tolist() == [0, 1]
        assert deq.tolist() == [0.0, 1.0]

    def test_half_rounds_away_from_zero(self):
        _, sym = quantize_word(np.array([0.5]), qt_spec(v=2))
        assert sym.tolist() == [1]

    @pytest.mark.parametrize("v", [2, 10, 100])
    @pytest.mark.parametrize("scheme", ["levels", "paper"])
    def test_round_trip_bound_over_random_words(self, v, scheme):
        spec = qt_spec(v=v, scheme=scheme)
        s = scaling_factor(spec)
        words = Rng(2).uniform((1000, 4))
        deq, sym = quantize_word(words, spec)
        assert np.abs(deq - words).max() <= s / 2 + 1e-15
        lo, hi = symbol_range(spec)
        assert sym.min() >= lo and sym.max() <= hi

    def test_paper_scheme_symbol_range_includes_v(self):
        spec = qt_spec(v=4, scheme="paper")
        _, sym = quantize_word(np.array([0.0, 1.0]), spec)
        assert sym.tolist() == [0, 4]

    def test_domain_violation_raises(self):
        with pytest.raises(ContractError):
            quantize_word(np.array([1.5]), qt_spec())
        with pytest.raises(ContractError):
            quantize_word(np.array([-0.1]), qt_spec())

    def test_tiny_excursion_tolerated(self):
        deq, sym = quantize_word(np.array([-1e-10, 1.0 + 1e-10]), qt_spec(v=3))
        assert sym.tolist() == [0, 2]

    def test_dequantization_injective_on_symbols(self):
        spec = qt_spec(v=7, word=3)
        words = Rng(3).uniform((500, 3))
        deq, sym = quantize_word(words, spec)
        pairs = {}
        for d, s in zip(deq.reshape(-1, 3), sym.reshape(-1, 3)):
            key = tuple(s.tolist())
            value = tuple(d.tolist())
            assert pairs.setdefault(key, value) == value
        assert len({tuple(d) for d in deq.reshape(-1, 3)}) == len(pairs)

    @given(st.integers(min_value=2, max_value=50), st.lists(st.floats(0, 1), min_size=1, max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_bound_property(self, v, values):
        spec = qt_spec(v=v)
        word = np.asarray(values)
        deq, sym = quantize_word(word, spec)
        assert np.abs(deq - word).max() <= scaling_factor(spec) / 2 + 1e-12
        assert sym.min() >= 0 and sym.max() <= v - 1


class TestSte:
    def test_forward_binary_example(self):
        out = ste_quantize(Tensor(np.array([[0.0, 0.5, 1.0]])), qt_spec(v=2))
        assert out.data.tolist() == [[0.0, 1.0, 1.0]]

    def test_backward_passes_gradient_exactly(self):
        rng = Rng(4)
        for spec in (qt_spec(v=2), qt_spec(v=17, scheme="paper")):
            x = T.parameter(rng.uniform((3, 5)))
            upstream = rng.uniform_range(-2, 2, (3, 5))
            with GradTape() as tape:
                loss = T.sum_(T.mul(ste_quantize(x, spec), upstream))
            tape.backward(loss)
            assert np.array_equal(x.grad, upstream)

    def test_sum_gradient_is_all_ones(self):
        x = T.parameter(Rng(5).uniform((4, 6)))
        with GradTape() as tape:
            loss = T.sum_(ste_quantize(x, qt_spec(v=9)))
        tape.backward(loss)
        assert np.array_equal(x.grad, np.ones((4, 6)))


class TestGumbelSoftmax:
    def gs_spec(self, v=5, st_flag=False, tau=1.0):
        return ChannelSpec(
            mode="gumbel_softmax",
            architecture="instant",
            alphabet_size=v,
            word_length=v,
            gs_temperature=tau,
            gs_straight_through=st_flag,
        )

    def test_inference_is_argmax_one_hot(self):
        out = gumbel_softmax_word(
            Tensor(np.array([[0.1, 5.0, 0.3]])), None, self.gs_spec(v=3), training=False
        )
        assert out.data.tolist() == [[0.0, 1.0, 0.0]]

    def test_inference_ties_take_lowest_index(self):
        out = gumbel_softmax_word(
            Tensor(np.array([[2.0, 2.0, 1.0]])), None, self.gs_spec(v=3), training=False
        )
        assert out.data.tolist() == [[1.0, 0.0, 0.0]]

    def test_training_rows_sum_to_one(self):
        rng = Rng(6)
        out = gumbel_softmax_word(
            Tensor(rng.uniform_range(-4, 4, (64, 5))), rng.stream("gumbel"),
            self.gs_spec(v=5), training=True,
        )
        assert np.abs(out.data.sum(axis=-1) - 1.0).max() < 1e-12

    def test_gumbel_max_frequency(self):
        # with a logit gap of 100, the argmax must equal the hot index in
        # at least 99.9% of samples
        rng = Rng(7)
        logits = np.zeros((10_000, 4))
        logits[:, 2] = 100.0
        out = gumbel_softmax_word(
            Tensor(logits), rng.stream("gumbel"), self.gs_spec(v=4), training=True
        )
        agreement = np.mean(out.data.argmax(axis=-1) == 2)
        assert agreement >= 0.999

    def test_training_is_differentiable(self):
        rng = Rng(8)
        x = T.parameter(rng.uniform_range(-1, 1, (2, 4)))
        weights = rng.uniform_range(-1, 1, (2, 4))
        noise = rng.stream("gumbel")
        draws = noise.uniform((2, 4))  # freeze one noise draw for the closure

        class FixedRng:
            def uniform(self, shape):
                return draws

        assert_gradients_match(
            lambda: T.sum_(
                T.mul(
                    gumbel_softmax_word(x, FixedRng(), self.gs_spec(v=4), training=True),
                    weights,
                )
            ),
            [x],
        )

    def test_straight_through_hardens_forward(self):
        rng = Rng(9)
        x = T.parameter(rng.uniform_range(-1, 1, (8, 5)))
        with GradTape() as tape:
            out = gumbel_softmax_word(
                x, rng.stream("g"), self.gs_spec(v=5, st_flag=True), training=True
            )
            loss = T.sum_(out)
        assert set(np.unique(out.data)) == {0.0, 1.0}
        assert np.array_equal(out.data.sum(axis=-1), np.ones(8))
        tape.backward(loss)
        assert x.grad is not None  # gradient still flows via the soft sample

    def test_temperature_must_be_positive(self):
        with pytest.raises(ConfigError):
            self.gs_spec(tau=0.0)


class TestCapacity:
    def test_word_capacity_formula(self):
        assert capacity(qt_spec(v=10, word=6)) == 10**6

    def test_binary_single_symbol(self):
        assert capacity(qt_spec(v=2, word=1)) == 2

    def test_symbolic_overflow(self):
        assert capacity(qt_spec(v=10, word=100)) == (10, 100)

    def test_message_capacity_exponentiates(self):
        spec = qt_spec(v=3, word=2, arch="recurrent", msg=4)
        assert message_capacity(spec) == (3**2) ** 4

    def test_strictly_monotone_in_alphabet_and_length(self):
        base = capacity(qt_spec(v=4, word=3))
        assert capacity(qt_spec(v=5, word=3)) > base
        assert capacity(qt_spec(v=4, word=4)) > base

    def test_continuous_has_no_capacity(self):
        with pytest.raises(UnsupportedModeError):
            capacity(ChannelSpec(mode="continuous"))

    def test_gs_effective_capacity_is_one_symbol_per_word(self):
        spec = ChannelSpec(
            mode="gumbel_softmax",
            architecture="recurrent",
            alphabet_size=10,
            word_length=10,
            message_length=6,
        )
        assert effective_message_capacity(spec) == 10**6


class TestChannelSpecValidation:
    def test_instant_is_single_word(self):
        with pytest.raises(ConfigError):
            qt_spec(arch="instant", msg=3)

    def test_gs_alphabet_equals_word_length(self):
        with pytest.raises(ConfigError):
            ChannelSpec(
                mode="gumbel_softmax", architecture="instant", alphabet_size=5, word_length=7
            )

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            ChannelSpec(mode="telepathy")


class TestInstantChannel:
    def test_continuous_is_normalized_projection(self):
        rng = Rng(10)
        spec = ChannelSpec(mode="continuous", architecture="instant", word_length=6)
        chan = InstantSenderChannel(4, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (3, 4)))
        msg = instant_send(encoded, chan, spec, None, training=True)
        expected = normalize(chan.proj(encoded)).data
        assert np.array_equal(msg.words[0].data, expected)
        assert msg.symbols is None
        assert msg.message_length == 1

    def test_infer_only_training_passes_continuous_through(self):
        rng = Rng(11)
        spec = qt_spec(v=10, word=6, regime="infer_only")
        chan = InstantSenderChannel(4, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (3, 4)))
        msg = instant_send(encoded, chan, spec, None, training=True)
        continuous = normalize(chan.proj(encoded)).data
        assert np.array_equal(msg.words[0].data, continuous)  # bit-identical
        assert msg.symbols is None

    def test_inference_symbols_in_range_and_noum_bounded(self):
        rng = Rng(12)
        spec = qt_spec(v=10, word=2)
        chan = InstantSenderChannel(4, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (64, 4)))
        msg = instant_send(encoded, chan, spec, None, training=False)
        assert msg.symbols.min() >= 0 and msg.symbols.max() <= 9
        unique = np.unique(msg.symbols.reshape(64, -1), axis=0).shape[0]
        assert unique <= min(64, 10**2)
        assert np.array_equal(
            msg.dequantized, msg.symbols * scaling_factor(spec)
        )

    def test_train_and_infer_regime_quantizes_during_training(self):
        rng = Rng(13)
        spec = qt_spec(v=5, word=6, regime="train_and_infer")
        chan = InstantSenderChannel(4, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (3, 4)))
        msg = instant_send(encoded, chan, spec, None, training=True)
        assert msg.symbols is not None
        grid = np.round(msg.words[0].data / scaling_factor(spec))
        assert np.allclose(grid * scaling_factor(spec), msg.words[0].data)


class TestRecurrentChannel:
    def recurrent_spec(self, mode="quantized", v=5, word=4, msg=3):
        return ChannelSpec(
            mode=mode,
            architecture="recurrent",
            alphabet_size=v if mode != "continuous" else None,
            word_length=word if mode != "gumbel_softmax" else v,
            message_length=msg,
            quantize_regime="train_and_infer",
        )

    def test_emits_message_length_words(self):
        rng = Rng(14)
        spec = self.recurrent_spec()
        chan = RecurrentSenderChannel(8, 6, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (5, 8)))
        msg = recurrent_send(encoded, chan, spec, None, training=False)
        assert msg.message_length == 3
        assert msg.words[0].shape == (5, 4)
        assert msg.symbols.shape == (5, 3, 4)

    def test_every_word_satisfies_round_trip_bound(self):
        rng = Rng(15)
        spec = self.recurrent_spec(v=7)
        chan = RecurrentSenderChannel(8, 6, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (5, 8)))
        msg = recurrent_send(encoded, chan, spec, None, training=False)
        s = scaling_factor(spec)
        assert np.abs(msg.dequantized - msg.symbols * s).max() == 0.0
        assert msg.symbols.min() >= 0 and msg.symbols.max() <= 6

    def test_gs_inference_message_is_one_hot_sequence(self):
        rng = Rng(16)
        spec = self.recurrent_spec(mode="gumbel_softmax", v=10, msg=6)
        chan = RecurrentSenderChannel(8, 6, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (4, 8)))
        msg = recurrent_send(encoded, chan, spec, rng.stream("g"), training=False)
        assert msg.message_length == 6
        assert np.array_equal(msg.dequantized.sum(axis=-1), np.ones((4, 6)))
        decoded = msg.symbols.argmax(axis=-1)
        assert decoded.shape == (4, 6)

    def test_message_length_one_matches_instant_shape(self):
        rng = Rng(17)
        spec = self.recurrent_spec(msg=1)
        chan = RecurrentSenderChannel(8, 6, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (5, 8)))
        msg = recurrent_send(encoded, chan, spec, None, training=False)
        assert msg.message_length == 1
        assert msg.words[0].shape == (5, 4)


class TestReceive:
    def test_instant_zero_message_zero_bias_gives_zero(self):
        rng = Rng(18)
        spec = qt_spec(v=5, word=4)
        chan = InstantReceiverChannel(6, spec, rng.stream("init"))
        from commgame.channel import MessageBatch

        msg = MessageBatch([Tensor(np.zeros((3, 4)))], None, "quantized")
        out = receive(msg, chan, spec)
        assert np.array_equal(out.data, np.zeros((3, 6)))

    def test_output_shape_for_all_architectures(self):
        rng = Rng(19)
        for spec, sender_cls, receiver_cls in [
            (qt_spec(v=5, word=4), InstantSenderChannel, InstantReceiverChannel),
            (
                ChannelSpec(
                    mode="quantized",
                    architecture="recurrent",
                    alphabet_size=5,
                    word_length=4,
                    message_length=3,
                ),
                RecurrentSenderChannel,
                RecurrentReceiverChannel,
            ),
        ]:
            init = rng.stream(f"init-{spec.architecture}")
            if spec.architecture == "instant":
                s_chan = sender_cls(6, spec, init)
                r_chan = receiver_cls(6, spec, init)
                msg = instant_send(Tensor(np.zeros((7, 6))), s_chan, spec, None, False)
            else:
                s_chan = sender_cls(6, 5, spec, init)
                r_chan = receiver_cls(6, 5, spec, init)
                msg = recurrent_send(Tensor(np.zeros((7, 6))), s_chan, spec, None, False)
            assert receive(msg, r_chan, spec).shape == (7, 6)

    def test_gradient_through_receive(self):
        rng = Rng(20)
        spec = ChannelSpec(
            mode="continuous", architecture="recurrent", word_length=4, message_length=2
        )
        chan = RecurrentReceiverChannel(5, 3, spec, rng.stream("init"))
        from commgame.channel import MessageBatch

        w1 = T.parameter(rng.uniform((2, 4)))
        w2 = T.parameter(rng.uniform((2, 4)))
        weights = rng.uniform_range(-1, 1, (2, 5))

        def build():
            msg = MessageBatch([w1, w2], None, "continuous")
            return T.sum_(T.mul(receive(msg, chan, spec), weights))

        assert_gradients_match(build, [w1, w2])

    def test_word_length_mismatch_raises(self):
        rng = Rng(21)
        spec = qt_spec(v=5, word=4)
        chan = InstantReceiverChannel(6, spec, rng.stream("init"))
        from commgame.channel import MessageBatch
        from commgame.errors import ShapeError

        msg = MessageBatch([Tensor(np.zeros((3, 5)))], None, "quantized")
        with pytest.raises(ShapeError):
            receive(msg, chan, spec)


class TestRegimeEquivalence:
    def test_infer_only_training_path_bit_identical_to_continuous(self):
        rng = Rng(22)
        cn = ChannelSpec(mode="continuous", architecture="instant", word_length=8)
        qt = qt_spec(v=10, word=8, regime="infer_only")
        chan = InstantSenderChannel(5, cn, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (16, 5)))
        cn_msg = instant_send(encoded, chan, cn, None, training=True)
        qt_msg = instant_send(encoded, chan, qt, None, training=True)
        assert np.array_equal(cn_msg.words[0].data, qt_msg.words[0].data)

    def test_inference_paths_are_deterministic(self):
        rng = Rng(23)
        spec = qt_spec(v=10, word=8)
        chan = InstantSenderChannel(5, spec, rng.stream("init"))
        encoded = Tensor(rng.uniform_range(-1, 1, (16, 5)))
        a = instant_send(encoded, chan, spec, None, training=False)
        b = instant_send(encoded, chan, spec, None, training=False)
        assert np.array_equal(a.dequantized, b.dequantized)
        assert np.array_equal(a.symbols, b.symbols)
