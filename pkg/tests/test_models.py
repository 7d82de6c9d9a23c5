import numpy as np
import pytest

from ecgsr import autodiff as ad
from ecgsr.esrnet import EsrNetConfig, EsrNetModel, build_esrnet, sr_forward, super_resolve
from ecgsr.judge import (
    JudgeConfig,
    JudgeModel,
    build_judge,
    classify,
    judge_logits,
    predict_batch,
    predict_from_probs,
    predict_label,
)
from ecgsr.models import ParamBuilder, param_count, params_digest
from ecgsr.signal_data import CaLabel
from oracles import esrnet_param_count

TINY_ESR = EsrNetConfig(base_channels=4, n_res_blocks=2, upsample_factors=(2,))
TINY_JUDGE = JudgeConfig.uniform([2, 2, 2, 2, 3, 3, 3, 3, 4, 4], gru_hidden=3, attention_dim=3)


class TestEsrNet:
    def test_four_trailing_convolutions(self):
        m = build_esrnet(EsrNetConfig(base_channels=4, n_res_blocks=2))
        names = [k[:-2] for k in m.params if k.endswith(".w")]
        trunk_end = names.index("fuse")
        assert names[trunk_end:] == ["fuse", "up0", "up1", "tail"]
        assert names[0] == "head"
        assert sum(1 for n in names if n.startswith("block")) == 2 * 2

    def test_default_config_shape(self):
        cfg = EsrNetConfig()
        assert (cfg.base_channels, cfg.n_res_blocks, cfg.upsample_factors, cfg.scale) == (32, 16, (5, 2), 10)

    def test_seed_determinism(self):
        a, b = build_esrnet(TINY_ESR, 5), build_esrnet(TINY_ESR, 5)
        assert params_digest(a.params) == params_digest(b.params)
        assert params_digest(build_esrnet(TINY_ESR, 6).params) != params_digest(a.params)

    def test_tiny_param_count_closed_form(self):
        m = build_esrnet(TINY_ESR)
        assert param_count(m) == esrnet_param_count(4, 2, 9, 3, (2,)) == 444

    def test_default_param_count_closed_form(self):
        assert param_count(build_esrnet(EsrNetConfig())) == esrnet_param_count(32, 16, 9, 3, (5, 2))

    def test_single_layer_counts(self):
        pb = ParamBuilder(0)
        pb.conv("c", 1, 4, 3)
        assert param_count(pb.params) == 16
        pb = ParamBuilder(0)
        pb.linear("d", 2, 3)
        assert param_count(pb.params) == 9

    def test_doubling_channels_quadruples_trunk(self):
        def trunk(c):
            m = build_esrnet(EsrNetConfig(base_channels=c, n_res_blocks=3))
            return sum(p.data.size for k, p in m.params.items() if k.startswith("block") and k.endswith(".w"))
        assert trunk(16) == 4 * trunk(8)

    def test_init_bounds(self):
        m = build_esrnet(TINY_ESR, 1)
        w = m.params["block0.conv1.w"].data
        assert np.max(np.abs(w)) <= 1 / np.sqrt(4 * 3)
        assert np.all(m.params["block0.conv1.b"].data == 0)

    def test_output_length_default(self):
        m = build_esrnet(EsrNetConfig(base_channels=4, n_res_blocks=1))
        assert sr_forward(m, np.zeros((1, 250))).shape == (1, 2500)

    def test_factor_one(self):
        m = build_esrnet(EsrNetConfig(base_channels=3, n_res_blocks=1, upsample_factors=(1,)))
        assert sr_forward(m, np.ones((1, 17))).shape == (1, 17)

    def test_zero_weights_zero_output(self):
        m = build_esrnet(TINY_ESR)
        for p in m.params.values():
            p.data[...] = 0.0
        np.testing.assert_array_equal(sr_forward(m, np.random.default_rng(0).standard_normal((1, 20))).data, 0.0)

    def test_input_validation(self):
        m = build_esrnet(TINY_ESR)
        with pytest.raises(ValueError):
            sr_forward(m, np.zeros((2, 10)))
        with pytest.raises(ValueError):
            sr_forward(m, np.zeros((1, 2)))

    def test_rate_check(self):
        EsrNetConfig(upsample_factors=(5, 2)).check_rates(25, 250)
        with pytest.raises(ValueError):
            EsrNetConfig(upsample_factors=(2, 2)).check_rates(25, 250)

    def test_every_parameter_gets_gradient(self):
        m = build_esrnet(TINY_ESR, 2)
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((1, 12)), rng.standard_normal((1, 24))
        ad.backward(ad.mse_loss(sr_forward(m, x), ad.Tensor(y)))
        for name, p in m.params.items():
            assert np.any(p.grad != 0), name

    def test_batch_matches_single(self):
        m = build_esrnet(TINY_ESR, 4)
        x = np.random.default_rng(5).standard_normal((3, 15))
        batch = super_resolve(m, x)
        for i in range(3):
            np.testing.assert_allclose(batch[i], super_resolve(m, x[i]), atol=1e-13)

    def test_checkpoint_round_trip(self, tmp_path):
        m = build_esrnet(TINY_ESR, 8)
        m.save(tmp_path / "g.ckpt")
        back = EsrNetModel.from_checkpoint(tmp_path / "g.ckpt")
        assert back.config == m.config
        assert params_digest(back.params) == params_digest(m.params)
        with pytest.raises(ValueError, match="judge"):
            JudgeModel.from_checkpoint(tmp_path / "g.ckpt")


class TestJudge:
    def test_pooling_divides_by_32(self):
        assert JudgeConfig().steps_after_pooling(2500) == 2500 // 32
        assert JudgeConfig().steps_after_pooling(64) == 2

    def test_desk_default(self):
        cfg = JudgeConfig()
        assert [(b.channels1, b.channels2) for b in cfg.blocks] == [(8, 8), (16, 16), (16, 16), (32, 32), (32, 32)]
        assert (cfg.gru_hidden, cfg.attention_dim, cfg.n_classes) == (16, 16, 9)

    def test_too_short(self):
        m = build_judge(TINY_JUDGE)
        with pytest.raises(ValueError, match="too short"):
            classify(m, np.zeros((1, 31)))

    def test_fit_to_length(self):
        cfg = JudgeConfig().fit_to_length(10)
        assert [b.pool for b in cfg.blocks] == [2, 2, 2, 1, 1]
        assert cfg.steps_after_pooling(10) == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            JudgeConfig(blocks=JudgeConfig().blocks[:4])
        with pytest.raises(ValueError):
            JudgeConfig(n_classes=5)

    def test_seed_determinism(self):
        assert params_digest(build_judge(TINY_JUDGE, 3).params) == params_digest(build_judge(TINY_JUDGE, 3).params)

    def test_probabilities_sum_to_one(self):
        m = build_judge(TINY_JUDGE, 1)
        p = classify(m, np.random.default_rng(0).standard_normal((1, 64))).data
        assert p.shape == (9,)
        assert abs(p.sum() - 1.0) < 1e-9 and np.all(p > 0)

    def test_frozen_bit_identical(self):
        m = build_judge(TINY_JUDGE, 1).freeze()
        x = np.random.default_rng(1).standard_normal((1, 64))
        assert classify(m, x).data.tobytes() == classify(m, x).data.tobytes()
        assert not any(p.requires_grad for p in m.params.values())
        with pytest.raises(ValueError):
            m.params["fc.w"].data[0, 0] = 1.0

    def test_frozen_checkpoint_marker(self, tmp_path):
        m = build_judge(TINY_JUDGE, 2).freeze()
        m.save(tmp_path / "j.ckpt")
        assert "frozen=1" in (tmp_path / "j.ckpt").read_text().splitlines()[2]
        back = JudgeModel.from_checkpoint(tmp_path / "j.ckpt")
        assert back.frozen
        assert back.checkpoint_text() == m.checkpoint_text()

    def test_batch_matches_single(self):
        m = build_judge(TINY_JUDGE, 4)
        x = np.random.default_rng(2).standard_normal((3, 64))
        logits = judge_logits(m, x[:, None, :]).data
        for i in range(3):
            np.testing.assert_allclose(logits[i], judge_logits(m, x[i:i + 1]).data, atol=1e-12)
        assert predict_batch(m, x, batch_size=2).tolist() == [int(predict_label(m, x[i:i + 1])) for i in range(3)]

    def test_argmax_rules(self):
        assert predict_from_probs([0.9] + [0.1 / 8] * 8) == 0
        assert predict_from_probs([0.1, 0.4, 0.4, 0.1]) == 1
        assert predict_from_probs(np.full(9, 1 / 9)) == 0

    def test_predict_label_monotone_invariance(self):
        m = build_judge(TINY_JUDGE, 5)
        x = np.random.default_rng(3).standard_normal((1, 64))
        logits = judge_logits(m, x).data
        assert int(predict_label(m, x)) == int(np.argmax(np.exp(3 * logits) + 1))
        assert isinstance(predict_label(m, x), CaLabel)

    def test_prelu_variant_builds(self):
        cfg = JudgeConfig.uniform([2] * 10, gru_hidden=2, attention_dim=2, activation="prelu")
        m = build_judge(cfg)
        assert "block0.act1" in m.params
        assert classify(m, np.ones((1, 32))).shape == (9,)
