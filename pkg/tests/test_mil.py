"""Pseudo-bag classifier: forward oracles, training step, pooling, checkpoints."""

import numpy as np
import pytest

from protomil import nn
from protomil.bagdata import FeatureBag
from protomil.divider import DividerConfig, DivisionAssignment, divide
from protomil.errors import BagFormatError, DimensionError, TrainingDivergenceError
from protomil.mil import (
    MilModel,
    bag_loss,
    infer_bag,
    load_checkpoint,
    predict_pseudo_bag,
    restore_tensors,
    save_checkpoint,
    train_bag_step,
)
from protomil.seeds import make_rng

from conftest import finite_diff_grads, max_rel_error, random_bag

LN2 = float(np.log(2.0))


def _whole_bag_assignment(bag: FeatureBag, pseudo: np.ndarray, n: int) -> DivisionAssignment:
    return DivisionAssignment(
        bag_id=bag.bag_id,
        section=np.zeros(bag.num_instances, dtype=np.int64),
        pseudo_bag=np.asarray(pseudo, dtype=np.int64),
        scheme="random",
        n=n,
        l=1,
        seed=0,
    )


class TestPredict:
    def test_singleton_matches_hand_math(self):
        model = MilModel.create(3, hidden_dim=4, seed=1)
        f = np.array([0.3, -1.2, 0.7])
        # one instance: softmax over one score is 1, so z == f exactly
        expected = nn.sigmoid(float(model.head.c @ f + model.head.b[0]))
        assert predict_pseudo_bag(model, f[None, :]) == expected

    def test_zero_head_gives_half(self):
        model = MilModel.create(5, hidden_dim=3, seed=2)
        model.head.c[:] = 0.0
        model.head.b[:] = 0.0
        feats = make_rng(3).normal(size=(11, 5))
        assert predict_pseudo_bag(model, feats) == 0.5

    def test_matches_straight_line_oracle(self):
        rng = make_rng(4)
        for _ in range(5):
            d, h, k = (int(rng.integers(1, 10)) for _ in range(3))
            model = MilModel.create(d, hidden_dim=h, seed=int(rng.integers(1e6)))
            feats = rng.normal(size=(k, d))
            logits = model.attn.w @ (np.tanh(model.attn.V @ feats.T) * nn.sigmoid(model.attn.U @ feats.T))
            e = np.exp(logits - logits.max())
            a = e / e.sum()
            want = 1.0 / (1.0 + np.exp(-(model.head.c @ (a @ feats) + model.head.b[0])))
            assert predict_pseudo_bag(model, feats) == pytest.approx(want, abs=1e-12)


class TestBagLoss:
    def test_zero_head_is_ln2(self):
        model = MilModel.create(4, hidden_dim=2, seed=5)
        model.head.c[:] = 0.0
        model.head.b[:] = 0.0
        feats = make_rng(6).normal(size=(9, 4))
        pbs = [feats[:4], feats[4:]]
        assert bag_loss(model, pbs, 0) == pytest.approx(LN2, abs=1e-15)
        assert bag_loss(model, pbs, 1) == pytest.approx(LN2, abs=1e-15)

    def test_mean_of_per_group_losses(self):
        rng = make_rng(7)
        model = MilModel.create(3, hidden_dim=4, seed=8)
        pbs = [rng.normal(size=(5, 3)), rng.normal(size=(2, 3)), rng.normal(size=(7, 3))]
        per = [nn.bce_loss(predict_pseudo_bag(model, pb), 1) for pb in pbs]
        assert bag_loss(model, pbs, 1) == pytest.approx(np.mean(per), abs=1e-15)

    def test_empty_raises(self):
        model = MilModel.create(2, hidden_dim=2, seed=9)
        with pytest.raises(DimensionError):
            bag_loss(model, [], 1)


class TestTrainBagStep:
    def test_zero_lr_keeps_params_and_returns_pre_update_loss(self):
        rng = make_rng(10)
        bag = random_bag(rng, 16, 4, label=1)
        asg = divide(bag, None, DividerConfig(scheme="random", n=4, l=1, seed=1))
        model = MilModel.create(4, hidden_dim=6, seed=11)
        groups = asg.groups()
        expected = bag_loss(model, [bag.features[idx] for idx in groups], bag.label)
        before = {k: v.copy() for k, v in model.tensors().items()}
        loss = train_bag_step(model, asg, bag, lr=0.0)
        assert loss == pytest.approx(expected, abs=1e-15)
        for k, v in model.tensors().items():
            np.testing.assert_array_equal(v, before[k])

    def test_accumulated_gradient_matches_finite_differences(self):
        rng = make_rng(12)
        for trial in range(5):
            d, h = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            k = int(rng.integers(4, 20))
            n = int(rng.integers(1, 5))
            bag = random_bag(rng, k, d, label=int(rng.integers(0, 2)), bag_id=f"m{trial}")
            asg = divide(bag, None, DividerConfig(scheme="random", n=n, l=1, seed=trial))
            model = MilModel.create(d, hidden_dim=h, seed=int(rng.integers(1e6)))
            groups = asg.groups()

            def loss():
                return bag_loss(model, [bag.features[idx] for idx in groups], bag.label)

            numeric = finite_diff_grads(loss, model.tensors())

            # accumulate analytic grads the same way the training step does
            analytic = nn.zero_grads(model.tensors())
            for idx in groups:
                feats = bag.features[idx]
                scores, cache = nn.gated_attention_forward(model.attn, feats)
                z = scores @ feats
                p = nn.sigmoid(float(model.head.c @ z + model.head.b[0]))
                dlogit = (p - bag.label) / len(groups)
                dw, dV, dU, _ = nn.gated_attention_backward(
                    cache, d_weighted=dlogit * model.head.c
                )
                analytic["attn.w"] += dw
                analytic["attn.V"] += dV
                analytic["attn.U"] += dU
                analytic["head.c"] += dlogit * z
                analytic["head.b"] += dlogit
            assert max_rel_error(analytic, numeric) < 1e-4

    def test_loss_decreases_on_fixed_bags(self):
        rng = make_rng(13)
        pos = random_bag(rng, 12, 3, label=1, bag_id="pos")
        neg = random_bag(rng, 12, 3, label=0, bag_id="neg")
        cfg = DividerConfig(scheme="random", n=3, l=1, seed=2)
        asg_p, asg_n = divide(pos, None, cfg), divide(neg, None, cfg)
        model = MilModel.create(3, hidden_dim=8, seed=14)
        losses = []
        for _ in range(150):
            a = train_bag_step(model, asg_p, pos, lr=5e-2)
            b = train_bag_step(model, asg_n, neg, lr=5e-2)
            losses.append(a + b)
        assert losses[-1] < losses[0] * 0.5
        assert losses[-1] < 0.2

    def test_mismatched_assignment_rejected(self):
        rng = make_rng(15)
        bag = random_bag(rng, 8, 2)
        other = random_bag(rng, 9, 2)
        asg = divide(other, None, DividerConfig(scheme="random", n=2, l=1, seed=0))
        model = MilModel.create(2, hidden_dim=2, seed=16)
        with pytest.raises(DimensionError):
            train_bag_step(model, asg, bag)

    def test_out_of_range_pseudo_index_rejected(self):
        rng = make_rng(17)
        bag = random_bag(rng, 4, 2)
        asg = _whole_bag_assignment(bag, [0, 1, 2, 3], n=3)
        model = MilModel.create(2, hidden_dim=2, seed=18)
        with pytest.raises(DimensionError):
            train_bag_step(model, asg, bag)

    def test_divergence_raises_with_bag_id(self):
        rng = make_rng(19)
        bag = random_bag(rng, 6, 2, label=1, bag_id="melted")
        asg = divide(bag, None, DividerConfig(scheme="random", n=2, l=1, seed=3))
        model = MilModel.create(2, hidden_dim=2, seed=20)
        model.head.c[:] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(TrainingDivergenceError, match="melted"):
            train_bag_step(model, asg, bag)


class TestInferBag:
    def test_mean_of_group_predictions(self):
        rng = make_rng(21)
        bag = random_bag(rng, 15, 4)
        asg = divide(bag, None, DividerConfig(scheme="random", n=4, l=1, seed=5))
        model = MilModel.create(4, hidden_dim=5, seed=22)
        per = [predict_pseudo_bag(model, bag.features[idx]) for idx in asg.groups()]
        assert infer_bag(model, asg, bag) == pytest.approx(np.mean(per), abs=1e-15)

    def test_single_group_equals_plain_attention_mil(self):
        # n=1 is exactly the classic bag-level model, down to the bit
        rng = make_rng(23)
        bag = random_bag(rng, 30, 6)
        asg = _whole_bag_assignment(bag, np.zeros(30), n=1)
        model = MilModel.create(6, hidden_dim=7, seed=24)
        assert infer_bag(model, asg, bag) == predict_pseudo_bag(model, bag.features)

    def test_permutation_invariance(self):
        rng = make_rng(25)
        bag = random_bag(rng, 20, 5, bag_id="perm")
        asg = divide(bag, None, DividerConfig(scheme="random", n=4, l=1, seed=6))
        model = MilModel.create(5, hidden_dim=6, seed=26)
        base = infer_bag(model, asg, bag)

        perm = rng.permutation(20)
        shuffled = FeatureBag("perm", bag.label, bag.features[perm])
        asg_perm = DivisionAssignment(
            bag_id="perm",
            section=asg.section[perm],
            pseudo_bag=asg.pseudo_bag[perm],
            scheme=asg.scheme,
            n=asg.n,
            l=asg.l,
            seed=asg.seed,
        )
        assert infer_bag(model, asg_perm, shuffled) == pytest.approx(base, abs=1e-12)


class TestCheckpoint:
    def _tensors(self, rng):
        return {
            "mil.attn.V": rng.normal(size=(4, 3)),
            "mil.head.b": rng.normal(size=(1,)),
            "proto.attn.w": rng.normal(size=5),
        }

    def test_round_trip_is_exact(self, tmp_path):
        rng = make_rng(27)
        tensors = self._tensors(rng)
        config = {"scheme": "proto_attn", "n": 8, "lr": 2e-4}
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tensors, config)
        loaded, cfg = load_checkpoint(path)
        assert cfg == config
        assert set(loaded) == set(tensors)
        for name, arr in tensors.items():
            np.testing.assert_array_equal(loaded[name], arr)
            assert loaded[name].dtype == np.float64

    def test_restore_into_model(self, tmp_path):
        model = MilModel.create(3, hidden_dim=4, seed=28)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.tensors(), {})
        clone = MilModel.create(3, hidden_dim=4, seed=999)
        loaded, _ = load_checkpoint(path)
        restore_tensors(clone.tensors(), loaded)
        for k, v in model.tensors().items():
            np.testing.assert_array_equal(clone.tensors()[k], v)

    def test_restore_missing_tensor(self):
        model = MilModel.create(2, hidden_dim=2, seed=29)
        with pytest.raises(BagFormatError):
            restore_tensors(model.tensors(), {})

    def test_restore_shape_mismatch(self):
        model = MilModel.create(2, hidden_dim=2, seed=30)
        saved = {k: np.zeros((1, 1)) for k in model.tensors()}
        with pytest.raises(DimensionError):
            restore_tensors(model.tensors(), saved)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(BagFormatError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        rng = make_rng(31)
        path = tmp_path / "short.ckpt"
        save_checkpoint(path, self._tensors(rng), {"a": 1})
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 9])
        with pytest.raises(BagFormatError):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        rng = make_rng(32)
        path = tmp_path / "fat.ckpt"
        save_checkpoint(path, self._tensors(rng), {})
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(BagFormatError):
            load_checkpoint(path)
