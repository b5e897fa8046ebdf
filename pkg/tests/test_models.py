import numpy as np
import pytest
import torch
from torch import nn

from app.config import TrainerConfig
from app.core import Expression, Image, Mask
from app.engine import make_pseudo_labels, supervised_loss, unsupervised_loss
from app.errors import ConfigurationError, NonFiniteLossError
from app.models.base import ResModel
from app.models.checkpoint import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint
from app.models.optim import build_optimizer, gradient_step
from app.models.toy import ToyResModel
from app.models.vocab import UNK, Vocabulary

EXPRESSIONS = [Expression("red circle"), Expression("square on the left"), Expression("blue triangle")]


def _model(seed=0, **kwargs):
    torch.manual_seed(seed)
    kwargs.setdefault("base_channels", 4)
    kwargs.setdefault("text_dim", 8)
    return ToyResModel(Vocabulary.build(EXPRESSIONS), **kwargs)


def _images(b, h, w, seed=0):
    return torch.rand(b, 3, h, w, generator=torch.Generator().manual_seed(seed))


class Quadratic(ResModel):
    def __init__(self, start=0.0):
        super().__init__()
        self.w = nn.Parameter(torch.tensor([start]))

    def forward(self, images, expressions):
        raise NotImplementedError

    def loss(self):
        return ((self.w - 3.0) ** 2).sum()


class TestForward:
    @pytest.mark.parametrize("h,w", [(16, 16), (15, 13), (8, 20)])
    def test_output_matches_input_size(self, h, w):
        out = _model()(_images(2, h, w), EXPRESSIONS[:2])
        assert out.shape == (2, 2, h, w)

    def test_probabilities_sum_to_one(self):
        out = _model()(_images(3, 16, 16), EXPRESSIONS)
        assert torch.allclose(out.sum(dim=1), torch.ones(3, 16, 16), atol=1e-6)
        assert float(out.min()) >= 0.0

    def test_eval_mode_is_deterministic(self):
        model = _model().eval()
        x = _images(2, 16, 16)
        with torch.no_grad():
            assert torch.equal(model(x, EXPRESSIONS[:2]), model(x, EXPRESSIONS[:2]))

    def test_output_depends_on_text(self):
        model = _model().eval()
        x = _images(1, 16, 16).expand(2, -1, -1, -1)
        with torch.no_grad():
            out = model(x, [EXPRESSIONS[0], EXPRESSIONS[2]])
        assert not torch.equal(out[0], out[1])

    def test_unknown_tokens_map_to_unk(self):
        vocab = Vocabulary.build(EXPRESSIONS)
        assert vocab.encode(Expression("zebra circle")) == [vocab.tokens.index(UNK), vocab.tokens.index("circle")]
        out = _model()(_images(1, 8, 8), [Expression("zebra zebra")])
        assert out.shape == (1, 2, 8, 8)

    def test_batch_and_text_count_must_agree(self):
        with pytest.raises(ValueError):
            _model()(_images(2, 8, 8), EXPRESSIONS[:1])

    def test_parameter_cap(self):
        with pytest.raises(ConfigurationError):
            _model(max_parameters=100)
        assert _model().parameter_count() < 500_000

    def test_predict_restores_mode(self):
        model = _model().train()
        pred = model.predict(Image(np.random.default_rng(0).random((9, 7, 3))), EXPRESSIONS[0])
        assert model.training
        assert (pred.height, pred.width) == (9, 7)


class TestGradientStep:
    def test_zero_learning_rate_leaves_parameters(self):
        model = _model()
        before = [p.detach().clone() for p in model.parameters()]
        out = model(_images(1, 8, 8), EXPRESSIONS[:1])
        loss = supervised_loss(out, Mask(np.ones((8, 8))))
        gradient_step(model, build_optimizer(model, 0.0), loss, ["s0"])
        assert all(torch.equal(a, b) for a, b in zip(before, model.parameters()))

    def test_convex_quadratic_descends(self):
        quad = Quadratic()
        optimizer = build_optimizer(quad, 0.1)
        before = float(quad.loss())
        gradient_step(quad, optimizer, quad.loss())
        assert float(quad.loss()) < before

    def test_non_finite_loss_aborts(self):
        quad = Quadratic()
        optimizer = build_optimizer(quad, 0.1)
        with pytest.raises(NonFiniteLossError) as exc:
            gradient_step(quad, optimizer, quad.loss() * float("nan"), ["a", "b"])
        assert exc.value.batch_ids == ["a", "b"]
        assert float(quad.w) == 0.0

    def test_weak_graph_contributes_no_gradient(self):
        images = _images(2, 16, 16, seed=1)
        strong_images = _images(2, 16, 16, seed=2)
        texts = EXPRESSIONS[:2]

        def grads(keep_weak_graph):
            model = _model(seed=3)
            if keep_weak_graph:
                weak = model(images, texts)
            else:
                with torch.no_grad():
                    weak = model(images, texts)
            bundle = make_pseudo_labels(weak, 0.5)
            loss = unsupervised_loss(model(strong_images, texts), bundle)
            loss.backward()
            return [p.grad.clone() for p in model.parameters()]

        for a, b in zip(grads(True), grads(False)):
            assert torch.allclose(a, b, rtol=0, atol=1e-12)

    def test_supervised_gradient_matches_finite_differences(self):
        model = _model(seed=4).double()
        images = _images(1, 16, 16, seed=5).double()
        mask = Mask((np.arange(256).reshape(16, 16) % 3 == 0).astype(np.uint8))

        def loss_value():
            return supervised_loss(model(images, EXPRESSIONS[:1]), mask)

        model.zero_grad()
        loss_value().backward()
        params = [p for p in model.parameters()]
        gen = np.random.default_rng(6)
        h = 1e-6
        for _ in range(20):
            p = params[int(gen.integers(len(params)))]
            index = tuple(int(gen.integers(n)) for n in p.shape)
            analytic = float(p.grad[index])
            with torch.no_grad():
                original = float(p[index])
                p[index] = original + h
                up = float(loss_value())
                p[index] = original - h
                down = float(loss_value())
                p[index] = original
            numeric = (up - down) / (2 * h)
            assert abs(numeric - analytic) <= 1e-3 * abs(analytic) + 1e-6

    def test_single_sample_overfits(self):
        model = _model(seed=7)
        optimizer = build_optimizer(model, 1e-2)
        images = _images(1, 16, 16, seed=8)
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:10, 3:12] = 1
        for _ in range(500):
            loss = supervised_loss(model(images, EXPRESSIONS[:1]), Mask(mask))
            if float(loss) < 0.05:
                break
            gradient_step(model, optimizer, loss)
        assert float(loss) < 0.05


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        model = _model(seed=9)
        config = TrainerConfig(base_channels=4, text_dim=8)
        optimizer = build_optimizer(model, 1e-3)
        path = save_checkpoint(tmp_path / "m.pt", model, config, epoch=2, step=17, optimizer=optimizer, best_oiou=0.25)
        ckpt = load_checkpoint(path)
        assert ckpt.epoch == 2 and ckpt.step == 17 and ckpt.best_oiou == 0.25
        assert ckpt.config == config
        assert ckpt.config_hash == config.config_hash()
        assert ckpt.model.vocab.tokens == model.vocab.tokens
        original = model.state_dict()
        for name, tensor in ckpt.model.state_dict().items():
            assert torch.equal(tensor, original[name])

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "old.pt"
        torch.save({"version": CHECKPOINT_VERSION + 1}, path)
        with pytest.raises(ConfigurationError, match="version"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "none.pt")
