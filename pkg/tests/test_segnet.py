import json
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from pydantic import ValidationError

from src.core.errors import CheckpointError, LayerNotFoundError, ShapeError, TrainingIOError
from src.core.models import ArchitectureConfig, DecoderMode
from src.nets.segnet import (
    MaxUnpool,
    architecture_summary,
    build_model,
    check_layer_names,
    count_parameters,
    decode_probabilities,
    forward,
    load_checkpoint,
    predict_mask,
    registered_layer_names,
    save_checkpoint,
    write_architecture_summary,
)

from .helpers import TINY_FILTERS


def expected_parameters(filters, mode, num_classes=8):
    """Closed-form parameter count of the declared layers."""
    total, in_channels = 0, 1
    for f in filters:
        total += 9 * in_channels * f + f + 9 * f * f + f
        in_channels = f
    for stage in reversed(range(len(filters))):
        f = filters[stage]
        out = filters[stage - 1] if stage > 0 else filters[0]
        if mode == DecoderMode.TRANSPOSED_CONV_SKIP:
            total += 4 * f * f + f
        total += 9 * 2 * f * f + f + 9 * f * out + out
    return total + filters[0] * num_classes + num_classes


class TestArchitectureConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"encoder_filters": [64, 128, 256, 512]},
            {"encoder_filters": [64, 128, 256, 512, 1024]},
            {"encoder_filters": [64, 0, 256, 512, 512]},
            {"input_shape": (250, 256, 1)},
            {"input_shape": (256, 256, 3)},
            {"decoder_mode": "bilinear"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            ArchitectureConfig(**kwargs)


class TestBuild:
    @pytest.mark.parametrize(
        "mode, total",
        [(DecoderMode.TRANSPOSED_CONV_SKIP, 26_779_464), (DecoderMode.INDEX_UNPOOL, 24_336_776)],
    )
    def test_default_parameter_count(self, mode, total):
        config = ArchitectureConfig(decoder_mode=mode)
        model = build_model(config)
        assert count_parameters(model) == total == expected_parameters(config.encoder_filters, mode)

    def test_registry_names(self, tiny_model):
        names = list(tiny_model.layer_registry.keys())
        convs = [n for n in names if n == "conv2d" or n.startswith("conv2d_") and not n.startswith("conv2d_transpose")]
        assert len(convs) == 21
        assert names[-1] == tiny_model.head_name == "conv2d_20"
        assert "conv2d_19" in names
        assert tiny_model.layer_registry["conv2d_20"].conv.kernel_size == (1, 1)
        assert tiny_model.layer_registry["conv2d_19"].conv.kernel_size == (3, 3)

    def test_seeded_initialization(self, tiny_arch):
        a, b = build_model(tiny_arch), build_model(tiny_arch)
        for (name, pa), (_, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert torch.equal(pa, pb), name
        other = build_model(tiny_arch.model_copy(update={"init_seed": 7}))
        assert not torch.equal(a.state_dict()["layers.conv2d.conv.weight"], other.state_dict()["layers.conv2d.conv.weight"])


class TestForward:
    @pytest.mark.parametrize("mode", list(DecoderMode))
    def test_shape_chain(self, mode):
        config = ArchitectureConfig(decoder_mode=mode)
        filters = config.encoder_filters
        model = build_model(config)
        pools = ["max_pooling2d"] + [f"max_pooling2d_{i}" for i in range(1, 5)]
        prefix = "conv2d_transpose" if mode == DecoderMode.TRANSPOSED_CONV_SKIP else "max_unpooling2d"
        ups = [prefix] + [f"{prefix}_{i}" for i in range(1, 5)]
        with torch.no_grad():
            trace = forward(model, torch.zeros(1, 256, 256, 1), capture=pools + ups + ["conv2d_19"])
        for k, name in enumerate(pools, start=1):
            assert tuple(trace.features[name].shape) == (1, filters[k - 1], 256 // 2**k, 256 // 2**k)
        assert trace.features["max_pooling2d_4"].shape[-2:] == (8, 8)
        for name, stage in zip(ups, reversed(range(5))):
            assert tuple(trace.features[name].shape) == (1, filters[stage], 256 // 2**stage, 256 // 2**stage)
        assert tuple(trace.features["conv2d_19"].shape) == (1, filters[0], 256, 256)
        assert tuple(trace.output.shape) == (1, 256, 256, 8)

    @pytest.mark.parametrize("mode", list(DecoderMode))
    def test_probabilities(self, tiny_arch, mode):
        model = build_model(tiny_arch.model_copy(update={"decoder_mode": mode}))
        batch = torch.rand(2, 32, 32, 1, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            trace = forward(model, batch)
        assert tuple(trace.output.shape) == (2, 32, 32, 8)
        assert (trace.output >= 0).all()
        torch.testing.assert_close(trace.output.sum(-1), torch.ones(2, 32, 32), atol=1e-6, rtol=0)
        if mode == DecoderMode.INDEX_UNPOOL:
            assert len(trace.pooling_indices) == 5
        else:
            assert trace.pooling_indices == []

    def test_identical_images_identical_outputs(self, tiny_model):
        image = torch.rand(1, 32, 32, 1, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            trace = forward(tiny_model, image.repeat(2, 1, 1, 1))
            again = forward(tiny_model, image)
        assert torch.equal(trace.output[0], trace.output[1])
        torch.testing.assert_close(trace.output[:1], again.output)

    def test_zero_image_is_maximum_entropy(self, tiny_model):
        with torch.no_grad():
            probs = forward(tiny_model, torch.zeros(1, 32, 32, 1)).output
        entropy = -(probs * torch.log(probs)).sum(-1)
        torch.testing.assert_close(entropy, torch.full_like(entropy, math.log(8)), atol=1e-5, rtol=0)

    def test_logits_match_probabilities(self, tiny_model):
        with torch.no_grad():
            trace = forward(tiny_model, torch.rand(1, 32, 32, 1))
        torch.testing.assert_close(torch.softmax(trace.logits, dim=-1), trace.output)

    def test_unknown_capture_lists_registry(self, tiny_model):
        with pytest.raises(LayerNotFoundError, match="conv2d_19"):
            forward(tiny_model, torch.zeros(1, 32, 32, 1), capture=["conv2d_99"])

    @pytest.mark.parametrize("shape", [(1, 32, 32), (1, 32, 32, 3), (1, 64, 64, 1)])
    def test_wrong_shape(self, tiny_model, shape):
        with pytest.raises(ShapeError):
            forward(tiny_model, torch.zeros(shape))

    def test_unpool_round_trip(self):
        x = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(2))
        pooled, indices = F.max_pool2d(x, 2, stride=2, return_indices=True)
        unpooled = MaxUnpool()(pooled, indices, x.shape)
        assert unpooled.shape == x.shape
        assert int((unpooled != 0).sum()) == pooled.numel()
        again, _ = F.max_pool2d(unpooled, 2, stride=2, return_indices=True)
        assert torch.equal(again, pooled)

    def test_index_unpool_decoder_reuses_pooling_indices(self):
        config = ArchitectureConfig(input_shape=(64, 64, 1), encoder_filters=TINY_FILTERS, decoder_mode=DecoderMode.INDEX_UNPOOL)
        model = build_model(config)
        image = torch.rand(1, 64, 64, 1, generator=torch.Generator().manual_seed(3))
        with torch.no_grad():
            trace = forward(model, image, capture=["max_pooling2d_4", "max_unpooling2d"])
        pooled = trace.features["max_pooling2d_4"]
        unpooled = trace.features["max_unpooling2d"]
        indices = trace.pooling_indices[-1]
        assert tuple(unpooled.shape) == (1, TINY_FILTERS[4], 4, 4)
        # every pooled value lands back where the encoder took it from
        assert torch.equal(unpooled.flatten(2).gather(2, indices.flatten(2)), pooled.flatten(2))
        again = F.max_pool2d(unpooled, 2, stride=2)
        assert torch.equal(again, pooled)


class TestPredict:
    def test_constant_certainty(self):
        probs = np.zeros((4, 4, 8))
        probs[..., 3] = 1.0
        np.testing.assert_array_equal(decode_probabilities(probs), np.full((4, 4), 3))

    def test_tie_goes_to_lower_class(self):
        probs = np.zeros((1, 1, 8))
        probs[0, 0, [1, 5]] = 0.5
        assert decode_probabilities(probs)[0, 0] == 1

    def test_matches_trace_argmax(self, tiny_model):
        image = np.random.default_rng(0).random((32, 32)).astype(np.float32)
        with torch.no_grad():
            probs = forward(tiny_model, image[None, ..., None]).output[0].numpy()
        expected = np.zeros((32, 32), dtype=np.int64)
        for i in range(32):
            for j in range(32):
                expected[i, j] = max(range(8), key=lambda c: (probs[i, j, c], -c))
        np.testing.assert_array_equal(predict_mask(tiny_model, image), expected)


class TestCheckpoint:
    def test_round_trip(self, tiny_model, tiny_arch, tmp_path):
        path = save_checkpoint(tiny_model, tmp_path / "m" / "best.pt", val_loss=0.25)
        model, payload = load_checkpoint(path, expected=tiny_arch)
        assert payload["val_loss"] == 0.25 and payload["seed"] == tiny_arch.init_seed
        image = np.random.default_rng(1).random((32, 32))
        np.testing.assert_array_equal(predict_mask(model, image), predict_mask(tiny_model, image))

    def test_architecture_mismatch(self, tiny_model, tiny_arch, tmp_path):
        path = save_checkpoint(tiny_model, tmp_path / "best.pt")
        with pytest.raises(CheckpointError):
            load_checkpoint(path, expected=tiny_arch.model_copy(update={"decoder_mode": DecoderMode.INDEX_UNPOOL}))

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "none.pt")

    def test_corrupt(self, tmp_path):
        path = tmp_path / "junk.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_architecture_summary(tiny_model, tmp_path):
    rows = architecture_summary(tiny_model)
    by_name = {row["name"]: row for row in rows}
    assert by_name["conv2d_20"]["output_shape"] == [32, 32, 8]
    assert by_name["conv2d_20"]["params"] == TINY_FILTERS[0] * 8 + 8
    assert sum(row["params"] for row in rows) == count_parameters(tiny_model)
    written = json.loads(write_architecture_summary(tiny_model, tmp_path / "arch.json").read_text())
    assert written["total_params"] == count_parameters(tiny_model)


def test_architecture_summary_unwritable(tiny_model, tmp_path):
    blocker = tmp_path / "reports"
    blocker.write_text("a file where the reports directory should be")
    with pytest.raises(TrainingIOError):
        write_architecture_summary(tiny_model, blocker / "architecture.json")


class TestLayerNames:
    @pytest.mark.parametrize("mode", list(DecoderMode))
    def test_names_match_built_registry(self, tiny_arch, mode):
        config = tiny_arch.model_copy(update={"decoder_mode": mode})
        assert registered_layer_names(config) == list(build_model(config).layer_registry.keys())

    def test_unknown_name(self, tiny_arch):
        check_layer_names(tiny_arch, ["conv2d_19", "conv2d_20"])
        with pytest.raises(LayerNotFoundError, match="dense_1"):
            check_layer_names(tiny_arch, ["conv2d_19", "dense_1"])
