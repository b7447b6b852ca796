"""
SegNet-style encoder-decoder for 8-class retinal layer segmentation.

Layer names follow the Keras auto-naming scheme (``conv2d``, ``conv2d_1``, ...,
``max_pooling2d_4``, ``conv2d_transpose_3``, ...) so the default network's last
decoder convolution is ``conv2d_19`` and the 1x1 softmax head is ``conv2d_20``.
Every registered convolution emits its post-activation tensor.
"""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core.errors import CheckpointError, LayerNotFoundError, ShapeError, TrainingIOError
from ..core.models import ArchitectureConfig, DecoderMode, ForwardTrace

logger = logging.getLogger(__name__)


class ConvLayer(nn.Module):
    """Convolution with a fused activation, like a Keras Conv2D(activation=...)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, activation: str = "relu"):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size, padding=kernel_size // 2)
        self.activation = activation

    def activate(self, x: torch.Tensor) -> torch.Tensor:
        if self.activation == "relu":
            return F.relu(x)
        if self.activation == "softmax":
            return F.softmax(x, dim=1)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.activate(self.conv(x))


class Concatenate(nn.Module):
    def forward(self, upsampled: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        return torch.cat([upsampled, skip], dim=1)


class MaxUnpool(nn.Module):
    def forward(self, x: torch.Tensor, indices: torch.Tensor, output_size: torch.Size) -> torch.Tensor:
        return F.max_unpool2d(x, indices, kernel_size=2, stride=2, output_size=output_size[-2:])


class _TraceRecorder:
    """Per-call capture buffer; keeps traced forwards free of shared state."""

    def __init__(self, names: Iterable[str], keep_indices: bool = False):
        self.names = set(names)
        self.keep_indices = keep_indices
        self.features: Dict[str, torch.Tensor] = {}
        self.indices: List[torch.Tensor] = []
        self.logits: Optional[torch.Tensor] = None


class TracedModule(nn.Module):
    """
    Base for networks whose named layers can be captured during a forward pass.

    Subclasses store layers in ``self.layers`` (an ``nn.ModuleDict``), set
    ``head_name`` to their final softmax convolution, and route every layer
    call through ``call_layer``. ``forward`` takes and returns channels-first
    tensors (B x C x H x W).
    """
    head_name: str = ""
    input_shape: Optional[Tuple[int, int, int]] = None

    def __init__(self):
        super().__init__()
        self.layers = nn.ModuleDict()

    @property
    def layer_registry(self) -> nn.ModuleDict:
        return self.layers

    def call_layer(self, name: str, *inputs: Any, recorder: Optional[_TraceRecorder] = None):
        module = self.layers[name]
        if isinstance(module, ConvLayer):
            pre = module.conv(inputs[0])
            out = module.activate(pre)
            if recorder is not None and name == self.head_name:
                recorder.logits = pre
        else:
            out = module(*inputs)
        if recorder is not None:
            feature = out
            if isinstance(out, tuple):
                feature, indices = out
                if recorder.keep_indices:
                    recorder.indices.append(indices)
            if name in recorder.names:
                recorder.features[name] = feature
        return out

    def forward(self, x: torch.Tensor, recorder: Optional[_TraceRecorder] = None) -> torch.Tensor:
        raise NotImplementedError


class SegmentationModel(TracedModule):
    """
    Encoder: 5 x (conv3x3+ReLU, conv3x3+ReLU, 2x2 max-pool with indices).
    Decoder: 5 x (2x upsampling, concat with the matching encoder map,
    conv3x3+ReLU, conv3x3+ReLU). Head: conv1x1 to num_classes + softmax.
    """

    def __init__(self, config: ArchitectureConfig):
        super().__init__()
        self.config = config
        self.input_shape = tuple(config.input_shape)
        self._counter: Dict[str, int] = defaultdict(int)
        filters = list(config.encoder_filters)
        k = config.kernel_size

        self.encoder_blocks: List[Tuple[str, str, str]] = []
        in_channels = config.input_shape[-1]
        for width in filters:
            conv_a = self._add("conv2d", ConvLayer(in_channels, width, k))
            conv_b = self._add("conv2d", ConvLayer(width, width, k))
            pool = self._add("max_pooling2d", nn.MaxPool2d(2, stride=2, return_indices=True))
            self.encoder_blocks.append((conv_a, conv_b, pool))
            in_channels = width

        self.decoder_blocks: List[Tuple[str, str, str, str]] = []
        for stage in reversed(range(len(filters))):
            width = filters[stage]
            out_width = filters[stage - 1] if stage > 0 else filters[0]
            if config.decoder_mode == DecoderMode.TRANSPOSED_CONV_SKIP:
                up = self._add("conv2d_transpose", nn.ConvTranspose2d(width, width, 2, stride=2))
            else:
                up = self._add("max_unpooling2d", MaxUnpool())
            concat = self._add("concatenate", Concatenate())
            conv_a = self._add("conv2d", ConvLayer(2 * width, width, k))
            conv_b = self._add("conv2d", ConvLayer(width, out_width, k))
            self.decoder_blocks.append((up, concat, conv_a, conv_b))

        self.head_name = self._add("conv2d", ConvLayer(filters[0], config.num_classes, 1, activation="softmax"))

    def _add(self, prefix: str, module: nn.Module) -> str:
        index = self._counter[prefix]
        self._counter[prefix] += 1
        name = prefix if index == 0 else f"{prefix}_{index}"
        self.layers[name] = module
        return name

    def reset_parameters(self, seed: int) -> None:
        """Glorot-uniform kernels and zero biases under an explicit seed."""
        generator = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
                fan_in, fan_out = nn.init._calculate_fan_in_and_fan_out(module.weight)
                bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
                with torch.no_grad():
                    module.weight.copy_(torch.rand(module.weight.shape, generator=generator) * 2 * bound - bound)
                    module.bias.zero_()

    def forward(self, x: torch.Tensor, recorder: Optional[_TraceRecorder] = None) -> torch.Tensor:
        skips, indices = [], []
        for conv_a, conv_b, pool in self.encoder_blocks:
            x = self.call_layer(conv_a, x, recorder=recorder)
            x = self.call_layer(conv_b, x, recorder=recorder)
            skips.append(x)
            x, idx = self.call_layer(pool, x, recorder=recorder)
            indices.append(idx)

        for (up, concat, conv_a, conv_b), skip, idx in zip(self.decoder_blocks, reversed(skips), reversed(indices)):
            if self.config.decoder_mode == DecoderMode.TRANSPOSED_CONV_SKIP:
                x = self.call_layer(up, x, recorder=recorder)
            else:
                x = self.call_layer(up, x, idx, skip.shape, recorder=recorder)
            x = self.call_layer(concat, x, skip, recorder=recorder)
            x = self.call_layer(conv_a, x, recorder=recorder)
            x = self.call_layer(conv_b, x, recorder=recorder)

        return self.call_layer(self.head_name, x, recorder=recorder)


def build_model(config: ArchitectureConfig) -> SegmentationModel:
    """Build the network with reproducible, seeded parameters."""
    model = SegmentationModel(config)
    model.reset_parameters(config.init_seed)
    logger.debug("Built %s model with %d parameters", config.decoder_mode.value, count_parameters(model))
    return model


def registered_layer_names(config: ArchitectureConfig) -> List[str]:
    """Registry names of the network ``config`` describes, built on the meta device (no parameter storage)."""
    with torch.device("meta"):
        return list(SegmentationModel(config).layer_registry.keys())


def check_layer_names(config: ArchitectureConfig, layers: Iterable[str]) -> None:
    """
    Raises:
        LayerNotFoundError: the first name in ``layers`` the network does not register.
    """
    registered = registered_layer_names(config)
    for layer in layers:
        if layer not in registered:
            raise LayerNotFoundError(layer, registered)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _model_dtype_device(model: nn.Module) -> Tuple[torch.dtype, torch.device]:
    param = next(model.parameters())
    return param.dtype, param.device


def forward(model: TracedModule, batch: torch.Tensor | np.ndarray, capture: Sequence[str] = ()) -> ForwardTrace:
    """
    Run a traced forward pass on a channels-last batch (B x H x W x 1).

    Gradient tracking follows the caller's context, so Grad-CAM can
    differentiate through the returned tensors.
    """
    missing = [name for name in capture if name not in model.layer_registry]
    if missing:
        raise LayerNotFoundError(missing[0], list(model.layer_registry.keys()))

    tensor = torch.as_tensor(batch)
    if tensor.ndim != 4 or tensor.shape[-1] != 1:
        raise ShapeError(f"expected a B x H x W x 1 batch, got shape {tuple(tensor.shape)}")
    if model.input_shape is not None and tuple(tensor.shape[1:3]) != tuple(model.input_shape[:2]):
        raise ShapeError(f"expected spatial size {tuple(model.input_shape[:2])}, got {tuple(tensor.shape[1:3])}")

    dtype, device = _model_dtype_device(model)
    x = tensor.to(device=device, dtype=dtype).permute(0, 3, 1, 2)
    keep_indices = getattr(getattr(model, "config", None), "decoder_mode", None) == DecoderMode.INDEX_UNPOOL
    recorder = _TraceRecorder(capture, keep_indices=keep_indices)
    probabilities = model(x, recorder=recorder)
    logits = recorder.logits if recorder.logits is not None else torch.log(probabilities)
    return ForwardTrace(
        output=probabilities.permute(0, 2, 3, 1),
        logits=logits.permute(0, 2, 3, 1),
        features=recorder.features,
        pooling_indices=recorder.indices,
    )


def decode_probabilities(probabilities: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over the last axis; ties go to the lowest class index."""
    return np.argmax(np.asarray(probabilities), axis=-1).astype(np.int64)


def predict_mask(model: TracedModule, image: np.ndarray) -> np.ndarray:
    """Label grid for one preprocessed image (H x W or H x W x 1)."""
    array = np.asarray(image, dtype=np.float32)
    if array.ndim == 2:
        array = array[..., np.newaxis]
    with torch.no_grad():
        trace = forward(model, array[np.newaxis])
    return decode_probabilities(trace.output[0].cpu().numpy())


# --------------------------------------------------------------------------- #
# Persistence and summaries
# --------------------------------------------------------------------------- #

def save_checkpoint(model: SegmentationModel, path: Path | str, **extra: Any) -> Path:
    """Atomically write parameters, architecture config and seed."""
    target = Path(path)
    payload = {
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "config": model.config.model_dump(mode="json"),
        "seed": model.config.init_seed,
        **extra,
    }
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        torch.save(payload, tmp)
        os.replace(tmp, target)
    except OSError as e:
        raise TrainingIOError(f"Could not write checkpoint {target}: {e}") from e
    return target


def load_checkpoint(
    path: Path | str, expected: Optional[ArchitectureConfig] = None, map_location: str = "cpu"
) -> Tuple[SegmentationModel, Dict[str, Any]]:
    """
    Rebuild a model from a checkpoint.

    Raises:
        CheckpointError: file missing/unreadable, or built for another architecture.
    """
    source = Path(path)
    if not source.exists():
        raise CheckpointError(f"Checkpoint not found: {source}")
    try:
        payload = torch.load(source, map_location=map_location, weights_only=True)
        config = ArchitectureConfig.model_validate(payload["config"])
    except Exception as e:
        raise CheckpointError(f"Unreadable checkpoint {source}: {e}") from e

    if expected is not None and config.model_dump(mode="json") != expected.model_dump(mode="json"):
        raise CheckpointError(
            f"Checkpoint {source} was built for a different architecture: "
            f"{config.model_dump(mode='json')} != {expected.model_dump(mode='json')}"
        )
    model = SegmentationModel(config)
    try:
        model.load_state_dict(payload["state_dict"], strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {source} does not match its declared architecture: {e}") from e
    model.eval()
    return model, payload


def architecture_summary(model: TracedModule) -> List[Dict[str, Any]]:
    """Layer name, kind, output shape (channels-last, batch 1) and parameter count."""
    height, width, channels = model.input_shape
    names = list(model.layer_registry.keys())
    dtype, device = _model_dtype_device(model)
    with torch.no_grad():
        trace = forward(model, torch.zeros((1, height, width, channels), dtype=dtype, device=device), capture=names)
    rows = []
    for name in names:
        module = model.layer_registry[name]
        n, c, h, w = trace.features[name].shape
        rows.append(
            {
                "name": name,
                "kind": type(module.conv if isinstance(module, ConvLayer) else module).__name__,
                "output_shape": [h, w, c],
                "params": count_parameters(module),
            }
        )
    return rows


def write_architecture_summary(model: TracedModule, path: Path | str) -> Path:
    target = Path(path)
    rows = architecture_summary(model)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps({"layers": rows, "total_params": count_parameters(model)}, indent=2))
    except OSError as e:
        raise TrainingIOError(f"Could not write architecture summary {target}: {e}") from e
    return target
