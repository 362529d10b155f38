"""Uniform handle over VLSM architectures: forward, freeze, checkpoint I/O.

The two real families load their published definitions and weights lazily;
nothing in the test suite requires them.  The stub family satisfies the same
contract at desk scale.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..errors import ModelError, ModelLoadError
from .spec import STUB_NORMALIZATION, ModelKind, ModelSpec
from .stub import VlsmStub, build_stub

CHECKPOINT_FORMAT_VERSION = 1


class VlsmHandle:
    """One loaded model: spec + module with text_encoder/image_encoder/decoder."""

    def __init__(self, spec: ModelSpec, module: nn.Module):
        for attr in ("text_encoder", "image_encoder", "decoder"):
            if not hasattr(module, attr):
                raise ModelError(f"model module lacks required component {attr!r}")
        self.spec = spec
        self.module = module
        self.encoder_trainable = True

    # -- forward -----------------------------------------------------------
    def forward_logits(self, images: torch.Tensor, prompts: list[str]) -> torch.Tensor:
        return self.module(images, prompts)

    def forward(self, images: torch.Tensor | np.ndarray, prompts: list[str]) -> torch.Tensor:
        """Probability maps in [0, 1]; logistic applied at this boundary."""
        images = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        return torch.sigmoid(self.forward_logits(images, prompts))

    def predict(self, images, prompts: list[str]) -> torch.Tensor:
        """Inference-mode forward (no grad, eval mode)."""
        was_training = self.module.training
        self.module.eval()
        try:
            with torch.no_grad():
                return self.forward(images, prompts)
        finally:
            self.module.train(was_training)

    # -- freeze control ----------------------------------------------------
    def encoder_parameters(self):
        yield from self.module.text_encoder.parameters()
        yield from self.module.image_encoder.parameters()

    def decoder_parameters(self):
        yield from self.module.decoder.parameters()

    def set_encoder_trainable(self, flag: bool) -> "VlsmHandle":
        for parameter in self.encoder_parameters():
            parameter.requires_grad_(flag)
        self.encoder_trainable = bool(flag)
        return self

    def encoder_digest(self) -> str:
        """sha256 over the encoder parameters, for freeze-invariant checks."""
        digest = hashlib.sha256()
        for parameter in self.encoder_parameters():
            digest.update(parameter.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    def trainable_parameters(self):
        return (p for p in self.module.parameters() if p.requires_grad)

    # -- checkpoint I/O ----------------------------------------------------
    def save_checkpoint(
        self,
        path: str | Path,
        *,
        config: dict | None = None,
        epoch: int | None = None,
        val_dice: float | None = None,
        strategy: str | None = None,
    ) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": self.spec.kind.value,
            "input_size": self.spec.input_size,
            "normalization": self.spec.normalization,
            "weights_ref": self.spec.weights_ref,
            "state_dict": self.module.state_dict(),
            "config": config,
            "epoch": epoch,
            "val_dice": val_dice,
            "strategy": strategy,
        }
        if isinstance(self.module, VlsmStub):
            payload["stub_config"] = {
                "input_size": self.module.input_size,
                "width": self.module.width,
                "embed_dim": self.module.embed_dim,
            }
        torch.save(payload, path)


def read_checkpoint_manifest(path: str | Path) -> dict:
    """The checkpoint's metadata (kind, config, epoch, val dice, strategy)."""
    payload = _load_payload(path)
    return {
        key: payload.get(key)
        for key in ("format_version", "kind", "config", "epoch", "val_dice", "strategy")
    }


def _load_payload(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ModelLoadError(f"checkpoint {path} does not exist")
    try:
        return torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ModelLoadError(f"cannot read checkpoint {path}: {exc}") from exc


def load_checkpoint(spec: ModelSpec, path: str | Path) -> VlsmHandle:
    """Rebuild a handle from a checkpoint; the kinds must agree."""
    payload = _load_payload(path)
    saved_kind = payload.get("kind")
    if saved_kind != spec.kind.value:
        raise ModelLoadError(
            f"checkpoint {path} holds a {saved_kind!r} model, "
            f"cannot load into a {spec.kind.value!r} spec"
        )
    if spec.kind is ModelKind.STUB:
        stub_config = payload.get("stub_config") or {}
        module: nn.Module = VlsmStub(
            input_size=stub_config.get("input_size", spec.input_size),
            width=stub_config.get("width", 8),
            embed_dim=stub_config.get("embed_dim", 16),
        )
    else:
        module = _build_real_module(spec)
    try:
        module.load_state_dict(payload["state_dict"], strict=True)
    except (RuntimeError, KeyError) as exc:
        raise ModelLoadError(f"checkpoint {path} does not fit the model: {exc}") from exc
    normalization = payload.get("normalization") or spec.normalization
    if normalization is not None:
        normalization = tuple(tuple(float(x) for x in half) for half in normalization)
    loaded_spec = ModelSpec(
        kind=spec.kind,
        input_size=payload.get("input_size", spec.input_size),
        normalization=normalization,
        weights_ref=spec.weights_ref,
    )
    return VlsmHandle(loaded_spec, module)


def build_handle(spec: ModelSpec, seed: int = 0) -> VlsmHandle:
    """Construct a fresh handle for the spec (published weights for real kinds)."""
    if spec.kind is ModelKind.STUB:
        module = build_stub(input_size=spec.input_size, seed=seed)
        resolved = spec if spec.normalization is not None else ModelSpec(
            kind=spec.kind,
            input_size=spec.input_size,
            normalization=STUB_NORMALIZATION,
            weights_ref=spec.weights_ref,
        )
        return VlsmHandle(resolved, module)
    module, normalization = (
        _build_clipseg(spec) if spec.kind is ModelKind.CLIPSEG_LIKE else _build_cris(spec)
    )
    resolved = ModelSpec(
        kind=spec.kind,
        input_size=spec.input_size,
        normalization=spec.normalization or normalization,
        weights_ref=spec.weights_ref,
    )
    return VlsmHandle(resolved, module)


def _build_real_module(spec: ModelSpec) -> nn.Module:
    module, _ = (
        _build_clipseg(spec) if spec.kind is ModelKind.CLIPSEG_LIKE else _build_cris(spec)
    )
    return module


class _ClipSegWrapper(nn.Module):
    """Adapts the published CLIPSeg implementation to the handle contract."""

    def __init__(self, model, processor):
        super().__init__()
        self.model = model
        self.processor = processor
        self.text_encoder = model.clip.text_model
        self.image_encoder = model.clip.vision_model
        self.decoder = model.decoder

    def forward(self, images: torch.Tensor, prompts: list[str]) -> torch.Tensor:
        tokenized = self.processor.tokenizer(
            list(prompts), padding=True, truncation=True, return_tensors="pt"
        )
        outputs = self.model(
            input_ids=tokenized["input_ids"].to(images.device),
            attention_mask=tokenized["attention_mask"].to(images.device),
            pixel_values=images,
        )
        logits = outputs.logits
        if logits.ndim == 3:
            logits = logits[:, None]
        return logits


def _build_clipseg(spec: ModelSpec):
    weights_ref = spec.weights_ref or "CIDAS/clipseg-rd64-refined"
    try:
        from transformers import CLIPSegForImageSegmentation, CLIPSegProcessor
    except ImportError as exc:
        raise ModelLoadError(
            "clipseg-like models need the 'transformers' package with published "
            f"CLIPSeg weights (tried weights_ref={weights_ref!r}); install it or "
            "use the stub kind for desk-scale runs"
        ) from exc
    try:
        model = CLIPSegForImageSegmentation.from_pretrained(weights_ref)
        processor = CLIPSegProcessor.from_pretrained(weights_ref)
    except Exception as exc:
        raise ModelLoadError(f"cannot load CLIPSeg weights from {weights_ref!r}: {exc}") from exc
    image_processor = getattr(processor, "image_processor", processor)
    normalization = (
        tuple(float(x) for x in image_processor.image_mean),
        tuple(float(x) for x in image_processor.image_std),
    )
    return _ClipSegWrapper(model, processor), normalization


def _build_cris(spec: ModelSpec):
    """CRIS has no packaged distribution; weights_ref names a loader module.

    The module (a Python file path or importable name) must expose
    ``build_model() -> nn.Module`` honoring the handle contract and
    ``normalization() -> (mean, std)`` with the family's published constants.
    """
    if not spec.weights_ref:
        raise ModelLoadError(
            "cris-like models need weights_ref pointing to a loader module that "
            "exposes build_model() and normalization(); none was configured"
        )
    import importlib
    import importlib.util

    ref = spec.weights_ref
    try:
        if ref.endswith(".py"):
            module_spec = importlib.util.spec_from_file_location("cris_loader", ref)
            if module_spec is None or module_spec.loader is None:
                raise ImportError(f"cannot load module from {ref!r}")
            loader_module = importlib.util.module_from_spec(module_spec)
            module_spec.loader.exec_module(loader_module)
        else:
            loader_module = importlib.import_module(ref)
    except Exception as exc:
        raise ModelLoadError(f"cannot import CRIS loader module {ref!r}: {exc}") from exc
    for required in ("build_model", "normalization"):
        if not hasattr(loader_module, required):
            raise ModelLoadError(f"CRIS loader module {ref!r} lacks {required}()")
    model = loader_module.build_model()
    mean, std = loader_module.normalization()
    return model, (tuple(float(x) for x in mean), tuple(float(x) for x in std))
