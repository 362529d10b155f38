import numpy as np
import pytest
import torch

from echo_vlsm.errors import ConfigError, ModelError, ModelLoadError
from echo_vlsm.models.adapter import (
    VlsmHandle,
    build_handle,
    load_checkpoint,
    read_checkpoint_manifest,
)
from echo_vlsm.models.preprocess import preprocess, resize_intensity, to_unit_range
from echo_vlsm.models.spec import (
    FAMILY_INPUT_SIZES,
    STUB_NORMALIZATION,
    ModelKind,
    ModelSpec,
)
from echo_vlsm.models.stub import VlsmStub, build_stub, char_bag


class TestUnitRange:
    def test_uint8_divides_by_dtype_max(self):
        array = np.array([[0, 255], [128, 64]], dtype=np.uint8)
        out = to_unit_range(array)
        assert out.dtype == np.float32
        np.testing.assert_allclose(out, array / 255.0, rtol=1e-6)

    def test_uint16_divides_by_dtype_max(self):
        array = np.array([[0, 65535]], dtype=np.uint16)
        np.testing.assert_allclose(to_unit_range(array), [[0.0, 1.0]])

    def test_unit_floats_pass_through(self):
        array = np.array([[0.25, 0.75]], dtype=np.float32)
        np.testing.assert_array_equal(to_unit_range(array), array)

    def test_out_of_range_floats_min_max_scaled(self):
        array = np.array([[10.0, 20.0, 30.0]])
        np.testing.assert_allclose(to_unit_range(array), [[0.0, 0.5, 1.0]])

    def test_constant_float_maps_to_zeros(self):
        np.testing.assert_array_equal(to_unit_range(np.full((2, 2), 99.0)), 0.0)

    def test_signed_integers_rejected(self):
        with pytest.raises(ModelError, match="signed"):
            to_unit_range(np.array([[1, -1]], dtype=np.int16))


class TestResize:
    def test_identity_when_already_sized(self):
        image = np.random.default_rng(0).random((16, 16)).astype(np.float32)
        out = resize_intensity(image, 16)
        np.testing.assert_allclose(out.numpy(), image, atol=1e-5)

    def test_upsample_shape(self):
        assert tuple(resize_intensity(np.zeros((8, 8)), 32).shape) == (32, 32)

    def test_non_2d_rejected(self):
        with pytest.raises(ModelError):
            resize_intensity(np.zeros((2, 3, 4)), 16)


class TestPreprocess:
    def test_output_contract(self, stub_spec):
        image = np.random.default_rng(1).integers(0, 255, (40, 40), dtype=np.uint8)
        tensor = preprocess(image, stub_spec)
        assert tuple(tensor.shape) == (3, 32, 32)
        assert tensor.dtype == torch.float32

    def test_normalization_affine_map(self, stub_spec):
        mean, std = STUB_NORMALIZATION
        image = np.full((32, 32), 255, dtype=np.uint8)  # unit value 1.0
        tensor = preprocess(image, stub_spec)
        for c in range(3):
            expected = (1.0 - mean[c]) / std[c]
            np.testing.assert_allclose(tensor[c].numpy(), expected, rtol=1e-6)

    def test_spec_without_normalization_rejected(self):
        spec = ModelSpec(kind=ModelKind.STUB, input_size=32, normalization=None)
        with pytest.raises(ModelError, match="normalization"):
            preprocess(np.zeros((8, 8), dtype=np.uint8), spec)


class TestModelSpec:
    def test_family_input_sizes_enforced(self):
        for kind_name, size in FAMILY_INPUT_SIZES.items():
            kind = ModelKind(kind_name)
            assert ModelSpec.for_kind(kind).input_size == size
            with pytest.raises(ConfigError):
                ModelSpec(kind=kind, input_size=size + 1)

    def test_stub_gets_default_normalization(self):
        assert ModelSpec.for_kind(ModelKind.STUB).normalization == STUB_NORMALIZATION

    def test_bad_normalization_rejected(self):
        with pytest.raises(ConfigError):
            ModelSpec(
                kind=ModelKind.STUB, input_size=32,
                normalization=((0.5, 0.5), (0.5, 0.5)),  # 2 channels
            )
        with pytest.raises(ConfigError):
            ModelSpec(
                kind=ModelKind.STUB, input_size=32,
                normalization=((0.5,) * 3, (0.0,) * 3),  # zero std
            )


class TestStub:
    def test_char_bag_unit_mass(self):
        bag = char_bag("Left ventricular cavity.")
        assert bag.shape == (64,)
        np.testing.assert_allclose(bag.sum(), 1.0, rtol=1e-6)

    def test_char_bag_empty_prompt_is_zero(self):
        np.testing.assert_array_equal(char_bag(""), 0.0)

    def test_build_is_deterministic(self):
        a = build_stub(input_size=32, seed=5)
        b = build_stub(input_size=32, seed=5)
        for (name_a, pa), (name_b, pb) in zip(
            a.state_dict().items(), b.state_dict().items()
        ):
            assert name_a == name_b
            assert torch.equal(pa, pb)
        c = build_stub(input_size=32, seed=6)
        assert any(
            not torch.equal(pa, pc)
            for pa, pc in zip(a.state_dict().values(), c.state_dict().values())
        )

    def test_build_preserves_global_rng(self):
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        build_stub(input_size=32, seed=99)
        np.testing.assert_array_equal(torch.rand(3).numpy(), expected.numpy())

    def test_forward_shape(self):
        stub = build_stub(input_size=32)
        logits = stub(torch.zeros(2, 3, 32, 32), ["a", "b"])
        assert tuple(logits.shape) == (2, 1, 32, 32)
        assert torch.isfinite(logits).all()

    def test_prompt_count_mismatch(self):
        stub = build_stub(input_size=32)
        with pytest.raises(ValueError, match="2 does not match 1"):
            stub(torch.zeros(2, 3, 32, 32), ["only one"])

    def test_input_size_must_be_divisible_by_four(self):
        with pytest.raises(ValueError, match="divisible by 4"):
            VlsmStub(input_size=30)


class TestHandle:
    def make_handle(self, seed=0):
        spec = ModelSpec.for_kind(ModelKind.STUB, input_size=32)
        return build_handle(spec, seed=seed)

    def test_handle_requires_component_attributes(self, stub_spec):
        with pytest.raises(ModelError, match="text_encoder"):
            VlsmHandle(stub_spec, torch.nn.Linear(2, 2))

        class NoDecoder(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.text_encoder = torch.nn.Linear(2, 2)
                self.image_encoder = torch.nn.Linear(2, 2)

        with pytest.raises(ModelError, match="decoder"):
            VlsmHandle(stub_spec, NoDecoder())

    def test_forward_is_sigmoid_of_logits(self):
        handle = self.make_handle()
        images = torch.rand(1, 3, 32, 32)
        probs = handle.forward(images, ["prompt"])
        logits = handle.forward_logits(images, ["prompt"])
        assert torch.allclose(probs, torch.sigmoid(logits))
        assert probs.min() >= 0.0 and probs.max() <= 1.0

    def test_predict_restores_training_mode(self):
        handle = self.make_handle()
        handle.module.train()
        handle.predict(torch.rand(1, 3, 32, 32), ["prompt"])
        assert handle.module.training

    def test_freeze_flags_select_parameters(self):
        handle = self.make_handle()
        handle.set_encoder_trainable(False)
        assert all(not p.requires_grad for p in handle.encoder_parameters())
        trainable = {id(p) for p in handle.trainable_parameters()}
        assert trainable == {id(p) for p in handle.decoder_parameters()}
        handle.set_encoder_trainable(True)
        assert all(p.requires_grad for p in handle.encoder_parameters())

    def test_encoder_digest_tracks_encoder_only(self):
        handle = self.make_handle()
        before = handle.encoder_digest()
        with torch.no_grad():
            for p in handle.decoder_parameters():
                p.add_(1.0)
        assert handle.encoder_digest() == before
        with torch.no_grad():
            next(iter(handle.encoder_parameters())).add_(1.0)
        assert handle.encoder_digest() != before

    def test_checkpoint_round_trip(self, tmp_path):
        handle = self.make_handle(seed=7)
        path = tmp_path / "best.pt"
        handle.save_checkpoint(
            path, config={"note": "test"}, epoch=3, val_dice=0.5, strategy="real",
        )
        manifest = read_checkpoint_manifest(path)
        assert manifest["epoch"] == 3
        assert manifest["strategy"] == "real"
        assert manifest["kind"] == ModelKind.STUB.value

        restored = load_checkpoint(handle.spec, path)
        for (name_a, pa), (name_b, pb) in zip(
            handle.module.state_dict().items(),
            restored.module.state_dict().items(),
        ):
            assert name_a == name_b
            assert torch.equal(pa, pb)

    def test_checkpoint_kind_mismatch(self, tmp_path):
        handle = self.make_handle()
        path = tmp_path / "best.pt"
        handle.save_checkpoint(path, config={}, epoch=1, val_dice=0.1, strategy="real")
        clipseg_spec = ModelSpec.for_kind(ModelKind.CLIPSEG_LIKE)
        with pytest.raises(ModelLoadError, match="kind"):
            load_checkpoint(clipseg_spec, path)

    def test_missing_checkpoint(self, stub_spec, tmp_path):
        with pytest.raises(ModelLoadError):
            load_checkpoint(stub_spec, tmp_path / "absent.pt")

    def test_corrupt_checkpoint(self, stub_spec, tmp_path):
        path = tmp_path / "bad.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ModelLoadError):
            load_checkpoint(stub_spec, path)
