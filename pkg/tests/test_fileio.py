import numpy as np
import pytest
from PIL import Image

from liftseg.cnn import CnnConfig, init_params
from liftseg.errors import ValidationError
from liftseg.fileio import (
    load_image,
    load_label_map,
    read_feature_stack,
    read_network_params,
    save_label_png,
    write_feature_stack,
    write_network_params,
)


class TestImageLoading:
    def test_png_8bit_grayscale(self, tmp_path):
        path = tmp_path / "g.png"
        arr = np.arange(64, dtype=np.uint8).reshape(8, 8) * 4
        Image.fromarray(arr, mode="L").save(path)
        img = load_image(path)
        assert img.shape == (8, 8)
        assert np.allclose(img, arr / 255.0)

    def test_png_16bit(self, tmp_path):
        path = tmp_path / "g16.png"
        arr = (np.arange(64, dtype=np.uint32).reshape(8, 8) * 1000).astype(np.uint16)
        Image.fromarray(arr).save(path)  # mode I;16
        img = load_image(path)
        assert np.allclose(img, arr / 65535.0)

    def test_rgb_converted_by_luminance(self, tmp_path):
        path = tmp_path / "c.png"
        rgb = np.zeros((8, 8, 3), dtype=np.uint8)
        rgb[:, :, 0] = 200
        rgb[:, :, 1] = 100
        rgb[:, :, 2] = 50
        Image.fromarray(rgb, mode="RGB").save(path)
        img = load_image(path)
        expected = (0.2126 * 200 + 0.7152 * 100 + 0.0722 * 50) / 255.0
        assert np.allclose(img, expected)

    def test_pgm(self, tmp_path):
        path = tmp_path / "g.pgm"
        arr = np.linspace(0, 255, 64, dtype=np.uint8).reshape(8, 8)
        Image.fromarray(arr, mode="L").save(path)
        img = load_image(path)
        assert np.allclose(img, arr / 255.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="cannot read"):
            load_image(tmp_path / "nope.png")


class TestLabelPng:
    def test_round_trip_indices(self, tmp_path):
        path = tmp_path / "labels.png"
        labels = np.random.default_rng(0).integers(0, 4, (12, 10))
        save_label_png(labels, path)
        back = load_label_map(path)
        assert np.array_equal(back, labels)

    def test_rejects_wide_labels(self, tmp_path):
        with pytest.raises(ValidationError):
            save_label_png(np.full((4, 4), 300), tmp_path / "x.png")


class TestFeatureStackFile:
    def test_round_trip_bit_exact(self, tmp_path):
        path = tmp_path / "s.fstk"
        rng = np.random.default_rng(1)
        stack = rng.uniform(0, 1, (3, 6, 7))
        write_feature_stack(path, stack)
        first = path.read_bytes()
        back = read_feature_stack(path)
        assert back.shape == (3, 6, 7)
        assert np.array_equal(back, stack.astype(np.float32).astype(np.float64))
        # writing the read-back stack reproduces the file byte for byte
        write_feature_stack(path, back)
        assert path.read_bytes() == first

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.fstk"
        write_feature_stack(path, np.zeros((2, 4, 4)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValidationError, match="payload size mismatch"):
            read_feature_stack(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.fstk"
        write_feature_stack(path, np.zeros((1, 4, 4)))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValidationError, match="magic"):
            read_feature_stack(path)

    def test_header_declares_payload(self, tmp_path):
        path = tmp_path / "h.fstk"
        write_feature_stack(path, np.zeros((2, 3, 5)))
        blob = path.read_bytes()
        assert blob[:4] == b"FSTK"
        assert len(blob) == 20 + 2 * 3 * 5 * 4


class TestNetworkParamsFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "p.lsnn"
        params = init_params(CnnConfig(k=3, seed=7))
        write_network_params(path, params)
        back = read_network_params(path)
        assert back.k == 3
        for a, b in zip(params.blocks(), back.blocks()):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.biases, b.biases)
            assert a.activation == b.activation

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "p.lsnn"
        write_network_params(path, init_params(CnnConfig(k=2, seed=0)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(ValidationError, match="truncated"):
            read_network_params(path)
