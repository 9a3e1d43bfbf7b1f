import json

import numpy as np
import pytest

from conftest import tiny_config
from structattn import (
    ContainerCorruptionError,
    ContainerFormatError,
    ContainerValidationError,
    init_default,
    init_vit,
    read_container,
    render_attention_pgm,
    write_container,
)
from structattn.container import container_sha256


@pytest.fixture
def small_bundle():
    return init_vit(tiny_config(layers=2, seed=7))


def _bundles_equal(a, b):
    assert a.config == b.config
    assert a.method == b.method
    assert a.pos.std == b.pos.std and a.pos.seed == b.pos.seed
    np.testing.assert_array_equal(a.pos.data, b.pos.data)
    for ha, hb in zip(a.attention, b.attention):
        assert (ha.layer, ha.head, ha.target_offset) == (hb.layer, hb.head, hb.target_offset)
        np.testing.assert_array_equal(ha.Q, hb.Q)
        np.testing.assert_array_equal(ha.K, hb.K)


class TestRoundtrip:
    def test_f64_roundtrip_exact(self, small_bundle, tmp_path):
        path = tmp_path / "w.saiw"
        write_container(small_bundle, path, dtype="f64")
        _bundles_equal(small_bundle, read_container(path))

    def test_f32_reserialization_is_byte_identical(self, small_bundle, tmp_path):
        first = tmp_path / "a.saiw"
        second = tmp_path / "b.saiw"
        write_container(small_bundle, first, dtype="f32")
        write_container(read_container(first), second, dtype="f32")
        assert first.read_bytes() == second.read_bytes()

    def test_rewrites_are_byte_identical(self, small_bundle, tmp_path):
        a, b = tmp_path / "a.saiw", tmp_path / "b.saiw"
        write_container(small_bundle, a)
        write_container(small_bundle, b)
        assert container_sha256(a) == container_sha256(b)
        assert a.read_bytes() == b.read_bytes()

    def test_vit_tiny_tensor_count(self, tmp_path):
        path = tmp_path / "tiny.saiw"
        write_container(init_vit(tiny_config()), path)
        blob = path.read_bytes()
        header_len = int.from_bytes(blob[8:16], "little")
        header = json.loads(blob[16 : 16 + header_len])
        assert len(header["tensors"]) == 12 * 3 * 2 + 1 == 73

    def test_default_init_roundtrips_without_norm_check(self, tmp_path):
        bundle = init_default(tiny_config(layers=1, seed=3))
        path = tmp_path / "d.saiw"
        write_container(bundle, path, dtype="f64")
        back = read_container(path)
        assert back.method == "default"
        assert back.attention[0].target_offset is None

    def test_payload_alignment(self, small_bundle, tmp_path):
        path = tmp_path / "w.saiw"
        write_container(small_bundle, path)
        blob = path.read_bytes()
        header_len = int.from_bytes(blob[8:16], "little")
        assert (16 + header_len) % 64 == 0
        header = json.loads(blob[16 : 16 + header_len])
        for spec in header["tensors"].values():
            assert spec["byte_offset"] % 64 == 0


def _doctor(path, out, mutate):
    blob = bytearray(path.read_bytes())
    mutate(blob)
    out.write_bytes(bytes(blob))


class TestMalformedContainers:
    @pytest.fixture
    def container(self, small_bundle, tmp_path):
        path = tmp_path / "good.saiw"
        write_container(small_bundle, path)
        return path

    def test_flipped_magic(self, container, tmp_path):
        bad = tmp_path / "bad.saiw"

        def mutate(blob):
            blob[0] ^= 0xFF

        _doctor(container, bad, mutate)
        with pytest.raises(ContainerFormatError, match="magic"):
            read_container(bad)

    def test_unsupported_version(self, container, tmp_path):
        bad = tmp_path / "bad.saiw"

        def mutate(blob):
            blob[4:8] = (99).to_bytes(4, "little")

        _doctor(container, bad, mutate)
        with pytest.raises(ContainerFormatError, match="version"):
            read_container(bad)

    def test_truncated_payload(self, container, tmp_path):
        bad = tmp_path / "bad.saiw"
        bad.write_bytes(container.read_bytes()[:-1])
        with pytest.raises(ContainerCorruptionError):
            read_container(bad)

    def test_header_not_json(self, container, tmp_path):
        bad = tmp_path / "bad.saiw"

        def mutate(blob):
            blob[16] = ord("!")

        _doctor(container, bad, mutate)
        with pytest.raises(ContainerFormatError, match="JSON"):
            read_container(bad)

    def test_overlapping_offsets(self, small_bundle, tmp_path):
        good = tmp_path / "good64.saiw"
        write_container(small_bundle, good, dtype="f64")
        blob = bytearray(good.read_bytes())
        header_len = int.from_bytes(blob[8:16], "little")
        header = json.loads(blob[16 : 16 + header_len])
        # point one tensor into another's byte range
        header["tensors"]["layer0.head0.q"]["byte_offset"] = header["tensors"]["pos_embed"][
            "byte_offset"
        ]
        doctored = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        doctored += b" " * ((-(16 + len(doctored))) % 64)
        bad = tmp_path / "bad.saiw"
        bad.write_bytes(
            blob[:8] + len(doctored).to_bytes(8, "little") + doctored + blob[16 + header_len :]
        )
        with pytest.raises(ContainerFormatError, match="overlap"):
            read_container(bad)

    def test_norm_invariant_breach_names_tensor(self, small_bundle, tmp_path):
        good = tmp_path / "good.saiw"
        write_container(small_bundle, good, dtype="f64")
        blob = bytearray(good.read_bytes())
        header_len = int.from_bytes(blob[8:16], "little")
        header = json.loads(blob[16 : 16 + header_len])
        spec = header["tensors"]["layer1.head2.k"]
        start = 16 + header_len + spec["byte_offset"]
        values = np.frombuffer(blob[start : start + spec["byte_len"]], dtype="<f8") * 3.0
        blob[start : start + spec["byte_len"]] = values.tobytes()
        bad = tmp_path / "bad.saiw"
        bad.write_bytes(bytes(blob))
        with pytest.raises(ContainerValidationError) as excinfo:
            read_container(bad)
        assert excinfo.value.tensor_names == ["layer1.head2.k"]

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            read_container(tmp_path / "nope.saiw")


class TestPgm:
    def test_identity_map(self, tmp_path):
        path = tmp_path / "eye.pgm"
        render_attention_pgm(np.eye(64), path)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n")
        header, pixels = blob.split(b"255\n", 1)
        assert header == b"P5\n64 64\n"
        img = np.frombuffer(pixels, dtype=np.uint8).reshape(64, 64)
        assert np.all(np.diag(img) == 255)
        assert np.all(img[~np.eye(64, dtype=bool)] == 0)

    def test_uniform_map_saturates(self, tmp_path):
        path = tmp_path / "flat.pgm"
        render_attention_pgm(np.full((8, 8), 0.125), path)
        img = np.frombuffer(path.read_bytes().split(b"255\n", 1)[1], dtype=np.uint8)
        assert np.all(img == 255)

    def test_zoom_writes_second_file(self, tmp_path):
        path = tmp_path / "map.pgm"
        render_attention_pgm(np.eye(64), path, zoom=(0, 0, 16, 16))
        zoom_blob = (tmp_path / "map.pgm.zoom.pgm").read_bytes()
        assert zoom_blob.startswith(b"P5\n16 16\n255\n")
