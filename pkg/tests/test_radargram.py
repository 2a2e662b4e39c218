import numpy as np
import pytest

from gprdeclutter.radargram import (
    ContainerFormatError,
    Radargram,
    crop_window,
    normalize_unit,
    read_container,
    resize_bilinear,
    write_container,
)


def test_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        Radargram(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        Radargram(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        Radargram(np.array([[np.inf, 0.0]]))


def test_data_is_read_only():
    r = Radargram(np.ones((2, 2)))
    with pytest.raises(ValueError):
        r.data[0, 0] = 5.0


def test_normalize_endpoints():
    r = normalize_unit(Radargram(np.array([[-1.0, 1.0]])))
    assert np.array_equal(r.data, np.array([[0.0, 1.0]]))


def test_normalize_constant_maps_to_zero():
    r = normalize_unit(Radargram(np.full((2, 2), 5.0)))
    assert np.array_equal(r.data, np.zeros((2, 2)))


def test_normalize_affine_map():
    r = normalize_unit(Radargram(np.array([[0.0, 2.0], [1.0, 4.0]])))
    assert np.array_equal(r.data, np.array([[0.0, 0.5], [0.25, 1.0]]))


def test_normalize_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        r = Radargram(rng.normal(size=(13, 7)))
        once = normalize_unit(r)
        twice = normalize_unit(once)
        assert np.array_equal(once.data, twice.data)


def test_resize_identity():
    rng = np.random.default_rng(0)
    r = Radargram(rng.normal(size=(8, 5)))
    out = resize_bilinear(r, 8, 5)
    assert np.array_equal(out.data, r.data)


def test_resize_constant_stays_constant():
    r = Radargram(np.full((4, 6), 3.25))
    out = resize_bilinear(r, 9, 2)
    assert np.allclose(out.data, 3.25, atol=1e-12)


def test_resize_corner_aligned_hand_values():
    # Corner-aligned 2x2 -> 3x3: corners are preserved and the centre is the
    # average of all four pixels.
    r = Radargram(np.array([[0.0, 1.0], [2.0, 3.0]]))
    out = resize_bilinear(r, 3, 3).data
    assert out[0, 0] == 0.0 and out[0, 2] == 1.0
    assert out[2, 0] == 2.0 and out[2, 2] == 3.0
    assert out[1, 1] == pytest.approx(1.5, abs=1e-15)
    assert out[0, 1] == pytest.approx(0.5, abs=1e-15)
    assert out[1, 0] == pytest.approx(1.0, abs=1e-15)


def test_resize_bounds_preserved():
    rng = np.random.default_rng(7)
    for _ in range(10):
        r = Radargram(rng.normal(size=(11, 9)))
        out = resize_bilinear(r, 23, 4)
        assert out.data.min() >= r.data.min() - 1e-12
        assert out.data.max() <= r.data.max() + 1e-12


def test_resize_rejects_zero_target():
    r = Radargram(np.ones((2, 2)))
    with pytest.raises(ValueError):
        resize_bilinear(r, 0, 2)


def test_crop_window_paper_ranges():
    rng = np.random.default_rng(1)
    r = Radargram(rng.normal(size=(256, 80)))
    first = crop_window(r, 1, 64)
    assert first.data.shape == (256, 64)
    assert np.array_equal(first.data, r.data[:, 0:64])
    shifted = crop_window(r, 13, 64)
    assert np.array_equal(shifted.data, r.data[:, 12:76])


def test_crop_window_identity_and_errors():
    rng = np.random.default_rng(2)
    r = Radargram(rng.normal(size=(6, 10)))
    assert np.array_equal(crop_window(r, 1, 10).data, r.data)
    with pytest.raises(ValueError):
        crop_window(r, 0, 5)
    with pytest.raises(ValueError):
        crop_window(r, 8, 4)


def _float32_grid(rng, shape):
    return rng.normal(size=shape).astype(np.float32).astype(np.float64)


def test_container_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    r = Radargram(
        _float32_grid(rng, (17, 5)),
        trace_spacing=0.02,
        time_window=4e-9,
        label="scene 3 targets",
    )
    path = tmp_path / "scan.gprb"
    write_container(path, r)
    back = read_container(path)
    assert np.array_equal(back.data, r.data)
    assert back.trace_spacing == r.trace_spacing
    assert back.time_window == r.time_window
    assert back.label == r.label


def test_container_roundtrip_none_time_window(tmp_path):
    r = Radargram(np.zeros((2, 3)), time_window=None, label="")
    path = tmp_path / "scan.gprb"
    write_container(path, r)
    back = read_container(path)
    assert back.time_window is None
    assert back.label == ""


def test_container_double_roundtrip_identical_bytes(tmp_path):
    rng = np.random.default_rng(10)
    r = Radargram(rng.normal(size=(8, 8)))
    p1, p2 = tmp_path / "a.gprb", tmp_path / "b.gprb"
    write_container(p1, r)
    write_container(p2, read_container(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_container_bad_magic(tmp_path):
    path = tmp_path / "bad.gprb"
    path.write_bytes(b"GPRX1 1 1 0.01 nan x\n" + b"\x00\x00\x00\x00")
    with pytest.raises(ContainerFormatError):
        read_container(path)


def test_container_truncated_payload(tmp_path):
    r = Radargram(np.zeros((256, 64)))
    path = tmp_path / "scan.gprb"
    write_container(path, r)
    data = path.read_bytes()
    path.write_bytes(data[:-4])  # drop one value
    with pytest.raises(ContainerFormatError) as err:
        read_container(path)
    assert err.value.offset > 0


def test_container_nonfinite_payload(tmp_path):
    path = tmp_path / "scan.gprb"
    header = b"GPRB1 1 2 0.01 nan \n"
    payload = np.array([1.0, np.inf], dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    with pytest.raises(ContainerFormatError):
        read_container(path)
