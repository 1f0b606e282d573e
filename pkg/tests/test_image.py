import numpy as np
import pytest

from artgenre.image import Image, encode_png, load_image, resize_bilinear, save_png, to_grayscale


def test_image_shape_and_props():
    img = Image(np.zeros((3, 4, 5)))
    assert (img.channels, img.height, img.width) == (3, 4, 5)
    two_d = Image(np.zeros((4, 5)))
    assert two_d.channels == 1


def test_image_rejects_bad_input():
    with pytest.raises(ValueError):
        Image(np.zeros((2, 4, 4)))  # 2 channels unsupported
    with pytest.raises(ValueError):
        Image(np.full((1, 3, 3), np.nan))
    with pytest.raises(ValueError):
        Image(np.zeros((1, 0, 3)))


def test_grayscale_identity_on_single_channel():
    img = Image(np.random.default_rng(0).random((1, 6, 6)))
    assert to_grayscale(img) is img


def test_grayscale_constant_gray():
    img = Image(np.full((3, 4, 4), 0.5))
    out = to_grayscale(img)
    assert out.channels == 1
    np.testing.assert_allclose(out.data, 0.5)


def test_grayscale_pure_red():
    data = np.zeros((3, 5, 5))
    data[0] = 1.0
    out = to_grayscale(Image(data))
    np.testing.assert_allclose(out.data, 0.299)


def _resize_reference(src, width, height):
    # independent per-pixel bilinear with half-pixel centers
    c, sh, sw = src.shape
    out = np.zeros((c, height, width))
    for y in range(height):
        sy = min(max((y + 0.5) * sh / height - 0.5, 0.0), sh - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, sh - 1)
        fy = sy - y0
        for x in range(width):
            sx = min(max((x + 0.5) * sw / width - 0.5, 0.0), sw - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, sw - 1)
            fx = sx - x0
            for ch in range(c):
                top = src[ch, y0, x0] * (1 - fx) + src[ch, y0, x1] * fx
                bot = src[ch, y1, x0] * (1 - fx) + src[ch, y1, x1] * fx
                out[ch, y, x] = top * (1 - fy) + bot * fy
    return out


def test_resize_identity_same_dims():
    img = Image(np.random.default_rng(1).random((3, 7, 9)))
    out = resize_bilinear(img, 9, 7)
    np.testing.assert_array_equal(out.data, img.data)


def test_resize_constant_stays_constant():
    img = Image(np.full((1, 5, 5), 0.42))
    out = resize_bilinear(img, 13, 3)
    np.testing.assert_allclose(out.data, 0.42)


def test_resize_checkerboard_matches_reference():
    board = Image(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    out = resize_bilinear(board, 4, 4)
    expected = _resize_reference(board.data, 4, 4)
    np.testing.assert_allclose(out.data, expected, atol=1e-12)
    # spot-check one hand-computed value: output (1,1) samples source (0.25, 0.25)
    hand = 1.0 * 0.75 * 0.75 + 0.0 * 0.25 * 0.75 + 0.0 * 0.75 * 0.25 + 1.0 * 0.25 * 0.25
    assert out.data[0, 1, 1] == pytest.approx(hand)


def test_resize_random_matches_reference():
    rng = np.random.default_rng(2)
    img = Image(rng.random((3, 6, 11)))
    out = resize_bilinear(img, 17, 4)
    np.testing.assert_allclose(out.data, _resize_reference(img.data, 17, 4), atol=1e-12)


def test_resize_rejects_zero_dims():
    img = Image(np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        resize_bilinear(img, 0, 4)


def test_png_roundtrip_quantization(tmp_path):
    rng = np.random.default_rng(3)
    img = Image(rng.random((3, 9, 8)))
    path = tmp_path / "img.png"
    save_png(img, path)
    back = load_image(path)
    expected = np.floor(np.clip(img.data, 0, 1) * 255 + 0.5) / 255.0
    np.testing.assert_allclose(back.data, expected, atol=1e-12)


def test_png_grayscale_roundtrip(tmp_path):
    img = Image(np.linspace(0, 1, 16).reshape(1, 4, 4))
    path = tmp_path / "gray.png"
    save_png(img, path)
    back = load_image(path)
    assert back.channels == 1


def test_png_encoding_deterministic():
    img = Image(np.random.default_rng(4).random((3, 12, 12)))
    assert encode_png(img) == encode_png(img)


def test_jpeg_reading(tmp_path):
    from PIL import Image as PILImage

    arr = (np.random.default_rng(5).random((10, 12, 3)) * 255).astype(np.uint8)
    path = tmp_path / "img.jpg"
    PILImage.fromarray(arr).save(path, quality=95)
    img = load_image(path)
    assert (img.channels, img.height, img.width) == (3, 10, 12)
    assert img.data.min() >= 0 and img.data.max() <= 1


def test_png_clamps_out_of_range(tmp_path):
    img = Image(np.array([[[-0.5, 1.5]]]))
    path = tmp_path / "clamp.png"
    save_png(img, path)
    back = load_image(path)
    np.testing.assert_allclose(back.data, [[[0.0, 1.0]]])
