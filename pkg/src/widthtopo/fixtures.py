"""Small synthetic fields used by the tests, the CLI ``fixture`` command and the docs."""

import numpy as np

__all__ = [
    "two_blob_field",
    "single_saddle_field",
    "three_component_field",
    "two_blob_segmentation",
    "FIXTURES",
]


def two_blob_field():
    """Two bright blobs joined by a faint three-row bridge.

    The left blob is a 10x10 plateau at 1.0. The right blob is 5x5 at 0.95
    with a unique peak at its center, so its birth pixel sits in the middle
    of a radius-2 window. The bridge dips to 0.35 at its midpoint (the
    saddle) and its outer rows are 0.05 lower than the middle row, so the
    strongest path between the blobs is one pixel wide.

    Returns
    -------
    ndarray of shape (20, 28)
    """
    f = np.zeros((20, 28))
    f[5:15, 3:13] = 1.0
    f[7:12, 18:23] = 0.95
    f[9, 20] = 1.0
    profile = np.array([0.45, 0.4, 0.35, 0.4, 0.45])
    f[9, 13:18] = profile
    f[8, 13:18] = profile - 0.05
    f[10, 13:18] = profile - 0.05
    return f


def single_saddle_field(size=21, sigma=3.5, peaks=(1.0, 0.9)):
    """Two Gaussian bumps on a horizontal line meeting at one saddle pixel.

    The saddle lies at the grid center; the bumps sit ``size // 2 - 3``
    pixels to either side, far enough that the radius-2 windows around the
    peaks and the saddle do not overlap.
    """
    c = size // 2
    rows, cols = np.mgrid[0:size, 0:size].astype(float)
    f = np.zeros((size, size))
    for peak, pc in zip(peaks, (3, size - 4)):
        f += peak * np.exp(-((rows - c) ** 2 + (cols - pc) ** 2) / (2 * sigma**2))
    return np.clip(f, 0.0, 1.0)


def three_component_field():
    """12x13 field with three components and two holes, in 8-bit levels scaled to [0, 1].

    Sweeping the threshold down: three components appear at 243, two of them
    merge at 241 and the last merge happens at 65. Two loops close at 198 and
    26 and both fill at 1. The diagram is therefore ``{(243, 241), (243, 65)}``
    plus one essential pair in dimension 0 and ``{(198, 1), (26, 1)}`` in
    dimension 1, all divided by 255.
    """
    g = np.zeros((12, 13))
    g[1:6, 1:6] = 243
    g[2:5, 2:5] = 1
    g[1, 3] = 198
    g[8:11, 1:4] = 243
    g[8:11, 5:8] = 243
    g[8, 4] = 241
    g[6:8, 1] = 65
    g[6:8, 5] = 26
    g[6:8, 2:5] = 1
    return g / 255.0


def two_blob_segmentation(seed=0, noise=0.1, shape=(32, 40), bridge_level=0.5):
    """Noisy two-class image: two blobs and a thin, faint bridge that belongs to the foreground.

    Returns
    -------
    image : ndarray
        Foreground 0.8, bridge ``bridge_level``, background 0.2, plus
        Gaussian noise, clipped to [0, 1].
    truth : ndarray of bool
        Blobs and bridge; a single 4-connected component.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    truth = np.zeros(shape, dtype=bool)
    r0 = h // 2 - 5
    truth[r0 : r0 + 10, 4:16] = True
    truth[r0 : r0 + 10, w - 16 : w - 4] = True
    clean = np.where(truth, 0.8, 0.2)
    bridge = np.zeros(shape, dtype=bool)
    bridge[h // 2 - 1 : h // 2 + 1, 16 : w - 16] = True
    clean[bridge] = bridge_level
    truth |= bridge
    image = np.clip(clean + noise * rng.standard_normal(shape), 0.0, 1.0)
    return image, truth


FIXTURES = {
    "two-blob": two_blob_field,
    "single-saddle": single_saddle_field,
    "three-component": three_component_field,
}
