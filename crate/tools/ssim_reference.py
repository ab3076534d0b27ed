#!/usr/bin/env python3
"""Generate frozen SSIM reference values for the metrics cross-check test.

Images are produced by a splitmix64 generator that the Rust test reproduces
bit-for-bit (integer state, exact float arithmetic only). For each pair we
compute SSIM two ways:

  1. scikit-image's structural_similarity with the original algorithm's
     parameters (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03,
     population statistics, unit data range), which crops to the valid
     convolution region;
  2. a direct valid-mode implementation written here from the published
     formula.

Both must agree to ~1e-9; the frozen constants are the scikit-image values.
Run from the repo root:  python3 tools/ssim_reference.py
"""

import numpy as np
from scipy.ndimage import correlate
from skimage.metrics import structural_similarity

MASK = (1 << 64) - 1


class SplitMix:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_f64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z = z ^ (z >> 31)
        return (z >> 11) * (1.0 / 9007199254740992.0)


def noise_image(width, height, seed):
    rng = SplitMix(seed)
    img = np.empty((height, width, 3), dtype=np.float64)
    for y in range(height):
        for x in range(width):
            for c in range(3):
                img[y, x, c] = rng.next_f64()
    return img


def make_pair(recipe, width, height, seed):
    a = noise_image(width, height, seed)
    if recipe == "invert":
        b = 1.0 - a
    elif recipe == "scale_shift":
        b = np.clip(a * 0.8 + 0.1, 0.0, 1.0)
    elif recipe == "blend":
        n = noise_image(width, height, seed + 1000)
        b = a * 0.7 + n * 0.3
    elif recipe == "offset":
        b = np.clip(a + 0.05, 0.0, 1.0)
    elif recipe == "roll":
        b = np.roll(a, 2, axis=1)
    elif recipe == "independent":
        b = noise_image(width, height, seed + 5000)
    else:
        raise ValueError(recipe)
    return a, b


def gaussian_kernel_1d(window=11, sigma=1.5):
    r = window // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * x * x / (sigma * sigma))
    return k / k.sum()


def ssim_direct(a, b):
    """Valid-mode single-scale SSIM, population statistics, per channel."""
    k1d = gaussian_kernel_1d()
    k2d = np.outer(k1d, k1d)
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    pad = 5
    vals = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = correlate(x, k2d, mode="constant")[pad:-pad, pad:-pad]
        mu_y = correlate(y, k2d, mode="constant")[pad:-pad, pad:-pad]
        mu_xx = correlate(x * x, k2d, mode="constant")[pad:-pad, pad:-pad]
        mu_yy = correlate(y * y, k2d, mode="constant")[pad:-pad, pad:-pad]
        mu_xy = correlate(x * y, k2d, mode="constant")[pad:-pad, pad:-pad]
        var_x = mu_xx - mu_x * mu_x
        var_y = mu_yy - mu_y * mu_y
        cov = mu_xy - mu_x * mu_y
        s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        )
        vals.append(s.mean())
    return float(np.mean(vals))


def ssim_skimage(a, b):
    return float(
        structural_similarity(
            a,
            b,
            channel_axis=2,
            data_range=1.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            K1=0.01,
            K2=0.03,
        )
    )


def main():
    cases = []
    recipes = ["invert", "scale_shift", "blend", "offset", "roll", "independent"]
    sizes = [(32, 24), (48, 36), (64, 64)]
    seed = 1
    while len(cases) < 20:
        for recipe in recipes:
            for (w, h) in sizes:
                if len(cases) >= 20:
                    break
                cases.append((recipe, w, h, seed))
                seed += 17
            if len(cases) >= 20:
                break

    print("// (recipe, width, height, seed, ssim)")
    for recipe, w, h, s in cases:
        a, b = make_pair(recipe, w, h, s)
        ref = ssim_skimage(a, b)
        direct = ssim_direct(a, b)
        if abs(ref - direct) > 1e-8:
            raise AssertionError(
                f"reference implementations disagree: {ref} vs {direct} "
                f"({recipe} {w}x{h} seed {s})"
            )
        print(f'    ("{recipe}", {w}, {h}, {s}, {ref!r}),')


if __name__ == "__main__":
    main()
