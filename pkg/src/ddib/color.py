"""Example-guided colour transfer between two RGB images.

Every method recolours the *subject* image towards the palette of the
*reference* image; pixel positions never move, only colours change.

``ddib``      one diffusion model per image on its [-1, 1] RGB cloud; subject
              colours are encoded with the subject model and decoded with the
              reference model
``emd``       exact OT between 1000-pixel samples, barycentric anchors
``sinkhorn``  same with an entropic plan
``linear``    affine colour map fitted to a Sinkhorn barycentric projection

The bundled test pair (``test_pair()``) is a synthetic 64x64 landscape in
warm evening colours (subject) and a cold winter palette (reference).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .bridge import translate
from .datasets import PointCloud, cloud_to_pixels, pixels_to_cloud, read_ppm
from .errors import ParameterError, ShapeError
from .experiment import ExperimentConfig, cache_key, derive_seed, fit_or_load
from .ot import color_convert, linear_map_estimate, pixel_mse, subsample

METHODS = ("ddib", "emd", "sinkhorn", "linear")
OT_METHODS = ("emd", "sinkhorn", "linear")
SIZE = 64


def _smooth_noise(rng, size, cells):
    """Bilinearly upsampled random field on a coarse grid, values in [0, 1]."""
    coarse = rng.uniform(size=(cells + 1, cells + 1))
    u = np.linspace(0, cells, size)
    i = np.minimum(u.astype(int), cells - 1)
    f = u - i
    rows = coarse[i] * (1 - f)[:, None] + coarse[i + 1] * f[:, None]
    return rows[:, i] * (1 - f)[None, :] + rows[:, i + 1] * f[None, :]


def _scene(rng, sky_top, sky_horizon, sun, ground_near, ground_far, size=SIZE):
    y, x = np.mgrid[0:size, 0:size] / (size - 1.0)
    horizon = 0.55 + 0.08 * np.sin(2 * np.pi * x * 1.3 + 0.4) + 0.04 * _smooth_noise(rng, size, 4)
    sky_mix = np.clip(y / horizon, 0, 1)[..., None]
    img = np.asarray(sky_top) * (1 - sky_mix) + np.asarray(sky_horizon) * sky_mix
    sun_d = np.hypot(x - 0.7, y - 0.3)
    glow = np.clip(1.0 - sun_d / 0.14, 0, 1)[..., None] ** 0.7
    img = img * (1 - glow) + np.asarray(sun) * glow
    depth = np.clip((y - horizon) / (1 - horizon + 1e-9), 0, 1)[..., None]
    ground = np.asarray(ground_far) * (1 - depth) + np.asarray(ground_near) * depth
    ground = ground * (0.85 + 0.3 * _smooth_noise(rng, size, 8))[..., None]
    img = np.where((y > horizon)[..., None], ground, img)
    img = img + 6.0 * rng.standard_normal(img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def make_test_pair(seed=20):
    """Regenerate the bundled (reference, subject) pair from its closed form."""
    rng = np.random.default_rng(seed)
    subject = _scene(rng, sky_top=(70, 60, 140), sky_horizon=(245, 150, 70), sun=(255, 235, 160),
                     ground_near=(60, 110, 40), ground_far=(120, 140, 60))
    reference = _scene(rng, sky_top=(110, 150, 200), sky_horizon=(215, 230, 245),
                       sun=(250, 250, 255), ground_near=(230, 235, 245), ground_far=(160, 175, 200))
    return reference, subject


def test_pair():
    """The bundled 64x64 (reference, subject) PPM pair as uint8 arrays."""
    root = resources.files("ddib") / "data"
    with resources.as_file(root / "winter_reference.ppm") as ref, \
            resources.as_file(root / "evening_subject.ppm") as sub:
        return read_ppm(ref), read_ppm(sub)


# the name reads like a test to pytest's collector when imported into test modules
test_pair.__test__ = False


def _check(reference, subject):
    for name, img in (("reference", reference), ("subject", subject)):
        if img.ndim != 3 or img.shape[2] != 3:
            raise ShapeError(f"{name} must be an (H, W, 3) RGB raster, got {img.shape}")


def ot_transfer(reference, subject, method: str, sample_size=1000, seed=0, epsilon=1e-2):
    """Recolour ``subject`` with one of the OT baselines; returns a uint8 raster."""
    reference, subject = np.asarray(reference), np.asarray(subject)
    _check(reference, subject)
    ref, sub = pixels_to_cloud(reference), pixels_to_cloud(subject)
    if method in ("emd", "sinkhorn"):
        cmap = color_convert(ref, sub, sample_size=sample_size, epsilon=epsilon, seed=seed,
                             method=method)
        out = cmap(sub)
    elif method == "linear":
        xs = subsample(sub, sample_size, seed)
        xt = subsample(ref, sample_size, seed)
        out = linear_map_estimate(xs, xt, epsilon=epsilon, tol=1e-6, max_iters=10000)(sub)
    else:
        raise ParameterError(f"unknown OT colour transfer method {method!r}")
    h, w = subject.shape[:2]
    return cloud_to_pixels(out, w, h)


@dataclass
class ColorModels:
    reference: object
    subject: object


def ddib_models(reference, subject, cfg: ExperimentConfig, allow_train=True, log=None) -> ColorModels:
    """Per-image diffusion models on the raw [-1, 1] RGB clouds (cached)."""
    models = []
    for role, img in (("reference", reference), ("subject", subject)):
        cloud = pixels_to_cloud(img)
        seed = derive_seed(cfg.train_seed, "image-" + cache_key(cloud.points, {}))
        models.append(fit_or_load(f"image-{role}", cloud, cfg, seed, standardize_data=False,
                                  allow_train=allow_train, log=log).net)
    return ColorModels(*models)


def ddib_transfer(reference, subject, cfg: ExperimentConfig | None = None, allow_train=True,
                  log=None):
    cfg = cfg or ExperimentConfig()
    reference, subject = np.asarray(reference), np.asarray(subject)
    _check(reference, subject)
    m = ddib_models(reference, subject, cfg, allow_train=allow_train, log=log)
    out = translate(m.subject, m.reference, cfg.schedule(), pixels_to_cloud(subject), cfg.n_steps)
    h, w = subject.shape[:2]
    return cloud_to_pixels(out, w, h)


def color_transfer(reference, subject, method: str, cfg: ExperimentConfig | None = None,
                   allow_train=True, log=None, seed=0):
    if method not in METHODS:
        raise ParameterError(f"method must be one of {', '.join(METHODS)}; got {method!r}")
    if method == "ddib":
        return ddib_transfer(reference, subject, cfg, allow_train=allow_train, log=log)
    return ot_transfer(reference, subject, method, seed=seed)


def mse_table(outputs: dict) -> dict:
    """Pairwise pixel MSE between the DDIB output and each OT output present."""
    if "ddib" not in outputs:
        return {}
    return {m: pixel_mse(outputs["ddib"], outputs[m]) for m in OT_METHODS if m in outputs}
