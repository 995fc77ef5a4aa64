"""Point-cloud domain translation through independently trained diffusion models.

Independent diffusion models are trained per domain; translation encodes
source points to the shared Gaussian latent with the source model's
deterministic DDIM solver and decodes them with the target model's.
"""

from .bridge import TranslationReport, cycle_check, translate
from .datasets import PointCloud, Standardizer, generate, standardize
from .odesolve import SolveSpec, ddim_step, decode, encode, ode_solve
from .schedule import NoiseSchedule, make_linear_schedule, perturb, sigma_of
from .scorenet import (
    GaussianNoiseOracle,
    ScoreNetwork,
    TrainConfig,
    analytic_gaussian_noise,
    denoising_loss_and_grad,
    init_network,
    load_model,
    predict_noise,
    save_model,
    train,
)
from .ot import TransportPlan, barycentric_map, color_convert, emd, linear_map_estimate, pixel_mse, sinkhorn

__version__ = "0.1.0"
