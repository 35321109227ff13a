import numpy as np
import pytest
import torch

from sckd.config import GridConfig, RunConfig
from sckd.head import AnchorConfig, ClassAnchor
from sckd.frames import ClassId
from sckd.networks import EncoderParams, Ms2dParams
from sckd.scene import SceneSpec


def mini_config(**train_overrides) -> RunConfig:
    """Small everything: 32x32x2 voxel grid, 8-channel encoder, 16x16 head."""
    cfg = RunConfig()
    cfg.scene = SceneSpec(
        n_cars=1,
        n_pedestrians=1,
        n_cyclists=0,
        x_range=(0.0, 9.6),
        y_range=(-4.8, 4.8),
        lidar_points_per_object=120,
        lidar_background_density=4.0,
        radar_density_ratio=0.1,
        radar_noise_sigma=0.1,
        ghost_rate=0.05,
    )
    cfg.grid = GridConfig(
        range_min=(0.0, -4.8, -1.0),
        range_max=(9.6, 4.8, 1.0),
        voxel_size=(0.3, 0.3, 1.0),
    )
    cfg.encoder = EncoderParams(
        channels=(8, 8), kernels=(3, 3), strides=((1, 1, 1), (2, 2, 2)),
        bev_channels=8,
    )
    cfg.ms2d = Ms2dParams(hidden=8, out_channels=8)
    cfg.eval.corridor = (0.0, 6.0, -2.0, 2.0)
    cfg.train.teacher_epochs = 1
    cfg.train.student_epochs = 1
    cfg.train.batch_size = 2
    for key, value in train_overrides.items():
        setattr(cfg.train, key, value)
    return cfg.validate()


def tiny_anchor_config() -> AnchorConfig:
    return AnchorConfig(
        per_class={
            ClassId.CAR: ClassAnchor((4.0, 1.8, 1.5), 0.75, 0.45, 0.30),
            ClassId.PEDESTRIAN: ClassAnchor((0.6, 0.6, 1.7), 0.85, 0.35, 0.20),
            ClassId.CYCLIST: ClassAnchor((1.8, 0.6, 1.5), 0.75, 0.35, 0.20),
        }
    )


@pytest.fixture
def mini_cfg() -> RunConfig:
    return mini_config()


def finite_difference_check(
    loss_fn,
    tensors: dict[str, torch.Tensor],
    n_coords: int = 20,
    rtol: float = 1e-4,
    atol: float = 1e-9,
    seed: int = 0,
    coord_subsets: dict[str, np.ndarray] | None = None,
):
    """Compare autograd gradients of loss_fn() against central finite
    differences on randomly sampled coordinates of each tensor.

    Tensors must be float64 leaves with requires_grad; loss_fn must
    rebuild the graph on every call (it is re-invoked after in-place
    perturbations of the tensor data).  The step size shrinks when a ReLU
    kink happens to sit inside the difference window (a wrong analytic
    gradient disagrees at every step size, so this does not mask bugs).
    ``coord_subsets`` restricts sampling to given flat indices per tensor.
    """
    for name, t in tensors.items():
        assert t.dtype == torch.float64, f"{name} must be float64"
        assert t.requires_grad, f"{name} must require grad"
    loss = loss_fn()
    grads = torch.autograd.grad(loss, list(tensors.values()))
    rng = np.random.default_rng(seed)
    for (name, tensor), grad in zip(tensors.items(), grads):
        flat = tensor.data.reshape(-1)
        gflat = grad.reshape(-1)
        pool = (
            coord_subsets[name]
            if coord_subsets and name in coord_subsets
            else np.arange(flat.numel())
        )
        count = min(n_coords, len(pool))
        coords = rng.choice(pool, size=count, replace=False)
        for i in coords:
            i = int(i)
            orig = flat[i].item()
            an = gflat[i].item()
            best_err, best_fd = None, None
            for scale in (1e-6, 1e-7, 1e-8):
                h = scale * max(1.0, abs(orig))
                with torch.no_grad():
                    flat[i] = orig + h
                    up = loss_fn().item()
                    flat[i] = orig - h
                    down = loss_fn().item()
                    flat[i] = orig
                fd = (up - down) / (2.0 * h)
                err = abs(an - fd)
                if best_err is None or err < best_err:
                    best_err, best_fd = err, fd
                if err <= rtol * max(abs(an), abs(fd)) + atol:
                    break
            else:
                raise AssertionError(
                    f"{name}[{i}]: analytic {an} vs finite-diff {best_fd} "
                    f"(err {best_err})"
                )
