import numpy as np
import pytest

from pothole_rgbd.schemas.geometry import CameraIntrinsics, DepthFrame, InstanceMask
from pothole_rgbd.schemas.synth import PotholeSpec, SceneSpec


@pytest.fixture
def rng():
  return np.random.default_rng(12345)


@pytest.fixture
def kinect_intrinsics():
  return CameraIntrinsics(fx=640.0, fy=640.0, cx=320.0, cy=240.0, width=640, height=480)


def circle_scene(radius: float, depression: float = 50.0, profile: str = "flat-bottom", jitter: float = 0.0,
                 noise: float = 0.0, seed: int = 0) -> SceneSpec:
  """Single centred circular pothole on an 800 mm plane seen by a 640x480, f=640 camera."""
  return SceneSpec(
    width=640, height=480, plane_depth_mm=800.0, fx=640.0, fy=640.0,
    potholes=[PotholeSpec(center=(320.0, 240.0), radii=(radius, radius), depression_mm=depression, profile=profile)],
    camera_jitter_mm=jitter, noise_sigma_mm=noise, rng_seed=seed,
  )


@pytest.fixture
def square_mask():
  member = np.zeros((5, 5), dtype=bool)
  member[1:4, 1:4] = True
  return InstanceMask(member=member)


@pytest.fixture
def flat_frame():
  return DepthFrame(depth_mm=np.full((5, 5), 800.0), valid=np.ones((5, 5), dtype=bool))
