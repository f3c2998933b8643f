import numpy as np
import pytest

from irredet.detect import DetectorParams, DetectorSpec
from irredet.synthetic import multi_blob_image, square_image


@pytest.fixture(scope="session")
def blobs():
    return multi_blob_image(128, seed=1)


@pytest.fixture(scope="session")
def square():
    return square_image()


@pytest.fixture(scope="session")
def log_detector():
    return DetectorSpec("log", DetectorParams(smoothing_sigma=2.0, response_threshold=2.0, nms_radius=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def blob_run(blobs, log_detector):
    """Detections on the blob scene and on one similarity warp of it."""
    from irredet.correspond import detection_error
    from irredet.image import Transform, warp

    t = Transform.similarity(1.04, 0.12, 3.0, -2.0, center=(64, 64))
    src = log_detector(blobs)
    dst = log_detector(warp(blobs, t))
    return src, dst, t, detection_error(src, dst, t)
