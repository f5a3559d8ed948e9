"""Harris corner detector on the polar grid."""
from typing import List

import numpy as np
from scipy import ndimage

from models.entities import Keypoint, PixelCoord

HARRIS_K = 0.05
INTEGRATION_SIGMA = 1.0
RELATIVE_THRESHOLD = 0.01


def harris_response(image: np.ndarray, sigma: float = INTEGRATION_SIGMA, k: float = HARRIS_K) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    gu = ndimage.sobel(image, axis=0, mode="nearest")
    gv = ndimage.sobel(image, axis=1, mode="nearest")
    suu = ndimage.gaussian_filter(gu * gu, sigma, mode="nearest")
    svv = ndimage.gaussian_filter(gv * gv, sigma, mode="nearest")
    suv = ndimage.gaussian_filter(gu * gv, sigma, mode="nearest")
    trace = suu + svv
    return suu * svv - suv * suv - k * trace * trace


def detect_keypoints(image: np.ndarray, max_count: int = 64, nms_radius: int = 3) -> List[Keypoint]:
    """Top `max_count` local maxima of the corner response.

    Ordered by score descending, then u, then v. Responses below 1% of the
    strongest one, or not positive, are discarded.
    """
    if max_count <= 0:
        return []
    response = harris_response(image)
    peak = float(response.max(initial=0.0))
    if peak <= 0.0:
        return []
    local_max = ndimage.maximum_filter(response, size=2 * nms_radius + 1, mode="constant", cval=-np.inf)
    mask = (response == local_max) & (response > 0.0) & (response >= RELATIVE_THRESHOLD * peak)
    us, vs = np.nonzero(mask)
    scores = response[us, vs]
    order = np.lexsort((vs, us, -scores))[:max_count]
    return [Keypoint(PixelCoord(float(us[i]), float(vs[i])), float(scores[i])) for i in order]
