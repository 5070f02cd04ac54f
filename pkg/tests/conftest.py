import numpy as np
import pytest

from bsdloc.geometry import GeoPoint, SectorSpec, SemanticMap
from bsdloc.mapio import SyntheticCityParams, synthesize_bundle


@pytest.fixture(scope="session")
def small_city():
    """Plain 5x5 grid city: deterministic, fast, fully covered facades."""
    params = SyntheticCityParams(rows=5, cols=5, block_size=100.0, coverage=1.0,
                                 gap_frequency=0.3, seed=7)
    return synthesize_bundle(params)


@pytest.fixture(scope="session")
def jittered_city():
    """Irregular mid-size map without geometric knife edges."""
    params = SyntheticCityParams(rows=6, cols=6, block_size=90.0, coverage=0.9,
                                 gap_frequency=0.5, seed=13, block_jitter=0.3,
                                 node_jitter=0.4, edge_removal=0.08)
    return synthesize_bundle(params)


def random_building_map(rng: np.random.Generator, n_buildings: int = 6,
                        extent: float = 80.0) -> SemanticMap:
    """Scatter random convex-ish quads around the origin."""
    rings = []
    for _ in range(n_buildings):
        cx, cy = rng.uniform(-extent, extent, 2)
        w, h = rng.uniform(6, 30, 2)
        ang = rng.uniform(0, np.pi)
        c, s = np.cos(ang), np.sin(ang)
        base = np.array([[-w, -h], [w, -h], [w, h], [-w, h]]) / 2
        rot = base @ np.array([[c, s], [-s, c]])
        rings.append(rot + (cx, cy))
    return SemanticMap([], rings)
