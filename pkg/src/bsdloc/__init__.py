"""Route localization from 4-bit binary semantic descriptors (BSDs).

Locations sampled along roads are described by four bits (junction ahead,
junction behind, building gap left, building gap right) derived from a 2-D
vector map.  Single descriptors are ambiguous, but concatenated along a route
and combined with the route's turn pattern they become distinctive enough to
localize against a database of all map routes, even with noisy detectors.
"""

from bsdloc.geometry import (
    Bsd,
    DirectedLocation,
    GeoPoint,
    SectorSpec,
    SemanticMap,
    bsd_from_str,
    bsd_str,
    ground_truth_bsd,
    pack_bsd,
    reverse_bsd,
    unpack_bsd,
)

__all__ = [
    "Bsd",
    "DirectedLocation",
    "GeoPoint",
    "SectorSpec",
    "SemanticMap",
    "bsd_from_str",
    "bsd_str",
    "ground_truth_bsd",
    "pack_bsd",
    "reverse_bsd",
    "unpack_bsd",
]

__version__ = "0.1.0"
