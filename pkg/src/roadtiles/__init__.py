"""Road-infrastructure tiles from connected-vehicle trajectories.

Waypoint logs are grouped into journeys, cut into geohash tiles, rendered as
rasters and classified as ``intersection`` or ``straight``.
"""

__version__ = "0.1.0"

INTERSECTION = "intersection"
STRAIGHT = "straight"
CLASSES = (INTERSECTION, STRAIGHT)
