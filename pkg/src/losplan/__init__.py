"""Line-of-sight planning of school-to-tower microwave links over SRTM terrain."""

from .analysis import (
    Classification,
    ClearanceTrace,
    LinkAssessment,
    Obstacle,
    TerrainProfile,
    assess_link,
    build_profile,
    clearance_trace,
    earth_bulge,
    evaluate_pair,
    find_obstacles,
    free_space_path_loss,
    fresnel_radius,
    knife_edge_loss,
)
from .dem import (
    CorruptTile,
    DemTile,
    MissingTile,
    TileStore,
    VoidData,
    VoidPolicy,
    read_hgt,
    tile_key_for,
    write_hgt,
)
from .geodesy import (
    CoincidentPoints,
    GeoPoint,
    PathGeometry,
    ZeroDistance,
    elevation_angle,
    great_circle_distance,
    initial_bearing,
    intermediate_point,
)
from .planner import PlanConfig, PlanResult, enumerate_candidates, plan, run_batch, select_tower
from .sites import Site, SiteKind

__version__ = "0.1.0"
