"""Walk one school-to-tower link from coordinates to a verdict.

Builds a one-tile DEM with a single hill, then prints the geometry, the
clearance numbers and the classification, and writes the profile SVG.

    python3 demos/link_walkthrough.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

from losplan import analysis, report
from losplan.dem import TileStore
from losplan.geodesy import elevation_angle, path_geometry
from losplan.sites import Site
from losplan.synthetic import Hill, hills_grid, write_tile

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="losplan-demo-"))
dem = out / "dem"
# a 40 m hill sitting roughly halfway along the path
write_tile(str(dem), "S15E033", hills_grid("S15E033", [Hill(-14.43, 33.52, 40.0, 0.015)], base=600))
store = TileStore(str(dem))

school = Site.school("Chisomo", -14.52, 33.48, "primary")
tower = Site.tower("Dedza-2", -14.33, 33.57, 45.0)

geom = path_geometry(school.location, tower.location)
print(f"distance        {geom.total_distance / 1000:.3f} km")
print(f"azimuth         {geom.azimuth_fwd:.1f} deg (reverse {geom.azimuth_rev:.1f})")

profile = analysis.build_profile(school, tower, store, spacing=30.0)
h_school = profile.elevations[0] + school.antenna_height
h_tower = profile.elevations[-1] + tower.antenna_height
print(f"samples         {profile.n_samples} at {profile.length / (profile.n_samples - 1):.1f} m")
print(f"elevation angle {elevation_angle(profile.length, h_school, h_tower):.2f} deg")

link = analysis.assess_link(profile)
print(f"verdict         {link.classification.value}")
print(f"min margin      {link.min_clearance_margin:.2f} m")
for ob in link.obstacles:
    print(f"  obstacle at {profile.distances[ob.peak_index] / 1000:.2f} km, {ob.intrusion:.1f} m above the ray")
if link.knife_edge_loss_db is not None:
    print(f"knife-edge loss {link.knife_edge_loss_db:.1f} dB on top of {link.fspl_db:.1f} dB free-space loss")

# raise the school mast until the link clears
for mast in (10, 30, 50, 70, 90):
    taller = Site.school(school.id, school.location.lat, school.location.lon, height=mast)
    p = analysis.build_profile(taller, tower, store)
    print(f"school mast {mast:3d} m -> {analysis.assess_link(p).classification.value}")

trace = analysis.clearance_trace(profile, 5e9, 0.6)
svg = out / "profile.svg"
report.render_profile_svg(profile, trace, link, str(svg))
print(f"profile written to {svg}")
