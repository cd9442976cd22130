"""
Photometric stereo on a sphere
==============================

A matte sphere lit by the nine-light rig, solved back to normals and albedo,
then a glossy checkered sphere where roughness and metallic also have to come
out of the same nine images.
"""

import numpy as np

from multilight import (Camera, MaterialField, MaterialSample, light_rig_default, raycast_gbuffer,
                        render_multilight, solve_gbuffer, sphere_scene)
from multilight.metrics import angular_error_stats

# the default rig: eight lights on a cone around the view direction plus one
# at the camera
rig = light_rig_default()
for k, (theta, phi) in enumerate(rig.poses):
    print(f"light {k}: theta {np.degrees(theta):6.1f} deg  phi {np.degrees(phi):5.1f} deg")

cam = Camera(width=96, height=96)

###############################################################################
# A Lambertian sphere. Roughness 1 and metallic 0 leave nothing but the
# cosine term, so a linear solve already recovers the answer.

matte = sphere_scene(1.0, MaterialField("constant", MaterialSample((0.6, 0.45, 0.3), 1.0, 0.0)))
gt = raycast_gbuffer(matte, cam)
mls = render_multilight(matte, cam, rig, gbuffer=gt)
print("image stack", mls.images.shape, "max value %.3f" % mls.images.max())

pred, report = solve_gbuffer(mls.input, mls, cam, rig)
stats = angular_error_stats(pred.normal, gt.normal, gt.alpha)
print("matte sphere: mean angular error %.4f deg, median %.4f deg" % (stats["mean"], stats["median"]))
print("albedo at the centre", pred.albedo[48, 48].round(4), "truth", gt.albedo[48, 48])
print(report)

###############################################################################
# Half the sphere dielectric, half metal, on a checker. Highlights move with
# the light, which is what pins down roughness.

glossy = sphere_scene(1.0, MaterialField("checker", MaterialSample((0.7, 0.4, 0.3), 0.3, 0.0),
                                         MaterialSample((0.9, 0.8, 0.5), 0.3, 1.0), frequency=0.5))
gt = raycast_gbuffer(glossy, cam)
mls = render_multilight(glossy, cam, rig, gbuffer=gt)
pred, report = solve_gbuffer(mls.input, mls, cam, rig)

fg = gt.alpha
stats = angular_error_stats(pred.normal, gt.normal, fg)
print("glossy sphere: mean angular error %.3f deg" % stats["mean"])
print("roughness RMSE %.4f" % np.sqrt(np.mean((pred.roughness[fg] - gt.roughness[fg]) ** 2)))
print("metallic RMSE %.4f" % np.sqrt(np.mean((pred.metallic[fg] - gt.metallic[fg]) ** 2)))
for tau, acc in stats["accuracy"].items():
    print(f"  within {tau:5.2f} deg: {acc:6.2f} %")
