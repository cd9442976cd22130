"""Multi-light photometric G-buffer estimation.

Render a procedural object under a ring of point lights, recover normals
and metallic-roughness materials per pixel, and relight the result.
"""

from .brdf import MaterialSample, eval_brdf, shade_point
from .core import (Camera, GBuffer, LightRig, MultiLightSet, decode_normal, encode_normal, light_position,
                   light_rig_default)
from .render import (EnvironmentMap, raycast_gbuffer, relight_env, relight_point, render_multilight,
                     render_pointlight, sky_environment, uniform_environment)
from .scene import MaterialField, Primitive, Scene, generate_scene, sphere_scene
from .solver import PixelEstimate, SolverConfig, lambertian_ps, refine_pixel, solve_gbuffer

__version__ = "0.1.0"
