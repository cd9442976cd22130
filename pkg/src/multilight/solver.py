"""Per-pixel G-buffer estimation from multi-light observations.

A Lambertian photometric-stereo pass initializes every foreground pixel,
then a damped Gauss-Newton (Levenberg-Marquardt) fit of the full
metallic-roughness BRDF refines normal, albedo, roughness and metallic.
Pixels are solved independently in fixed-size batches, so results do not
depend on the number of worker threads.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from ._parallel import PIXEL_CHUNK, chunk_slices, ordered_map
from .brdf import DENOM_FLOOR, F0_DIELECTRIC, ggx_ndf, lobe_alpha, smith_g
from .core import (Camera, GBuffer, LightRig, MultiLightSet, check_image, light_positions,
                   make_front_facing, normalize)

N_PARAMS = 7
_LOGIT_CLIP = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    initial_damping: float = 1e-3
    damping_down: float = 0.5
    damping_up: float = 4.0
    rel_tol: float = 1e-8
    step_tol: float = 1e-10
    max_damping: float = 1e8
    robust_loss: str = "none"
    huber_delta: float = 0.1
    roughness_prior_weight: float = 1e-3
    roughness_prior_mean: float = 0.5
    fd_step: float = 1e-4
    shadow_threshold: float = 1e-4
    max_condition: float = 1e6
    roughness_init: float = 0.5
    metallic_init: float = 0.1
    init_search: bool = True

    def __post_init__(self):
        if self.robust_loss not in ("none", "huber"):
            raise ValueError(f"robust_loss must be 'none' or 'huber', got {self.robust_loss!r}")
        for name in ("initial_damping", "rel_tol", "step_tol", "max_damping", "huber_delta",
                     "fd_step", "max_condition"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0.0 < self.damping_down < 1.0 < self.damping_up:
            raise ValueError("need 0 < damping_down < 1 < damping_up")

    @classmethod
    def from_mapping(cls, values: dict) -> "SolverConfig":
        """Build from string or typed values; unknown keys raise ``KeyError``."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise KeyError(f"unknown solver option {key!r}")
            kind = types[key]
            if kind in ("bool", bool):
                kwargs[key] = raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif kind in ("int", int):
                kwargs[key] = int(raw)
            elif kind in ("float", float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)


@dataclass
class PixelEstimate:
    normal: np.ndarray
    albedo: np.ndarray
    roughness: float
    metallic: float
    residual_rms: float = 0.0
    iterations: int = 0
    converged: bool = False
    escalations: int = 0
    cost_history: Optional[list] = None


@dataclass
class SolverReport:
    pixels: int
    foreground: int
    invalid: int
    refined: int
    converged: int
    mean_iterations: float
    mean_residual_rms: float
    max_residual_rms: float
    wall_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d


# -- parameterization -------------------------------------------------------

def _cross(a, b):
    return np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                     a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                     a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=-1)


def _tangent_frame(n):
    helper = np.where(np.abs(n[:, 0:1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = normalize(_cross(n, helper))
    t2 = _cross(n, t1)
    return t1, t2


def _logit(x):
    x = np.clip(x, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)
    return np.log(x) - np.log1p(-x)


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def apply_step(state, delta, frame=None):
    """Move a state by a 7-vector: two tangent-plane normal increments,
    albedo RGB, and roughness/metallic in logit space."""
    n, alb, rough, metal = state
    t1, t2 = _tangent_frame(n) if frame is None else frame
    n_new = normalize(n + delta[:, 0:1] * t1 + delta[:, 1:2] * t2)
    return (n_new, alb + delta[:, 2:5],
            _sigmoid(_logit(rough) + delta[:, 5]), _sigmoid(_logit(metal) + delta[:, 6]))


class _Problem:
    """Observations and light geometry for a batch of pixels (camera space)."""

    def __init__(self, obs, l, r2, v, intensity, cfg: SolverConfig):
        self.obs = obs
        self.l = l
        self.r2 = r2
        self.v = v
        self.intensity = np.asarray(intensity, dtype=np.float64)
        self.cfg = cfg
        lum = obs.mean(axis=-1)
        self.wobs = (lum > cfg.shadow_threshold).astype(np.float64)
        # the prior is one residual next to 3L observation residuals, so it is
        # measured in units of the pixel's RMS signal (capped for highlights)
        used = np.maximum(3.0 * self.wobs.sum(axis=1), 1.0)
        self.scale = np.minimum(np.sqrt(np.sum(obs * obs * self.wobs[..., None], axis=(1, 2)) / used), 1.0)
        # half vectors and the Fresnel weight do not depend on the unknowns
        hv = v[:, None, :] + l
        hlen = np.linalg.norm(hv, axis=-1)
        self.spec_ok = hlen > 0.0
        self.h = hv / np.where(self.spec_ok, hlen, 1.0)[..., None]
        self.fw = (1.0 - np.clip(np.sum(v[:, None, :] * self.h, axis=-1), 0.0, 1.0)) ** 5

    _FIELDS = ("obs", "l", "r2", "v", "wobs", "scale", "spec_ok", "h", "fw")

    def take(self, idx) -> "_Problem":
        p = object.__new__(_Problem)
        for name in self._FIELDS:
            setattr(p, name, getattr(self, name)[idx])
        p.intensity, p.cfg = self.intensity, self.cfg
        return p

    def basis(self, n, rough, metal):
        """Scalar terms (k0, k1), each (N, L), with radiance = E * (k0 + albedo * k1).

        Same model as ``shade_dirs`` with the albedo dependence pulled out.
        """
        n_dot_l = np.einsum("nlk,nk->nl", self.l, n)
        n_dot_v = np.clip(np.einsum("nk,nk->n", self.v, n), 0.0, 1.0)[:, None]
        n_dot_h = np.clip(np.einsum("nlk,nk->nl", self.h, n), 0.0, 1.0)
        nl = np.clip(n_dot_l, 0.0, 1.0)
        alpha = lobe_alpha(rough)[:, None]
        dgv = ggx_ndf(n_dot_h, alpha) * smith_g(n_dot_v, nl, alpha) / np.maximum(4.0 * n_dot_v * nl, DENOM_FLOOR)
        dgv = np.where(self.spec_ok, dgv, 0.0)
        m = metal[:, None]
        w = self.fw
        scale = np.where(n_dot_l > 0.0, n_dot_l / self.r2, 0.0)
        k1 = scale * ((1.0 - m) / np.pi + dgv * m * (1.0 - w))
        k0 = scale * dgv * (F0_DIELECTRIC * (1.0 - m) * (1.0 - w) + w)
        return k0, k1

    def predict(self, state):
        n, alb, rough, metal = state
        k0, k1 = self.basis(n, rough, metal)
        return self.intensity * (k0[..., None] + alb[:, None, :] * k1[..., None])

    def errors(self, state):
        e = self.predict(state) - self.obs
        prior = self.cfg.roughness_prior_weight * self.scale * (state[2] - self.cfg.roughness_prior_mean)
        return e, prior

    def cost(self, state):
        e, prior = self.errors(state)
        s = np.sum(e * e, axis=-1) * self.wobs
        if self.cfg.robust_loss == "huber":
            d = self.cfg.huber_delta
            s = np.where(s <= d * d, s, 2.0 * d * np.sqrt(s) - d * d)
        return s.sum(axis=-1) + prior * prior

    def irls_weights(self, state):
        if self.cfg.robust_loss != "huber":
            return self.wobs
        e, _ = self.errors(state)
        norm = np.sqrt(np.sum(e * e, axis=-1))
        d = self.cfg.huber_delta
        return self.wobs * np.where(norm <= d, 1.0, d / np.maximum(norm, 1e-300))

    def residual_vector(self, state, weights):
        e, prior = self.errors(state)
        r = (np.sqrt(weights)[..., None] * e).reshape(e.shape[0], -1)
        return np.concatenate([r, prior[:, None]], axis=1)

    def jacobian(self, state, weights, step, move=None, nparams=N_PARAMS):
        """Central finite-difference Jacobian of the weighted residual vector."""
        move = move or _move_full
        m = state[0].shape[0]
        frame = _tangent_frame(state[0])
        cols = []
        for j in range(nparams):
            d = np.zeros((m, nparams))
            d[:, j] = step
            plus = self.residual_vector(move(self, state, d, frame), weights)
            minus = self.residual_vector(move(self, state, -d, frame), weights)
            cols.append((plus - minus) / (2.0 * step))
        return np.stack(cols, axis=-1)


def _move_full(problem, state, delta, frame=None):
    return apply_step(state, delta, frame)


def _move_reduced(problem, state, delta, frame=None):
    # normal and lobe shape move; albedo follows in closed form
    n, _, rough, metal = state
    t1, t2 = _tangent_frame(n) if frame is None else frame
    n_new = normalize(n + delta[:, 0:1] * t1 + delta[:, 1:2] * t2)
    r_new = _sigmoid(_logit(rough) + delta[:, 2])
    m_new = _sigmoid(_logit(metal) + delta[:, 3])
    return n_new, _best_albedo(problem, n_new, r_new, m_new, clip=False), r_new, m_new


INIT_ROUGHNESS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
INIT_METALLIC = (0.0, 0.5, 1.0)
_COARSE_ROUGHNESS = (0.2, 0.5, 0.8)
_COARSE_METALLIC = (0.0, 1.0)
# seeds are scored at the exact grid values but handed to the optimizer
# just inside (0, 1) so the logit is not pinned at the clip
_SEED_MARGIN = 1e-3
# data residual below this fraction of the signal energy counts as an exact fit
_EXACT_FIT = 1e-12
_HEMISPHERE_SEEDS = 64


def _best_albedo(problem: _Problem, n, rough, metal, clip: bool = True):
    # radiance is affine in albedo once the other parameters are fixed
    k0, k1 = problem.basis(n, rough, metal)
    w = problem.wobs[..., None]
    e = problem.intensity
    k0 = k0[..., None] * e
    k1 = k1[..., None] * e
    num = np.sum(w * k1 * (problem.obs - k0), axis=1)
    den = np.sum(w * k1 * k1, axis=1)
    alb = num / np.where(den > 0, den, 1.0)
    return np.clip(alb, 0.0, 1.0) if clip else alb


def _grid(problem: _Problem, best, best_cost, normals, roughs, metals):
    m = best[0].shape[0]
    for n in normals:
        for r in roughs:
            rr = np.full(m, r)
            for mt in metals:
                mm = np.full(m, mt)
                cand = (n, _best_albedo(problem, n, rr, mm), rr, mm)
                c = problem.cost(cand)
                better = c < best_cost
                if np.any(better):
                    _put_state(best, better, _take_state(cand, better))
                    best_cost = np.where(better, c, best_cost)
    return best, best_cost


def normal_candidates(problem: _Problem, n0):
    """The given normal, every light's half vector, and their
    radiance-weighted mean (specular pixels peak near a half vector)."""
    h = normalize(problem.v[:, None, :] + problem.l, eps=1e-300)
    w = problem.obs.mean(axis=-1) * problem.r2 * problem.wobs
    mean_h = normalize(np.sum(h * w[..., None], axis=1) + 1e-12 * n0)
    return [n0, mean_h] + [h[:, i] for i in range(h.shape[1])]


def hemisphere_normals(v, count: int = 64):
    """Fibonacci-spiral normals covering the hemisphere around each view direction."""
    i = np.arange(count) + 0.5
    z = 1.0 - i / count
    rad = np.sqrt(1.0 - z * z)
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    t1, t2 = _tangent_frame(v)
    return [rad[k] * math.cos(phi[k]) * t1 + rad[k] * math.sin(phi[k]) * t2 + z[k] * v for k in range(count)]


def init_search(problem: _Problem, state):
    """Pick a cheap starting point: keep ``state`` unless a coarse search
    over candidate normals, roughness and metallic (albedo in closed form)
    finds a lower cost."""
    best = tuple(np.array(x, copy=True) for x in state)
    best_cost = problem.cost(best)
    best, best_cost = _grid(problem, best, best_cost, normal_candidates(problem, state[0]),
                            _COARSE_ROUGHNESS, _COARSE_METALLIC)
    best, _ = _grid(problem, best, best_cost, [best[0].copy()], INIT_ROUGHNESS, INIT_METALLIC)
    return best


def _unpin(state):
    n, a, r, m = state
    lo, hi = _SEED_MARGIN, 1.0 - _SEED_MARGIN
    return n, a, np.clip(r, lo, hi), np.clip(m, lo, hi)


def _take_state(state, idx):
    return tuple(s[idx] for s in state)


def _put_state(state, idx, new):
    for s, x in zip(state, new):
        s[idx] = x


def _lm_batch(problem: _Problem, state, record_history: bool = False, reduced: bool = False,
              max_iterations: Optional[int] = None):
    """Vectorized Levenberg-Marquardt over a batch of independent pixels.

    With ``reduced`` only the normal, roughness and metallic are iterated
    and albedo is eliminated by linear least squares at every evaluation.
    """
    cfg = problem.cfg
    move, npar = (_move_reduced, 4) if reduced else (_move_full, N_PARAMS)
    m = state[0].shape[0]
    state = tuple(np.array(s, dtype=np.float64, copy=True) for s in state)
    cost = problem.cost(state)
    if not np.all(np.isfinite(cost)):
        raise ValueError("invalid initialization")
    energy = np.sum(problem.obs ** 2 * problem.wobs[..., None], axis=(1, 2))
    floor = 1e-30 + 1e-24 * energy

    lam = np.full(m, cfg.initial_damping)
    iterations = np.zeros(m, dtype=np.int64)
    escalations = np.zeros(m, dtype=np.int64)
    converged = cost <= floor
    active = ~converged
    usable = problem.wobs.sum(axis=1) >= 3
    active &= usable

    rdim = problem.obs.shape[1] * 3 + 1
    jac = np.zeros((m, rdim, npar))
    res = np.zeros((m, rdim))
    need_jac = np.ones(m, dtype=bool)
    history = [[float(c)] for c in cost] if record_history else None

    for _ in range(cfg.max_iterations if max_iterations is None else max_iterations):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        upd = act[need_jac[act]]
        if upd.size:
            sub = problem.take(upd)
            st = _take_state(state, upd)
            w = sub.irls_weights(st)
            jac[upd] = sub.jacobian(st, w, cfg.fd_step, move, npar)
            res[upd] = sub.residual_vector(st, w)
            need_jac[upd] = False

        J, r = jac[act], res[act]
        JT = np.transpose(J, (0, 2, 1))
        A = JT @ J
        g = (JT @ r[..., None])[..., 0]
        diag = np.diagonal(A, axis1=1, axis2=2)
        dfloor = 1e-12 + 1e-9 * diag.max(axis=1, keepdims=True)
        damp = lam[act, None] * np.maximum(diag, dfloor)
        M = A + damp[:, :, None] * np.eye(npar)
        delta = -np.linalg.solve(M, g[..., None])[..., 0]
        Jd = (J @ delta[..., None])[..., 0]
        predicted = -(2.0 * np.sum(g * delta, axis=1) + np.sum(Jd * Jd, axis=1))
        step_norm = np.linalg.norm(delta, axis=1)
        iterations[act] += 1

        done = (predicted <= cfg.rel_tol * cost[act]) | (step_norm < cfg.step_tol)
        done &= np.all(np.isfinite(delta), axis=1)
        converged[act[done]] = True
        active[act[done]] = False

        trial = act[~done]
        if trial.size == 0:
            continue
        dt = delta[~done]
        dt = np.where(np.isfinite(dt), dt, 0.0)
        sub = problem.take(trial)
        new_state = move(sub, _take_state(state, trial), dt)
        new_cost = sub.cost(new_state)
        accept = np.isfinite(new_cost) & (new_cost < cost[trial])
        acc = trial[accept]
        rej = trial[~accept]
        if acc.size:
            rel = (cost[acc] - new_cost[accept]) / np.maximum(cost[acc], 1e-300)
            _put_state(state, acc, _take_state(new_state, accept))
            cost[acc] = new_cost[accept]
            lam[acc] *= cfg.damping_down
            need_jac[acc] = True
            fin = (rel < cfg.rel_tol) | (cost[acc] <= floor[acc])
            converged[acc[fin]] = True
            active[acc[fin]] = False
        if rej.size:
            lam[rej] *= cfg.damping_up
            escalations[rej] += 1
            stalled = lam[rej] > cfg.max_damping
            active[rej[stalled]] = False
        if record_history:
            for i in acc:
                history[i].append(float(cost[i]))

    e, _ = problem.errors(state)
    wsum = np.maximum(problem.wobs.sum(axis=1), 1.0)
    rms = np.sqrt(np.sum(np.sum(e * e, axis=-1) * problem.wobs, axis=1) / (3.0 * wsum))
    return dict(state=state, cost=cost, iterations=iterations, escalations=escalations,
                converged=converged & usable, rms=rms, usable=usable, history=history)


def _bounded(state):
    n, alb, rough, metal = state
    return normalize(n), np.clip(alb, 0.0, 1.0), np.clip(rough, 0.0, 1.0), np.clip(metal, 0.0, 1.0)


def refine_pixel(observations, light_dirs, light_dist, view_dir, init: PixelEstimate,
                 cfg: SolverConfig = SolverConfig(), intensity=(24.0, 24.0, 24.0),
                 record_history: bool = False) -> PixelEstimate:
    """Fit the full BRDF at one pixel.

    ``observations`` is (L, 3); ``light_dirs`` (L, 3) unit vectors toward
    each light and ``light_dist`` (L,) distances; everything in one frame.
    Uses the same seed search and restarts as ``solve_gbuffer`` unless
    ``cfg.init_search`` is off. ``cost_history`` follows the final
    full-parameter pass.
    """
    obs = np.asarray(observations, dtype=np.float64)[None]
    l = normalize(np.asarray(light_dirs, dtype=np.float64))[None]
    r2 = np.square(np.asarray(light_dist, dtype=np.float64))[None]
    v = normalize(np.asarray(view_dir, dtype=np.float64))[None]
    if obs.shape[1] < 3:
        raise ValueError("refine_pixel needs at least three observations")
    state = (np.asarray(init.normal, float)[None], np.clip(np.asarray(init.albedo, float), 0, 1)[None],
             np.array([float(init.roughness)]), np.array([float(init.metallic)]))
    out = _fit(_Problem(obs, l, r2, v, intensity, cfg), state, cfg.init_search, record_history)
    if not out["usable"][0]:
        n, a, r, mtl = _bounded(state)
        return PixelEstimate(n[0], a[0], float(r[0]), float(mtl[0]), float(out["rms"][0]), 0, False, 0,
                             out["history"][0] if record_history else None)
    n, a, r, mtl = _bounded(out["state"])
    return PixelEstimate(
        normal=n[0], albedo=a[0], roughness=float(r[0]), metallic=float(mtl[0]),
        residual_rms=float(out["rms"][0]), iterations=int(out["iterations"][0]),
        converged=bool(out["converged"][0]), escalations=int(out["escalations"][0]),
        cost_history=out["history"][0] if record_history else None,
    )


def residual_jacobian(observations, light_dirs, light_dist, view_dir, estimate: PixelEstimate,
                      cfg: SolverConfig = SolverConfig(), intensity=(24.0, 24.0, 24.0),
                      step: Optional[float] = None):
    """The (3L+1, 7) Jacobian the solver uses at ``estimate`` (robust weights off)."""
    cfg = replace(cfg, robust_loss="none")
    problem = _Problem(np.asarray(observations, float)[None], normalize(np.asarray(light_dirs, float))[None],
                       np.square(np.asarray(light_dist, float))[None],
                       normalize(np.asarray(view_dir, float))[None], intensity, cfg)
    state = (np.asarray(estimate.normal, float)[None], np.asarray(estimate.albedo, float)[None],
             np.array([float(estimate.roughness)]), np.array([float(estimate.metallic)]))
    return problem.jacobian(state, problem.wobs, cfg.fd_step if step is None else step)[0]


# -- photometric stereo initialization ------------------------------------

def photometric_stereo(obs, light_dirs, r2=None, intensity=(1.0, 1.0, 1.0),
                       shadow_threshold: float = 1e-4, max_condition: float = 1e6):
    """Least-squares Lambertian normals for a batch of pixels.

    ``obs`` is (N, L, 3), ``light_dirs`` (N, L, 3) or (L, 3), ``r2`` the
    squared light distances (N, L) or None for directional lights.
    Returns ``(normals, pseudo_albedo_rgb, valid, g_norm)``.
    """
    obs = np.asarray(obs, dtype=np.float64)
    nb, nl = obs.shape[:2]
    dirs = np.broadcast_to(np.asarray(light_dirs, dtype=np.float64), (nb, nl, 3))
    r2 = np.ones((nb, nl)) if r2 is None else np.broadcast_to(np.asarray(r2, float), (nb, nl))
    intensity = np.asarray(intensity, dtype=np.float64)

    corrected = obs * r2[..., None]
    lum = obs.mean(axis=-1)
    b = corrected.mean(axis=-1)
    w = (lum > shadow_threshold).astype(np.float64)
    count = w.sum(axis=1)

    wm = dirs * np.sqrt(w)[..., None]
    sv = np.linalg.svd(wm, compute_uv=False)
    cond = np.where(sv[:, -1] > 0, sv[:, 0] / np.where(sv[:, -1] > 0, sv[:, -1], 1.0), np.inf)
    valid = (count >= 3) & (cond <= max_condition)

    normals = np.tile([0.0, 0.0, 1.0], (nb, 1))
    albedo = np.full((nb, 3), 0.5)
    g_norm = np.zeros(nb)
    if np.any(valid):
        mv, wv, bv = dirs[valid], w[valid], b[valid]
        mtw = np.transpose(mv * wv[..., None], (0, 2, 1))
        g = np.linalg.solve(mtw @ mv, (mtw @ bv[..., None]))[..., 0]
        gn = np.linalg.norm(g, axis=1)
        n = g / np.where(gn > 0, gn, 1.0)[:, None]
        s = np.maximum(np.sum(mv * n[:, None], axis=-1), 0.0) * wv
        ss = np.maximum(np.sum(s * s, axis=1), 1e-300)
        rgb = np.sum(corrected[valid] * s[..., None], axis=1) / ss[:, None]
        normals[valid] = n
        albedo[valid] = math.pi * rgb / intensity
        g_norm[valid] = gn
        valid_idx = np.flatnonzero(valid)
        bad = gn <= 0.0
        valid[valid_idx[bad]] = False
        normals[valid_idx[bad]] = (0.0, 0.0, 1.0)
        albedo[valid_idx[bad]] = 0.5
    return normals, albedo, valid, g_norm


def _surface_points(mls: MultiLightSet, camera: Camera):
    origin, dirs = camera.rays()
    fg = mls.alpha
    d = dirs[fg]
    if mls.depth is not None:
        t = mls.depth[fg]
    else:
        # fall back to the unit sphere around the origin
        b = d @ origin
        c = origin @ origin - 1.0
        t = -b - np.sqrt(np.maximum(b * b - c, 0.0))
    return origin + t[:, None] * d, d


def pixel_geometry(mls: MultiLightSet, camera: Camera, rig: LightRig):
    """Camera-space light directions (N, L, 3), squared distances (N, L),
    view directions (N, 3) and observations (N, L, 3) of foreground pixels."""
    points, d = _surface_points(mls, camera)
    basis = camera.basis()
    lpos = light_positions(mls.poses, rig.radius, camera)
    to_light = lpos[None, :, :] - points[:, None, :]
    r2 = np.sum(to_light * to_light, axis=-1)
    l = (to_light / np.sqrt(r2)[..., None]) @ basis.T
    v = (-d) @ basis.T
    obs = np.transpose(mls.images[:, mls.alpha], (1, 0, 2))
    return l, r2, v, obs


def lambertian_ps(mls: MultiLightSet, camera: Camera, rig: LightRig, cfg: SolverConfig = SolverConfig()):
    """Photometric-stereo normals, pseudo-albedo and validity maps for a set."""
    h, w = mls.alpha.shape
    normals = np.tile([0.0, 0.0, 1.0], (h, w, 1))
    albedo = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    if len(mls) == 0 or not np.any(mls.alpha):
        return normals, albedo, valid
    l, r2, _, obs = pixel_geometry(mls, camera, rig)
    n, a, ok, _ = photometric_stereo(obs, l, r2, rig.intensity, cfg.shadow_threshold, cfg.max_condition)
    normals[mls.alpha] = n
    albedo[mls.alpha] = a
    valid[mls.alpha] = ok
    return normals, albedo, valid


def canonical_order(mls: MultiLightSet) -> list[int]:
    """Order (image, pose) pairs by pose, ties broken by image content."""
    keys = []
    for i, (t, p) in enumerate(mls.poses):
        digest = hashlib.sha1(np.ascontiguousarray(mls.images[i]).tobytes()).hexdigest()
        keys.append((t, p, digest))
    return sorted(range(len(mls)), key=lambda i: keys[i])


def _two_stage(problem: _Problem, start, record_history: bool = False):
    mid = _lm_batch(problem, start, reduced=True)
    out = _lm_batch(problem, mid["state"], record_history)
    out["iterations"] = out["iterations"] + mid["iterations"]
    return out


def _seed_bank(problem: _Problem, normals, roughs, metals):
    """Best seed for every (roughness, metallic) pair over the candidate normals."""
    m = normals[0].shape[0]
    seeds = []
    for r in roughs:
        rr = np.full(m, r)
        for mt in metals:
            mm = np.full(m, mt)
            best, best_cost = None, np.full(m, np.inf)
            for n in normals:
                cand = (n, _best_albedo(problem, n, rr, mm), rr, mm)
                c = problem.cost(cand)
                if best is None:
                    best = tuple(np.array(x, copy=True) for x in cand)
                else:
                    better = c < best_cost
                    _put_state(best, better, _take_state(cand, better))
                best_cost = np.minimum(c, best_cost)
            seeds.append(best)
    return seeds


_OUT_ARRAYS = ("cost", "rms", "converged", "escalations", "iterations", "usable")


def _keep_better(out, cand, idx):
    keep = cand["cost"] < out["cost"][idx]
    sel = idx[keep]
    _put_state(out["state"], sel, _take_state(cand["state"], keep))
    for key in ("cost", "rms", "converged", "escalations"):
        out[key][sel] = cand[key][keep]
    out["iterations"][idx] += cand["iterations"]
    if out["history"] is not None:
        for i, k in zip(sel, np.flatnonzero(keep)):
            out["history"][i] = cand["history"][k]


def _scatter(out, idx, part):
    _put_state(out["state"], idx, part["state"])
    for key in _OUT_ARRAYS:
        out[key][idx] = part[key]
    if out["history"] is not None:
        for i, h in zip(idx, part["history"]):
            out["history"][i] = h


def _fit(problem: _Problem, start, search: bool = True, record_history: bool = False):
    """Seed search, reduced fit and full polish. Pixels left with a clear
    data misfit are restarted from the best seed of every roughness/metallic
    band and keep the cheapest result. Starts that already fit exactly are
    returned as they are."""
    out = _lm_batch(problem, start, record_history, max_iterations=0)
    if not search:
        return _lm_batch(problem, start, record_history)
    todo = np.flatnonzero(~out["converged"])
    if todo.size == 0:
        return out
    prob = problem.take(todo)
    part = _two_stage(prob, _unpin(init_search(prob, _take_state(start, todo))), record_history)
    e, _ = prob.errors(part["state"])
    data = np.sum(np.sum(e * e, axis=-1) * prob.wobs, axis=1)
    energy = np.sum(prob.obs ** 2 * prob.wobs[..., None], axis=(1, 2))
    # a data misfit larger than the largest possible prior cost cannot be the
    # optimum of an exactly explainable pixel, so only those are restarted
    cfg = problem.cfg
    reach = max(cfg.roughness_prior_mean, 1.0 - cfg.roughness_prior_mean)
    prior_max = np.square(cfg.roughness_prior_weight * prob.scale * reach)
    retry = np.flatnonzero(data > np.maximum(_EXACT_FIT * energy, prior_max))
    if retry.size:
        sub = prob.take(retry)
        normals = (normal_candidates(sub, start[0][todo[retry]]) + [part["state"][0][retry].copy()]
                   + hemisphere_normals(sub.v, _HEMISPHERE_SEEDS))
        for seed in _seed_bank(sub, normals, _COARSE_ROUGHNESS, _COARSE_METALLIC):
            _keep_better(part, _two_stage(sub, _unpin(seed), record_history), retry)
    _scatter(out, todo, part)
    return out


def _solve_chunk(problem: _Problem, init_state, valid):
    m = valid.shape[0]
    n, a, r, mt = (np.array(x, copy=True) for x in init_state)
    iters = np.zeros(m, dtype=np.int64)
    conv = np.zeros(m, dtype=bool)
    e, _ = problem.errors(init_state)
    wsum = np.maximum(problem.wobs.sum(axis=1), 1.0)
    rms = np.sqrt(np.sum(np.sum(e * e, axis=-1) * problem.wobs, axis=1) / (3.0 * wsum))
    idx = np.flatnonzero(valid)
    if idx.size:
        sub = problem.take(idx)
        start = _take_state(init_state, idx)
        out = _fit(sub, start, problem.cfg.init_search)
        bn, ba, br, bm = _bounded(out["state"])
        n[idx], a[idx], r[idx], mt[idx] = bn, ba, br, bm
        iters[idx] = out["iterations"]
        conv[idx] = out["converged"]
        rms[idx] = out["rms"]
    return n, a, r, mt, iters, conv, rms


def solve_gbuffer(input_image, mls: MultiLightSet, camera: Camera, rig: LightRig,
                  cfg: SolverConfig = SolverConfig(), threads: int = 1):
    """Estimate a full G-buffer from the input view and its light set.

    Returns ``(GBuffer, SolverReport)``. The input image only contributes
    its footprint; the foreground is the light set's alpha mask.
    """
    t_start = time.perf_counter()
    if len(mls) == 0:
        raise ValueError("underdetermined: no light observations")
    inp = check_image(input_image, "input")
    if inp.shape[:2] != mls.alpha.shape:
        raise ValueError("input image and light set differ in size")
    mls = mls.subset(canonical_order(mls))
    h, w = mls.alpha.shape
    fg = mls.alpha
    nfg = int(fg.sum())

    out_n = np.zeros((h, w, 3))
    out_a = np.zeros((h, w, 3))
    out_r = np.zeros((h, w))
    out_m = np.zeros((h, w))
    iters = np.zeros(nfg, dtype=np.int64)
    conv = np.zeros(nfg, dtype=bool)
    rms = np.zeros(nfg)
    invalid = nfg
    if nfg:
        l, r2, v, obs = pixel_geometry(mls, camera, rig)
        n0, a0, valid, _ = photometric_stereo(obs, l, r2, rig.intensity, cfg.shadow_threshold,
                                              cfg.max_condition)
        if len(mls) < 3:
            valid[:] = False
        invalid = int(nfg - valid.sum())
        init = (n0, np.clip(a0, 0.0, 1.0), np.full(nfg, cfg.roughness_init), np.full(nfg, cfg.metallic_init))
        problem = _Problem(obs, l, r2, v, rig.intensity, cfg)

        def run(s):
            return _solve_chunk(problem.take(s), _take_state(init, s), valid[s])

        parts = ordered_map(run, chunk_slices(nfg, PIXEL_CHUNK), threads)
        n, a, r, mt, iters, conv, rms = (np.concatenate(x) for x in zip(*parts))
        out_n[fg] = make_front_facing(n)
        out_a[fg], out_r[fg], out_m[fg] = a, r, mt

    gb = GBuffer(out_n, out_a, out_r, out_m, fg, mls.depth)
    refined = nfg - invalid
    report = SolverReport(
        pixels=h * w, foreground=nfg, invalid=invalid, refined=refined,
        converged=int(conv.sum()),
        mean_iterations=float(math.fsum(iters) / max(nfg, 1)),
        mean_residual_rms=float(math.fsum(rms) / max(nfg, 1)),
        max_residual_rms=float(rms.max()) if nfg else 0.0,
        wall_time=time.perf_counter() - t_start,
    )
    return gb, report
