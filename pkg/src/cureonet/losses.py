"""Physics-informed loss components over collocation sets.

Residuals are evaluated through the process-model functions in physical
units and then nondimensionalized (normalized time / temperature spans) so
that the default unit weights are comparably scaled across components. Every
component is a mean square over all sampled points of all designs.

Two collocation layouts are supported: plain uniform draws (the default),
and a stratified layout with equal point blocks per temporal subdomain,
which lets all subdomain decoders evaluate in one batched pass. Training
uses the stratified layout; loss values are identical in structure (mean
squares over the sampled points) either way.
"""

from __future__ import annotations

import types
from dataclasses import dataclass, fields

import numpy as np

from .autodiff import Jet2, clip, scatter_rows, take_rows, tile_rows, value_of
from .design import encode_batch
from .operator import (OperatorTriplet, boundary_pair_values, decode_grouped,
                       decode_stratified, decoder_pair_values, merged_branch)
from .process import (MaterialSet, air_temperature, bc_residuals,
                      celsius_to_kelvin, continuity_residuals, cure_rate,
                      pde_residual_part, pde_residual_tool)


@dataclass(frozen=True)
class CollocationConfig:
    """Total point counts per category for one collocation draw, spread over
    the drawn designs. Plain draws honor the counts exactly; stratified
    draws round up so every (design, subdomain) block has equal size."""

    q_interior: int = 2048
    q_ic: int = 256
    q_bc: int = 256
    q_if: int = 256
    q_ct: int = 256
    q_ode: int = 2048

    def __post_init__(self):
        if min(self.q_interior, self.q_ic, self.q_bc, self.q_ct,
               self.q_ode) < 1 or self.q_if < 0:
            raise ValueError("collocation counts must be positive")


@dataclass
class CollocationSet:
    """Flattened random collocation coordinates for N designs. idx arrays
    give the design index of each row. layout_* is None for plain uniform
    draws, else (outer_blocks, rows_per_design_block) describing the
    segment-major stratified ordering."""

    designs: list
    bn1: np.ndarray            # (N, 4)
    bn2: np.ndarray            # (N, 100)
    l_tool: np.ndarray         # (N,)
    l_part: np.ndarray
    h_top: np.ndarray
    h_bot: np.ndarray
    int_x: np.ndarray          # interior points, used for tool and part PDEs
    int_tau: np.ndarray
    int_idx: np.ndarray
    ode_x: np.ndarray
    ode_tau: np.ndarray
    ode_idx: np.ndarray
    ic_x: np.ndarray
    ic_idx: np.ndarray
    bc_tau: np.ndarray
    bc_idx: np.ndarray
    ta_bc: np.ndarray          # air temperature at bc_tau, degC
    if_x: np.ndarray
    if_tau: np.ndarray         # values at internal subdomain boundaries
    if_idx: np.ndarray
    ct_tau: np.ndarray
    ct_idx: np.ndarray
    layout_int: tuple | None = None
    layout_ode: tuple | None = None
    layout_bc: tuple | None = None
    layout_ct: tuple | None = None
    layout_if: tuple | None = None


def _stratified_draw(rng, n_designs, per_design, boundaries):
    """Segment-major stratified draw: equal blocks per subdomain, uniform
    tau inside each subdomain, uniform x. Returns (x, tau, idx, layout)."""
    n_d = len(boundaries) - 1
    m = -(-per_design // n_d)  # ceil
    total = n_d * n_designs * m
    x = rng.uniform(0.0, 1.0, size=total)
    tau = np.empty(total)
    for k in range(n_d):
        lo, hi = boundaries[k], boundaries[k + 1]
        block = slice(k * n_designs * m, (k + 1) * n_designs * m)
        tau[block] = rng.uniform(lo, hi, size=n_designs * m)
    idx = np.tile(np.repeat(np.arange(n_designs, dtype=np.intp), m), n_d)
    return x, tau, idx, (n_d, m)


def _spread_counts(total: int, n: int) -> np.ndarray:
    counts = np.full(n, total // n, dtype=np.intp)
    counts[: total % n] += 1
    return counts


def sample_collocation(triplet: OperatorTriplet, designs,
                       config: CollocationConfig, seed,
                       stratified: bool = False) -> CollocationSet:
    """Random collocation coordinates, deterministic per seed."""
    if not designs:
        raise ValueError("need at least one design")
    rng = np.random.default_rng(seed)
    n = len(designs)
    bn1, bn2 = encode_batch(designs, triplet.space, triplet.horizon,
                            t0=triplet.t0, cooldown=triplet.cooldown)
    boundaries = triplet.g_tc.config.boundaries

    def draw(q):
        if stratified:
            return _stratified_draw(rng, n, -(-q // n), boundaries)
        x = rng.uniform(0.0, 1.0, size=q)
        tau = rng.uniform(0.0, 1.0, size=q)
        idx = np.repeat(np.arange(n, dtype=np.intp), _spread_counts(q, n))
        return x, tau, idx, None

    int_x, int_tau, int_idx, layout_int = draw(config.q_interior)
    ode_x, ode_tau, ode_idx, layout_ode = draw(config.q_ode)
    _bc_x, bc_tau, bc_idx, layout_bc = draw(config.q_bc)
    _ct_x, ct_tau, ct_idx, layout_ct = draw(config.q_ct)

    ic_x = rng.uniform(0.0, 1.0, size=config.q_ic)
    ic_idx = np.repeat(np.arange(n, dtype=np.intp),
                       _spread_counts(config.q_ic, n))

    internal = np.asarray(boundaries[1:-1])
    layout_if = None
    if internal.size and config.q_if:
        n_b = internal.size
        m_if = max(1, -(-config.q_if // (n_b * n)))
        if_x = rng.uniform(0.0, 1.0, size=n_b * n * m_if)
        if_tau = np.repeat(internal, n * m_if)
        if_idx = np.tile(np.repeat(np.arange(n, dtype=np.intp), m_if), n_b)
        layout_if = (n_b, m_if)
    else:
        if_x = np.empty(0)
        if_tau = np.empty(0)
        if_idx = np.empty(0, dtype=np.intp)

    ta_bc = np.empty_like(bc_tau)
    for i, d in enumerate(designs):
        cycle = d.cycle(t0=triplet.t0, cooldown=triplet.cooldown)
        rows = bc_idx == i
        ta_bc[rows] = air_temperature(cycle, bc_tau[rows] * triplet.horizon)

    arr = lambda name: np.array([getattr(d, name) for d in designs])
    return CollocationSet(
        designs=list(designs), bn1=bn1, bn2=bn2,
        l_tool=arr("l_tool"), l_part=arr("l_part"),
        h_top=arr("h_top"), h_bot=arr("h_bot"),
        int_x=int_x, int_tau=int_tau, int_idx=int_idx,
        ode_x=ode_x, ode_tau=ode_tau, ode_idx=ode_idx,
        ic_x=ic_x, ic_idx=ic_idx,
        bc_tau=bc_tau, bc_idx=bc_idx, ta_bc=ta_bc,
        if_x=if_x, if_tau=if_tau, if_idx=if_idx,
        ct_tau=ct_tau, ct_idx=ct_idx,
        layout_int=layout_int, layout_ode=layout_ode,
        layout_bc=layout_bc, layout_ct=layout_ct, layout_if=layout_if)


# -- loss weights and breakdown ------------------------------------------------


@dataclass(frozen=True)
class LossWeights:
    ic_t: float = 1.0
    ic_alpha: float = 1.0
    bc_top: float = 1.0
    bc_bot: float = 1.0
    pde_tool: float = 1.0
    pde_part: float = 1.0
    ode: float = 1.0
    if_temporal: float = 1.0
    ct_value: float = 1.0
    ct_flux: float = 1.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LossBreakdown:
    """Snapshot of all loss components (plain floats)."""

    ic_t: float = 0.0
    ic_alpha: float = 0.0
    bc_top: float = 0.0
    bc_bot: float = 0.0
    pde_tool: float = 0.0
    pde_part: float = 0.0
    ode: float = 0.0
    if_temporal: float = 0.0
    ct_value: float = 0.0
    ct_flux: float = 0.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def total(self, weights: LossWeights) -> float:
        return float(total_loss(self.as_dict(), weights))


COMPONENT_NAMES = tuple(f.name for f in fields(LossBreakdown))


def total_loss(components, weights: LossWeights):
    """Weighted sum of loss components; keeps the tape if components are
    recorded Vars."""
    comps = components.as_dict() if isinstance(components, LossBreakdown) \
        else components
    acc = 0.0
    for name, value in comps.items():
        acc = acc + getattr(weights, name) * value
    return acc


# -- evaluation helpers --------------------------------------------------------


def _scatter_flat(pieces, total: int) -> Jet2:
    """Reassemble grouped decode pieces into flat (P,) jet slots."""
    slot_keys_d1 = pieces[0][1].d1.keys()
    slot_keys_d2 = pieces[0][1].d2.keys()

    def assemble(get):
        acc = None
        for rows, jet in pieces:
            contrib = scatter_rows(get(jet), rows, total)
            acc = contrib if acc is None else acc + contrib
        return acc

    return Jet2(assemble(lambda j: j.value),
                {k: assemble(lambda j, k=k: j.d1[k]) for k in slot_keys_d1},
                {k: assemble(lambda j, k=k: j.d2[k]) for k in slot_keys_d2})


def _get_merged(nets, name, cset, merged_map):
    if merged_map is not None and name in merged_map:
        return merged_map[name]
    m = merged_branch(nets[name], cset.bn1, cset.bn2)
    if merged_map is not None:
        merged_map[name] = m
    return m


def _flat_eval(net, merged, cset, x, tau, idx, layout,
               tracked=(), order=0) -> Jet2:
    """Operator jets on flattened points, as flat (P,) slots."""
    xy = np.stack([np.asarray(x, dtype=np.float64),
                   np.asarray(tau, dtype=np.float64)], axis=1)
    if layout is not None:
        outer, m = layout
        rows = tile_rows(merged, outer, m)
        return decode_stratified(net, rows, xy, tracked=tracked, order=order)
    rows = take_rows(merged, idx)
    pieces = decode_grouped(net, rows, xy, tracked=tracked, order=order)
    return _scatter_flat(pieces, xy.shape[0])


def _phys_temp_jet(jet: Jet2, scale: float, offset: float,
                   horizon: float) -> Jet2:
    """Network jet (normalized output, tau time) -> physical jet (degC, s)."""
    d1 = {}
    if 0 in jet.d1:
        d1[0] = scale * jet.d1[0]
    if 1 in jet.d1:
        d1[1] = (scale / horizon) * jet.d1[1]
    d2 = {}
    if 0 in jet.d2:
        d2[0] = scale * jet.d2[0]
    return Jet2(offset + scale * jet.value, d1, d2)


def _mean_sq(r, total: int):
    return (r * r).sum() / total


# -- loss components -----------------------------------------------------------


def loss_ic(nets: dict, cset: CollocationSet, alpha_init: float = 0.05,
            merged_map=None):
    """Initial-condition losses at tau = 0: temperatures against the start
    temperature (0 in normalized units), cure against alpha_init."""
    if cset.ic_x.size == 0:
        raise ValueError("empty initial-condition collocation set")
    zeros = np.zeros_like(cset.ic_x)
    total = cset.ic_x.size
    l_t = 0.0
    for name in ("tt", "tc"):
        jet = _flat_eval(nets[name], _get_merged(nets, name, cset, merged_map),
                         cset, cset.ic_x, zeros, cset.ic_idx, None)
        l_t = l_t + _mean_sq(jet.value, total)
    jet = _flat_eval(nets["alpha"], _get_merged(nets, "alpha", cset, merged_map),
                     cset, cset.ic_x, zeros, cset.ic_idx, None)
    l_a = _mean_sq(jet.value - alpha_init, total)
    return l_t, l_a


def loss_bc(nets: dict, cset: CollocationSet, props: MaterialSet,
            delta_t: float, horizon: float, merged_map=None):
    """Robin boundary losses at the part top and tool bottom, in normalized
    temperature units."""
    total = cset.bc_tau.size
    tc, tt = nets["tc"].model, nets["tt"].model
    top_jet = _flat_eval(nets["tc"], _get_merged(nets, "tc", cset, merged_map),
                         cset, np.ones(total), cset.bc_tau,
                         cset.bc_idx, cset.layout_bc, tracked=(0,), order=1)
    bot_jet = _flat_eval(nets["tt"], _get_merged(nets, "tt", cset, merged_map),
                         cset, np.zeros(total), cset.bc_tau,
                         cset.bc_idx, cset.layout_bc, tracked=(0,), order=1)
    consts = types.SimpleNamespace(
        h_top=cset.h_top[cset.bc_idx], h_bot=cset.h_bot[cset.bc_idx],
        l_part=cset.l_part[cset.bc_idx], l_tool=cset.l_tool[cset.bc_idx])
    top_phys = _phys_temp_jet(top_jet, tc.out_scale, tc.out_offset, horizon)
    bot_phys = _phys_temp_jet(bot_jet, tt.out_scale, tt.out_offset, horizon)
    top, bot = bc_residuals(top_phys, bot_phys, cset.ta_bc,
                            props.part, props.tool, consts)
    return (_mean_sq(top * (1.0 / delta_t), total),
            _mean_sq(bot * (1.0 / delta_t), total))


def loss_physics(nets: dict, cset: CollocationSet, props: MaterialSet,
                 bc_scale: float, delta_t: float, horizon: float,
                 want_pde: bool = True, want_ode: bool = True,
                 merged_map=None):
    """PDE residual losses (tool and part) and the cure-kinetics ODE loss,
    in normalized (tau, temperature-span) units. The want_* switches skip
    components that a training phase does not minimize."""
    if not 0.0 <= bc_scale <= 1.0:
        raise ValueError("bc_scale must lie in [0, 1]")
    tc, tt = nets["tc"].model, nets["tt"].model

    l_tool = l_part = l_ode = 0.0
    if want_pde:
        total = cset.int_x.size
        pde_scale = horizon / delta_t
        jet = _flat_eval(nets["tt"], _get_merged(nets, "tt", cset, merged_map),
                         cset, cset.int_x, cset.int_tau,
                         cset.int_idx, cset.layout_int,
                         tracked={0: 2, 1: 1})
        phys = _phys_temp_jet(jet, tt.out_scale, tt.out_offset, horizon)
        res = pde_residual_tool(phys, props.tool, cset.l_tool[cset.int_idx])
        l_tool = _mean_sq(res * pde_scale, total)

        jet = _flat_eval(nets["tc"], _get_merged(nets, "tc", cset, merged_map),
                         cset, cset.int_x, cset.int_tau,
                         cset.int_idx, cset.layout_int,
                         tracked={0: 2, 1: 1})
        phys = _phys_temp_jet(jet, tc.out_scale, tc.out_offset, horizon)
        if bc_scale > 0.0:
            jet_a = _flat_eval(nets["alpha"],
                               _get_merged(nets, "alpha", cset, merged_map),
                               cset, cset.int_x, cset.int_tau,
                               cset.int_idx, cset.layout_int,
                               tracked=(1,), order=1)
            alpha_rate = jet_a.d1[1] * (1.0 / horizon)
        else:
            alpha_rate = 0.0
        res = pde_residual_part(phys, alpha_rate, props.part,
                                cset.l_part[cset.int_idx], bc_scale)
        l_part = _mean_sq(res * pde_scale, total)

    if want_ode:
        total = cset.ode_x.size
        jet_a = _flat_eval(nets["alpha"],
                           _get_merged(nets, "alpha", cset, merged_map),
                           cset, cset.ode_x, cset.ode_tau,
                           cset.ode_idx, cset.layout_ode,
                           tracked=(1,), order=1)
        jet_t = _flat_eval(nets["tc"], _get_merged(nets, "tc", cset, merged_map),
                           cset, cset.ode_x, cset.ode_tau,
                           cset.ode_idx, cset.layout_ode)
        t_kelvin = celsius_to_kelvin(tc.out_offset + tc.out_scale * jet_t.value)
        # predictions roam outside [0,1] early in training; clamp silently
        rate = cure_rate(clip(jet_a.value, 0.0, 1.0), t_kelvin, props.kinetics)
        l_ode = _mean_sq(jet_a.d1[1] - horizon * rate, total)
    return l_tool, l_part, l_ode


def loss_interface_temporal(net, cset: CollocationSet, merged=None):
    """Mismatch of adjacent decoders at shared subdomain boundaries
    (normalized output units). Zero by construction for one subdomain."""
    segments = net.segments
    if len(segments) == 1 or cset.if_x.size == 0:
        return 0.0
    if merged is None:
        merged = merged_branch(net, cset.bn1, cset.bn2)
    total = cset.if_x.size
    xy_all = np.stack([cset.if_x, cset.if_tau], axis=1)
    boundaries = sorted({seg[1] for seg in segments if seg[1] < 1.0})

    def adjacent(b):
        k_left = next(i for i, s in enumerate(segments) if s[1] == b)
        k_right = next(i for i, s in enumerate(segments) if s[0] == b)
        return k_left, k_right

    if cset.layout_if is not None and cset.layout_if[0] == len(boundaries):
        # boundary-major equal blocks: all boundaries in one batched pass
        block = total // len(boundaries)
        blocks_tau = cset.if_tau[::block]
        k_left = [adjacent(b)[0] for b in blocks_tau]
        k_right = [adjacent(b)[1] for b in blocks_tau]
        rows = tile_rows(merged, cset.layout_if[0], cset.layout_if[1])
        left, right = boundary_pair_values(net, rows, xy_all, k_left, k_right)
        diff = left - right
        return (diff * diff).sum() / total

    acc = 0.0
    for b in boundaries:
        rows = np.nonzero(cset.if_tau == b)[0]
        if rows.size == 0:
            continue
        k_left, k_right = adjacent(b)
        m_rows = take_rows(merged, cset.if_idx[rows])
        left, right = decoder_pair_values(net, m_rows, xy_all[rows],
                                          k_left, k_right)
        diff = left - right
        acc = acc + (diff * diff).sum()
    return acc / total


def loss_continuity_material(nets: dict, cset: CollocationSet,
                             props: MaterialSet, delta_t: float,
                             horizon: float, merged_map=None):
    """Tool/part interface continuity losses: temperature value jump and
    conductive flux jump, nondimensionalized by the temperature span and the
    part-side conductance."""
    total = cset.ct_tau.size
    tc, tt = nets["tc"].model, nets["tt"].model
    tool_jet = _flat_eval(nets["tt"], _get_merged(nets, "tt", cset, merged_map),
                          cset, np.ones(total), cset.ct_tau,
                          cset.ct_idx, cset.layout_ct, tracked=(0,), order=1)
    part_jet = _flat_eval(nets["tc"], _get_merged(nets, "tc", cset, merged_map),
                          cset, np.zeros(total), cset.ct_tau,
                          cset.ct_idx, cset.layout_ct, tracked=(0,), order=1)
    tool_phys = _phys_temp_jet(tool_jet, tt.out_scale, tt.out_offset, horizon)
    part_phys = _phys_temp_jet(part_jet, tc.out_scale, tc.out_offset, horizon)
    l_tool_pt = cset.l_tool[cset.ct_idx]
    l_part_pt = cset.l_part[cset.ct_idx]
    val, flux = continuity_residuals(tool_phys, part_phys, props.tool,
                                     props.part, l_tool_pt, l_part_pt)
    return (_mean_sq(val * (1.0 / delta_t), total),
            _mean_sq(flux * (l_part_pt / (props.part.k * delta_t)), total))


# -- assembly -----------------------------------------------------------------

PHASE_TEMPERATURE = "temperature"
PHASE_CURE = "cure"
PHASE_ALL = "all"


def compute_components(nets: dict, triplet: OperatorTriplet,
                       cset: CollocationSet, props: MaterialSet,
                       bc_scale: float, phase: str = PHASE_ALL) -> dict:
    """Loss components for one phase. `nets` maps {tc, tt, alpha} to taped
    or frozen operators; gradient flows only through taped ones. The
    if_temporal entry sums the temporal-interface losses of the models
    updated in the phase (all three for phase "all")."""
    if phase not in (PHASE_TEMPERATURE, PHASE_CURE, PHASE_ALL):
        raise ValueError(f"unknown phase {phase!r}")
    delta_t = triplet.delta_t
    horizon = triplet.horizon
    merged_map: dict = {}
    l_tool, l_part, l_ode = loss_physics(
        nets, cset, props, bc_scale, delta_t, horizon,
        want_pde=phase in (PHASE_TEMPERATURE, PHASE_ALL),
        want_ode=phase in (PHASE_CURE, PHASE_ALL), merged_map=merged_map)
    l_ic_t, l_ic_a = loss_ic(nets, cset, alpha_init=triplet.alpha_init,
                             merged_map=merged_map)
    out: dict = {}
    if phase in (PHASE_TEMPERATURE, PHASE_ALL):
        out["ic_t"] = l_ic_t
        out["bc_top"], out["bc_bot"] = loss_bc(nets, cset, props, delta_t,
                                               horizon, merged_map=merged_map)
        out["pde_tool"], out["pde_part"] = l_tool, l_part
        out["ct_value"], out["ct_flux"] = loss_continuity_material(
            nets, cset, props, delta_t, horizon, merged_map=merged_map)
        out["if_temporal"] = (
            loss_interface_temporal(nets["tc"], cset, merged_map.get("tc"))
            + loss_interface_temporal(nets["tt"], cset, merged_map.get("tt")))
    if phase in (PHASE_CURE, PHASE_ALL):
        out["ic_alpha"] = l_ic_a
        out["ode"] = l_ode
        alpha_if = loss_interface_temporal(nets["alpha"], cset,
                                           merged_map.get("alpha"))
        out["if_temporal"] = out.get("if_temporal", 0.0) + alpha_if
    return out


def breakdown_from(components: dict) -> LossBreakdown:
    vals = {}
    for name in COMPONENT_NAMES:
        if name in components:
            v = components[name]
            vals[name] = float(value_of(v)) if not isinstance(v, float) else v
    return LossBreakdown(**vals)
