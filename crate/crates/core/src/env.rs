//! Deterministic 3D floorplanning environment.
//!
//! The canvas is a Z x H x W cell grid. An action places the next module's
//! rectangular footprint on one layer, anchored at its minimum-(x, y)
//! corner. Each step returns a three-component reward: a wirelength score
//! in (0, 1], a congestion penalty, and a thermal penalty.
//!
//! Wirelength is kept exact by working in doubled units: the center of a
//! module anchored at (x, y, z) with footprint w x h is the integer triple
//! (2x + w, 2y + h, 2z). Distances between doubled centers are integers,
//! so incremental updates and from-scratch recomputation agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::netlist::{net_count_matrix, validate, NetCountMatrix, Netlist};
use crate::{Result, SgfError};

/// Vertical distance weight in the 3D Manhattan metric.
pub const VERTICAL_WEIGHT: i64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasConfig {
    pub w: usize,
    pub h: usize,
    pub z: usize,
}

impl CanvasConfig {
    pub const fn default_canvas() -> Self {
        CanvasConfig { w: 48, h: 48, z: 3 }
    }

    pub fn new(w: usize, h: usize, z: usize) -> Result<Self> {
        if w < 4 || h < 4 {
            return Err(SgfError::Invalid(format!("canvas {w}x{h} too small (min 4x4)")));
        }
        if z < 1 {
            return Err(SgfError::Invalid("canvas needs at least one layer".into()));
        }
        Ok(CanvasConfig { w, h, z })
    }

    pub fn cells(&self) -> usize {
        self.w * self.h * self.z
    }

    /// Normalization scale of the wirelength score: one full-canvas move.
    pub fn wl_scale(&self) -> i64 {
        (self.w as i64 - 1) + (self.h as i64 - 1) + VERTICAL_WEIGHT * (self.z as i64 - 1)
    }
}

/// Minimum-corner placement coordinate; the discrete action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Anchor {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Anchor {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Anchor { x, y, z }
    }
}

/// Doubled-unit module center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Center2 {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

fn center2(a: Anchor, w: usize, h: usize) -> Center2 {
    Center2 { x: 2 * a.x as i64 + w as i64, y: 2 * a.y as i64 + h as i64, z: 2 * a.z as i64 }
}

/// Doubled-unit weighted Manhattan distance between two centers.
fn dist2(a: Center2, b: Center2) -> i64 {
    (a.x - b.x).abs() + (a.y - b.y).abs() + VERTICAL_WEIGHT * (a.z - b.z).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    /// Wirelength score in (0, 1]; 1 means zero wirelength increase.
    pub w: f64,
    /// Congestion penalty, >= 0.
    pub c: f64,
    /// Thermal penalty, >= 0.
    pub h: f64,
}

impl RewardVector {
    pub const ZERO: RewardVector = RewardVector { w: 0.0, c: 0.0, h: 0.0 };

    pub fn as_array(&self) -> [f64; 3] {
        [self.w, self.c, self.h]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        RewardVector { w: a[0], c: a[1], h: a[2] }
    }
}

/// Immutable placement snapshot. `step` produces a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct CanvasState {
    cfg: CanvasConfig,
    /// Module id per cell, indexed `(z * h + y) * w + x`.
    occupancy: Vec<Option<u32>>,
    positions: Vec<Option<Anchor>>,
    /// Modules in placement order (decreasing area, ties by ascending id).
    placed_order: Vec<usize>,
    t: usize,
    /// Cached scalar maps of the current canvas.
    max_congestion: f64,
    max_heat: f64,
    /// Total wirelength so far, doubled units.
    wl2: i64,
}

impl CanvasState {
    pub fn cfg(&self) -> &CanvasConfig {
        &self.cfg
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n_modules(&self) -> usize {
        self.placed_order.len()
    }

    pub fn done(&self) -> bool {
        self.t == self.placed_order.len()
    }

    pub fn placed_order(&self) -> &[usize] {
        &self.placed_order
    }

    /// Module scheduled for placement at the current step.
    pub fn next_module(&self) -> Option<usize> {
        self.placed_order.get(self.t).copied()
    }

    pub fn position(&self, module: usize) -> Option<Anchor> {
        self.positions[module]
    }

    pub fn occupant(&self, x: usize, y: usize, z: usize) -> Option<u32> {
        self.occupancy[(z * self.cfg.h + y) * self.cfg.w + x]
    }

    pub fn max_congestion(&self) -> f64 {
        self.max_congestion
    }

    pub fn max_heat(&self) -> f64 {
        self.max_heat
    }

    /// Total wirelength in doubled units (exact integer).
    pub fn wirelength2(&self) -> i64 {
        self.wl2
    }

    /// Reported wirelength in half-cell units.
    pub fn wirelength(&self) -> f64 {
        self.wl2 as f64 / 2.0
    }

    fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.cfg.h + y) * self.cfg.w + x
    }
}

/// State features consumed by the approximator.
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    /// Wirelength increase per anchor for the next module; `f64::INFINITY`
    /// marks illegal anchors. Half-cell units.
    pub wl_increase: Vec<f64>,
    /// 1.0 on cells newly occupied by the previous step.
    pub diff: Vec<f64>,
}

/// The environment: a netlist bound to a canvas. States are snapshots;
/// all transitions are pure functions of (state, action).
#[derive(Debug, Clone)]
pub struct Env {
    netlist: Netlist,
    m: NetCountMatrix,
    cfg: CanvasConfig,
}

impl Env {
    pub fn new(netlist: Netlist, cfg: CanvasConfig) -> Result<Self> {
        let violations = validate(&netlist, &cfg);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(SgfError::Invalid(msgs.join("; ")));
        }
        let m = net_count_matrix(&netlist);
        Ok(Env { netlist, m, cfg })
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn matrix(&self) -> &NetCountMatrix {
        &self.m
    }

    pub fn cfg(&self) -> CanvasConfig {
        self.cfg
    }

    pub fn reset(&self) -> CanvasState {
        let n = self.netlist.modules.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&id| (std::cmp::Reverse(self.netlist.modules[id].area()), id));
        CanvasState {
            cfg: self.cfg,
            occupancy: vec![None; self.cfg.cells()],
            positions: vec![None; n],
            placed_order: order,
            t: 0,
            max_congestion: 0.0,
            max_heat: 0.0,
            wl2: 0,
        }
    }

    /// All anchors where the next module fits without overlap.
    pub fn legal_actions(&self, s: &CanvasState) -> Vec<Anchor> {
        let Some(module) = s.next_module() else {
            return Vec::new();
        };
        let (w, h) = (self.netlist.modules[module].width, self.netlist.modules[module].height);
        let mut out = Vec::new();
        for z in 0..self.cfg.z {
            for y in 0..=(self.cfg.h - h) {
                for x in 0..=(self.cfg.w - w) {
                    let a = Anchor::new(x, y, z);
                    if self.footprint_free(s, a, w, h) {
                        out.push(a);
                    }
                }
            }
        }
        out
    }

    fn footprint_free(&self, s: &CanvasState, a: Anchor, w: usize, h: usize) -> bool {
        for dy in 0..h {
            for dx in 0..w {
                if s.occupancy[s.idx(a.x + dx, a.y + dy, a.z)].is_some() {
                    return false;
                }
            }
        }
        true
    }

    fn check_legal(&self, s: &CanvasState, a: Anchor, w: usize, h: usize) -> Result<()> {
        if a.x + w > self.cfg.w || a.y + h > self.cfg.h || a.z >= self.cfg.z {
            return Err(SgfError::IllegalAction(format!(
                "anchor ({}, {}, {}) out of bounds for {}x{} footprint",
                a.x, a.y, a.z, w, h
            )));
        }
        if !self.footprint_free(s, a, w, h) {
            return Err(SgfError::IllegalAction(format!(
                "anchor ({}, {}, {}) overlaps occupied cells",
                a.x, a.y, a.z
            )));
        }
        Ok(())
    }

    /// Wirelength increase of placing the next module at `a`, doubled units.
    pub fn wl_increase2(&self, s: &CanvasState, module: usize, a: Anchor) -> i64 {
        let me = &self.netlist.modules[module];
        let c = center2(a, me.width, me.height);
        let mut dwl = 0i64;
        for (other, pos) in s.positions.iter().enumerate() {
            let Some(&p) = pos.as_ref() else { continue };
            let count = self.m.get(module, other);
            if count == 0 {
                continue;
            }
            let om = &self.netlist.modules[other];
            dwl += count as i64 * dist2(c, center2(p, om.width, om.height));
        }
        dwl
    }

    /// Place the next module at `a`. Returns the successor state, the
    /// reward, the episode-done flag, and the exact wirelength increase.
    pub fn step(&self, s: &CanvasState, a: Anchor) -> Result<(CanvasState, RewardVector, bool)> {
        let (next, reward, done, _) = self.step_full(s, a)?;
        Ok((next, reward, done))
    }

    pub fn step_full(
        &self,
        s: &CanvasState,
        a: Anchor,
    ) -> Result<(CanvasState, RewardVector, bool, i64)> {
        let module = s
            .next_module()
            .ok_or_else(|| SgfError::IllegalAction("episode already complete".into()))?;
        let me = &self.netlist.modules[module];
        self.check_legal(s, a, me.width, me.height)?;

        let dwl2 = self.wl_increase2(s, module, a);

        let mut next = s.clone();
        for dy in 0..me.height {
            for dx in 0..me.width {
                let idx = next.idx(a.x + dx, a.y + dy, a.z);
                next.occupancy[idx] = Some(module as u32);
            }
        }
        next.positions[module] = Some(a);
        next.t += 1;
        next.wl2 += dwl2;
        next.max_congestion = self.max_congestion(&next);
        next.max_heat = self.max_heat(&next);

        let reward = RewardVector {
            w: reward_wl2(dwl2, &self.cfg),
            c: (next.max_congestion - s.max_congestion).max(0.0),
            h: (next.max_heat - s.max_heat).max(0.0),
        };
        let done = next.t == next.placed_order.len();
        Ok((next, reward, done, dwl2))
    }

    /// Total wirelength recomputed from scratch, doubled units.
    pub fn total_wirelength2(&self, s: &CanvasState) -> i64 {
        let n = self.netlist.modules.len();
        let mut total = 0i64;
        for a in 0..n {
            let Some(pa) = s.positions[a] else { continue };
            let ma = &self.netlist.modules[a];
            let ca = center2(pa, ma.width, ma.height);
            for b in a + 1..n {
                let Some(pb) = s.positions[b] else { continue };
                let count = self.m.get(a, b);
                if count == 0 {
                    continue;
                }
                let mb = &self.netlist.modules[b];
                total += count as i64 * dist2(ca, center2(pb, mb.width, mb.height));
            }
        }
        total
    }

    /// Per-anchor wirelength increase for the next module, half-cell units.
    /// Illegal anchors carry `f64::INFINITY`.
    pub fn wl_increase_map(&self, s: &CanvasState) -> Vec<f64> {
        let mut map = vec![f64::INFINITY; self.cfg.cells()];
        let Some(module) = s.next_module() else {
            return map;
        };
        for a in self.legal_actions(s) {
            map[s.idx(a.x, a.y, a.z)] = self.wl_increase2(s, module, a) as f64 / 2.0;
        }
        map
    }

    /// 0/1 map of cells that changed between two consecutive states.
    pub fn difference_map(&self, before: &CanvasState, after: &CanvasState) -> Vec<f64> {
        before
            .occupancy
            .iter()
            .zip(&after.occupancy)
            .map(|(b, a)| f64::from(b != a))
            .collect()
    }

    /// Max cell of the bounding-box density map: every net with >= 2 placed
    /// pins spreads 1/|bbox| over the box spanned by its placed module
    /// centers (whole cells, centers rounded down).
    pub fn max_congestion(&self, s: &CanvasState) -> f64 {
        let mut map = vec![0.0f64; self.cfg.cells()];
        let mut any = false;
        for net in &self.netlist.nets {
            let mut lo = (usize::MAX, usize::MAX, usize::MAX);
            let mut hi = (0usize, 0usize, 0usize);
            let mut placed = 0;
            for &pin in &net.pins {
                let Some(a) = s.positions[pin] else { continue };
                let m = &self.netlist.modules[pin];
                let cx = a.x + m.width / 2;
                let cy = a.y + m.height / 2;
                lo = (lo.0.min(cx), lo.1.min(cy), lo.2.min(a.z));
                hi = (hi.0.max(cx), hi.1.max(cy), hi.2.max(a.z));
                placed += 1;
            }
            if placed < 2 {
                continue;
            }
            any = true;
            let vol = ((hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) * (hi.2 - lo.2 + 1)) as f64;
            let density = 1.0 / vol;
            for z in lo.2..=hi.2 {
                for y in lo.1..=hi.1 {
                    for x in lo.0..=hi.0 {
                        map[s.idx(x, y, z)] += density;
                    }
                }
            }
        }
        if !any {
            return 0.0;
        }
        map.iter().copied().fold(0.0, f64::max)
    }

    /// Max cell of the heat map: occupancy convolved with a cross kernel
    /// (center 1.0, lateral neighbors 0.5, vertical neighbors 1.0).
    pub fn max_heat(&self, s: &CanvasState) -> f64 {
        let (w, h, z) = (self.cfg.w as isize, self.cfg.h as isize, self.cfg.z as isize);
        let mut best = 0.0f64;
        const OFFSETS: [(isize, isize, isize, f64); 7] = [
            (0, 0, 0, 1.0),
            (1, 0, 0, 0.5),
            (-1, 0, 0, 0.5),
            (0, 1, 0, 0.5),
            (0, -1, 0, 0.5),
            (0, 0, 1, 1.0),
            (0, 0, -1, 1.0),
        ];
        for cz in 0..z {
            for cy in 0..h {
                for cx in 0..w {
                    let mut heat = 0.0;
                    for &(dx, dy, dz, k) in &OFFSETS {
                        let (nx, ny, nz) = (cx + dx, cy + dy, cz + dz);
                        if nx < 0 || ny < 0 || nz < 0 || nx >= w || ny >= h || nz >= z {
                            continue;
                        }
                        if s.occupancy[((nz * h + ny) * w + nx) as usize].is_some() {
                            heat += k;
                        }
                    }
                    best = best.max(heat);
                }
            }
        }
        best
    }

    /// Current feature maps: wl-increase for the next module plus the
    /// difference map of the previous transition.
    pub fn feature_maps(&self, prev: Option<&CanvasState>, s: &CanvasState) -> FeatureMaps {
        let diff = match prev {
            Some(p) => self.difference_map(p, s),
            None => vec![0.0; self.cfg.cells()],
        };
        FeatureMaps { wl_increase: self.wl_increase_map(s), diff }
    }
}

/// Wirelength score for an increase given in doubled units:
/// `w = D / (D + dwl)` with `D = (W-1) + (H-1) + 10(Z-1)`.
pub fn reward_wl2(dwl2: i64, cfg: &CanvasConfig) -> f64 {
    let d2 = 2 * cfg.wl_scale();
    d2 as f64 / (d2 + dwl2) as f64
}

/// Same score for an increase in half-cell units.
pub fn reward_wl(dwl_half: f64, cfg: &CanvasConfig) -> f64 {
    let d = cfg.wl_scale() as f64;
    d / (d + dwl_half)
}
