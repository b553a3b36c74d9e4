//! Continuous-to-discrete action machinery: anchor normalization into the
//! unit cube, exact k-NN over the legal anchor set, and critic-guided
//! candidate selection by L1 distance to the target return-to-go.

use crate::env::{Anchor, CanvasConfig};
use crate::{Result, SgfError};

/// A point in `[0,1]^3`: the actor's proposal space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousAction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ContinuousAction {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        ContinuousAction { x, y, z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ContinuousAction { x: a[0], y: a[1], z: a[2] }
    }

    pub fn dist(&self, other: &ContinuousAction) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Anchor coordinates mapped onto `[0,1]^3` by the full canvas extents.
/// The same map is used for every module, so the actor's output space does
/// not depend on the footprint being placed.
pub fn normalize(a: Anchor, cfg: &CanvasConfig) -> ContinuousAction {
    let axis = |v: usize, extent: usize| {
        if extent <= 1 {
            0.0
        } else {
            v as f64 / (extent - 1) as f64
        }
    };
    ContinuousAction::new(axis(a.x, cfg.w), axis(a.y, cfg.h), axis(a.z, cfg.z))
}

/// The k nearest legal anchors to a proposal, closest first.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// `(anchor, normalized distance to the proposal)`, nondecreasing.
    pub candidates: Vec<(Anchor, f64)>,
    /// Distance of the nearest candidate.
    pub psi_k: f64,
}

impl CandidateSet {
    pub fn anchors(&self) -> impl Iterator<Item = Anchor> + '_ {
        self.candidates.iter().map(|&(a, _)| a)
    }
}

/// Exact k nearest neighbors of `alpha` among the legal anchors, measured
/// in normalized space. Distance ties break by ascending (x, y, z).
pub fn knn(
    alpha: ContinuousAction,
    legal: &[Anchor],
    k: usize,
    cfg: &CanvasConfig,
) -> Result<CandidateSet> {
    if legal.is_empty() {
        return Err(SgfError::IllegalAction("k-NN over an empty legal set".into()));
    }
    if k == 0 {
        return Err(SgfError::Invalid("k must be >= 1".into()));
    }
    let mut scored: Vec<(Anchor, f64)> =
        legal.iter().map(|&a| (a, normalize(a, cfg).dist(&alpha))).collect();
    scored.sort_by(|(a, da), (b, db)| {
        da.partial_cmp(db).expect("finite distances").then_with(|| a.cmp(b))
    });
    scored.truncate(k);
    let psi_k = scored[0].1;
    Ok(CandidateSet { candidates: scored, psi_k })
}

/// Index of the prediction closest to the target in summed L1 distance
/// over the three return components. Ties go to the smallest index, i.e.
/// the nearest candidate when predictions follow k-NN order.
pub fn select_action(predictions: &[[f64; 3]], target: [f64; 3]) -> usize {
    select_action_weighted(predictions, target, [1.0, 1.0, 1.0])
}

/// L1 argmin with per-component weights.
pub fn select_action_weighted(
    predictions: &[[f64; 3]],
    target: [f64; 3],
    weights: [f64; 3],
) -> usize {
    assert!(!predictions.is_empty(), "select_action needs at least one prediction");
    let score = |p: &[f64; 3]| {
        (0..3).map(|i| weights[i] * (p[i] - target[i]).abs()).sum::<f64>()
    };
    let mut best = 0;
    let mut best_score = score(&predictions[0]);
    for (i, p) in predictions.iter().enumerate().skip(1) {
        let s = score(p);
        if s < best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg662() -> CanvasConfig {
        CanvasConfig::new(6, 6, 2).unwrap()
    }

    #[test]
    fn normalize_extremes() {
        let big = CanvasConfig::new(48, 48, 3).unwrap();
        assert_eq!(normalize(Anchor::new(0, 0, 0), &big).as_array(), [0.0, 0.0, 0.0]);
        assert_eq!(normalize(Anchor::new(47, 47, 2), &big).as_array(), [1.0, 1.0, 1.0]);
        let a = normalize(Anchor::new(2, 3, 1), &cfg662());
        assert_eq!(a.as_array(), [0.4, 0.6, 1.0]);
    }

    #[test]
    fn normalize_single_layer() {
        let flat = CanvasConfig::new(8, 8, 1).unwrap();
        assert_eq!(normalize(Anchor::new(3, 3, 0), &flat).z, 0.0);
    }

    #[test]
    fn knn_center_proposal() {
        // Empty 6x6x2 canvas, 2x2 module: anchors 0..=4 per axis, layers 0..2.
        let cfg = cfg662();
        let mut legal = Vec::new();
        for z in 0..2 {
            for y in 0..=4 {
                for x in 0..=4 {
                    legal.push(Anchor::new(x, y, z));
                }
            }
        }
        let out = knn(ContinuousAction::new(0.5, 0.5, 0.0), &legal, 4, &cfg).unwrap();
        let anchors: Vec<Anchor> = out.anchors().collect();
        assert_eq!(
            anchors,
            vec![
                Anchor::new(2, 2, 0),
                Anchor::new(2, 3, 0),
                Anchor::new(3, 2, 0),
                Anchor::new(3, 3, 0)
            ]
        );
        let expect = (0.1f64 * 0.1 + 0.1 * 0.1).sqrt();
        for &(_, d) in &out.candidates {
            assert!((d - expect).abs() < 1e-12);
        }
        assert!((out.psi_k - expect).abs() < 1e-12);
    }

    #[test]
    fn knn_exact_hit_and_truncation() {
        let cfg = cfg662();
        let legal = vec![Anchor::new(1, 1, 0), Anchor::new(4, 4, 1)];
        let alpha = normalize(Anchor::new(1, 1, 0), &cfg);
        let out = knn(alpha, &legal, 1, &cfg).unwrap();
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].0, Anchor::new(1, 1, 0));
        assert_eq!(out.psi_k, 0.0);

        let out = knn(alpha, &legal, 10, &cfg).unwrap();
        assert_eq!(out.candidates.len(), 2);
    }

    #[test]
    fn knn_empty_legal_errors() {
        let err = knn(ContinuousAction::new(0.5, 0.5, 0.5), &[], 3, &cfg662()).unwrap_err();
        assert!(err.to_string().contains("empty legal set"));
    }

    #[test]
    fn select_action_l1() {
        let preds = [[5.0, 1.0, 1.0], [7.0, 1.0, 1.0], [6.5, 1.0, 1.0]];
        assert_eq!(select_action(&preds, [6.6, 1.0, 1.0]), 2);
        assert_eq!(select_action(&preds[..1], [0.0, 0.0, 0.0]), 0);
        // Equal L1 error: earlier index wins.
        let tied = [[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        assert_eq!(select_action(&tied, [2.0, 0.0, 0.0]), 0);
    }
}
