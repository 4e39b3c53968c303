//! Exhaustive enumeration of the update for small instances.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::{GlmbComponent, GlmbDensity};
use crate::error::{Error, Result};

use super::eta::{build_eta, EtaTable, RowCache};
use super::gibbs::AuxiliaryVector;
use super::FrameContext;

pub const MAX_ORACLE_ROWS: usize = 8;
pub const MAX_ORACLE_DETECTIONS: usize = 6;

/// Every positive 1-1 auxiliary vector with a non-zero score, in
/// lexicographic order of `γ`.
pub fn enumerate_hypotheses(eta: &EtaTable) -> Vec<AuxiliaryVector> {
    fn rec(
        eta: &EtaTable,
        row: usize,
        gamma: &mut Vec<i32>,
        taken: &mut [bool],
        out: &mut Vec<AuxiliaryVector>,
    ) {
        if row == eta.n_rows() {
            out.push(AuxiliaryVector(gamma.clone()));
            return;
        }
        for j in -1..=eta.n_detections() as i32 {
            if eta.log_eta(row, j) == f64::NEG_INFINITY || (j > 0 && taken[j as usize]) {
                continue;
            }
            if j > 0 {
                taken[j as usize] = true;
            }
            gamma.push(j);
            rec(eta, row + 1, gamma, taken, out);
            gamma.pop();
            if j > 0 {
                taken[j as usize] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut taken = vec![false; eta.n_detections() + 1];
    rec(eta, 0, &mut Vec::new(), &mut taken, &mut out);
    out
}

/// The untruncated update: all hypotheses of all components, merged and
/// normalised. Refuses instances above the enumeration bound.
pub fn exact_update_oracle(density: &GlmbDensity, ctx: &FrameContext<'_>) -> Result<GlmbDensity> {
    let m = ctx.observation.detections.len();
    let max_rows = density
        .components()
        .iter()
        .map(|c| c.cardinality())
        .max()
        .unwrap_or(0)
        + ctx.births.len();
    if max_rows > MAX_ORACLE_ROWS || m > MAX_ORACLE_DETECTIONS {
        return Err(Error::EnumerationBound {
            rows: max_rows,
            detections: m,
        });
    }
    let mut cache = RowCache::new();
    let mut out = Vec::new();
    for component in density.components() {
        let eta = build_eta(component, ctx, &mut cache);
        for gamma in enumerate_hypotheses(&eta) {
            let log_w = component.log_weight() + eta.log_score(&gamma.0);
            if let Some(tracks) = eta.hypothesis_tracks(&gamma.0) {
                out.push(GlmbComponent::new(log_w, tracks)?);
            }
        }
    }
    GlmbDensity::new(ctx.frame, crate::density::merge_duplicates(out)).normalize()
}

/// `Σ |ω_a - ω_b|` over the union of hypotheses, matched by merge key.
pub fn weight_l1(a: &GlmbDensity, b: &GlmbDensity) -> f64 {
    let mut map = BTreeMap::new();
    for c in a.components() {
        *map.entry(c.merge_key()).or_insert(0.0) += c.weight();
    }
    for c in b.components() {
        *map.entry(c.merge_key()).or_insert(0.0) -= c.weight();
    }
    map.values().map(|v: &f64| v.abs()).sum()
}

/// Total weight in `reference` of the hypotheses that `approx` also contains.
pub fn captured_mass(approx: &GlmbDensity, reference: &GlmbDensity) -> f64 {
    let keys: alloc::collections::BTreeSet<_> =
        approx.components().iter().map(|c| c.merge_key()).collect();
    reference
        .components()
        .iter()
        .filter(|c| keys.contains(&c.merge_key()))
        .map(|c| c.weight())
        .sum()
}
