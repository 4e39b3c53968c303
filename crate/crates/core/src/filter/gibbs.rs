//! Gibbs sampling of joint survival/birth/association hypotheses.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::eta::EtaTable;

/// One hypothesis per component row: `-1` absent (dead or not born), `0`
/// present and mis-detected, `j ≥ 1` present and associated with detection `j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuxiliaryVector(pub Vec<i32>);

impl AuxiliaryVector {
    /// No two entries share a positive value.
    pub fn is_positive_one_to_one(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.0.iter().filter(|&&j| j > 0).all(|&j| seen.insert(j))
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.0
    }
}

/// Greedy start: rows in descending order of their best score each take
/// their best column still available. `-1` and `0` are never exclusive.
pub fn init_gamma(eta: &EtaTable) -> AuxiliaryVector {
    let p = eta.n_rows();
    let m = eta.n_detections() as i32;
    let mut order: Vec<(usize, f64)> = (0..p)
        .map(|i| {
            let best = (-1..=m)
                .map(|j| eta.log_eta(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            (i, best)
        })
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut taken = vec![false; m as usize + 1];
    let mut gamma = vec![-1; p];
    for (i, _) in order {
        let mut best_j = -1;
        let mut best_v = f64::NEG_INFINITY;
        for j in -1..=m {
            if j > 0 && taken[j as usize] {
                continue;
            }
            let v = eta.log_eta(i, j);
            if v > best_v {
                best_v = v;
                best_j = j;
            }
        }
        if best_j > 0 {
            taken[best_j as usize] = true;
        }
        gamma[i] = best_j;
    }
    AuxiliaryVector(gamma)
}

/// Systematic-scan Gibbs chain over auxiliary vectors.
///
/// Each coordinate is drawn from its row of `η` with the positive columns
/// held by the other coordinates masked out.
pub struct GibbsSampler<'a> {
    eta: &'a EtaTable,
    /// Row-wise `η` rescaled by the row maximum.
    weights: Vec<Vec<f64>>,
    state: Vec<i32>,
    /// Row currently holding each positive column (index `j`).
    owner: Vec<Option<usize>>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(eta: &'a EtaTable, init: &AuxiliaryVector) -> Self {
        assert_eq!(init.0.len(), eta.n_rows(), "auxiliary vector length");
        assert!(init.is_positive_one_to_one(), "initial vector must be positive 1-1");
        let m = eta.n_detections();
        let weights = eta
            .rows()
            .iter()
            .map(|row| {
                let max = row.log_eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.log_eta
                    .iter()
                    .map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { libm::exp(v - max) })
                    .collect()
            })
            .collect();
        let mut owner = vec![None; m + 1];
        for (i, &j) in init.0.iter().enumerate() {
            if j > 0 {
                owner[j as usize] = Some(i);
            }
        }
        Self {
            eta,
            weights,
            state: init.0.clone(),
            owner,
        }
    }

    pub fn state(&self) -> &[i32] {
        &self.state
    }

    /// One full sweep over the coordinates; returns the new vector.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[i32] {
        let m = self.eta.n_detections();
        for n in 0..self.state.len() {
            let w = &self.weights[n];
            let allowed = |j: usize| -> bool { j == 0 || self.owner[j].is_none_or(|o| o == n) };
            // Column c of `w` is j = c - 1.
            let mut total = w[0] + w[1];
            for j in 1..=m {
                if allowed(j) {
                    total += w[j + 1];
                }
            }
            if !(total > 0.0) {
                // Only reachable when the absent column has zero weight.
                debug_assert!(w[0] == 0.0, "all categorical weights are zero");
                continue;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = -1i32;
            for c in 0..m + 2 {
                let j = c as i32 - 1;
                if j > 0 && !allowed(j as usize) {
                    continue;
                }
                if w[c] == 0.0 {
                    continue;
                }
                acc += w[c];
                pick = j;
                if u < acc {
                    break;
                }
            }
            let old = self.state[n];
            if old > 0 {
                self.owner[old as usize] = None;
            }
            if pick > 0 {
                self.owner[pick as usize] = Some(n);
            }
            self.state[n] = pick;
        }
        &self.state
    }
}

/// Runs `iterations` sweeps counting the initial vector as the first and
/// returns the distinct vectors in first-seen order. No burn-in is dropped.
pub fn gibbs_sample<R: Rng + ?Sized>(
    init: &AuxiliaryVector,
    iterations: usize,
    eta: &EtaTable,
    rng: &mut R,
) -> Vec<AuxiliaryVector> {
    if iterations == 0 {
        return Vec::new();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    seen.insert(init.0.clone());
    out.push(init.clone());
    let mut sampler = GibbsSampler::new(eta, init);
    for _ in 1..iterations {
        let s = sampler.sweep(rng);
        if !seen.contains(s) {
            seen.insert(s.to_vec());
            out.push(AuxiliaryVector(s.to_vec()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::eta::{EtaRow, RowKind};
    use crate::label::TrackLabel;
    use alloc::sync::Arc;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn table(rows: &[&[f64]]) -> EtaTable {
        let m = rows[0].len() - 2;
        EtaTable::from_rows(
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    Arc::new(EtaRow {
                        label: TrackLabel::new(0, i as u32),
                        kind: RowKind::Existing,
                        log_eta: r.iter().map(|&v| if v > 0.0 { libm::log(v) } else { f64::NEG_INFINITY }).collect(),
                        posteriors: vec![None; m + 1],
                        failed: false,
                    })
                })
                .collect(),
            m,
        )
    }

    #[test]
    fn greedy_single_row_takes_argmax() {
        let t = table(&[&[0.1, 0.5, 0.3]]);
        assert_eq!(init_gamma(&t).0, vec![0]);
    }

    #[test]
    fn greedy_resolves_conflicts() {
        let t = table(&[&[0.1, 0.2, 5.0], &[0.1, 0.3, 9.0]]);
        assert_eq!(init_gamma(&t).0, vec![0, 1]);
    }

    #[test]
    fn greedy_is_valid_on_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = rng.random_range(1..7);
            let m = rng.random_range(0..5);
            let rows: Vec<Vec<f64>> = (0..p)
                .map(|_| (0..m + 2).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let mut refs = refs;
            // Death column must stay feasible.
            let fixed: Vec<Vec<f64>> = refs.iter().map(|r| { let mut r = r.to_vec(); r[0] = r[0].max(1e-3); r }).collect();
            refs = fixed.iter().map(|r| r.as_slice()).collect();
            let t = table(&refs);
            let g = init_gamma(&t);
            assert!(g.is_positive_one_to_one());
            assert!(t.log_score(&g.0) > f64::NEG_INFINITY);
        }
    }

    #[test]
    fn two_state_chain_frequency() {
        let t = table(&[&[0.3, 0.7]]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut s = GibbsSampler::new(&t, &AuxiliaryVector(vec![-1]));
        let n = 100_000;
        let alive = (0..n).filter(|_| s.sweep(&mut rng)[0] == 0).count();
        let f = alive as f64 / n as f64;
        assert!((f - 0.7).abs() < 0.01, "frequency {f}");
    }

    #[test]
    fn never_shares_a_detection() {
        let t = table(&[&[0.1, 0.1, 5.0], &[0.1, 0.1, 5.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = gibbs_sample(&init_gamma(&t), 2000, &t, &mut rng);
        assert!(samples.iter().all(|g| g.0 != vec![1, 1]));
        assert!(samples.iter().all(|g| g.is_positive_one_to_one()));
        // The chain visits both single-assignment hypotheses.
        assert!(samples.contains(&AuxiliaryVector(vec![1, -1])));
        assert!(samples.contains(&AuxiliaryVector(vec![-1, 1])) || samples.contains(&AuxiliaryVector(vec![0, 1])));
    }

    #[test]
    fn zero_score_never_sampled() {
        let t = table(&[&[0.5, 0.0, 0.5, 0.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = GibbsSampler::new(&t, &AuxiliaryVector(vec![-1]));
        for _ in 0..10_000 {
            assert_ne!(s.sweep(&mut rng)[0], 0);
        }
    }

    #[test]
    fn unique_samples_include_initial() {
        let t = table(&[&[0.5, 0.5, 0.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = init_gamma(&t);
        let out = gibbs_sample(&init, 500, &t, &mut rng);
        assert_eq!(out[0], init);
        assert_eq!(out.len(), 3);
        assert!(gibbs_sample(&init, 0, &t, &mut rng).is_empty());
    }
}
