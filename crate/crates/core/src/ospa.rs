//! Optimal sub-pattern assignment distance between finite point sets.

use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OspaParams {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self {
            cutoff: 20.0,
            order: 1.0,
        }
    }
}

impl OspaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.order >= 1.0) {
            return Err(Error::InvalidParameter("OSPA needs c > 0 and p >= 1"));
        }
        Ok(())
    }
}

/// Total distance with its localisation and cardinality parts.
///
/// `total^p = loc^p + card^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OspaDistance {
    pub total: f64,
    pub localization: f64,
    pub cardinality: f64,
}

pub fn ospa(x: &[Vector2<f64>], y: &[Vector2<f64>], params: OspaParams) -> OspaDistance {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return OspaDistance {
            total: 0.0,
            localization: 0.0,
            cardinality: 0.0,
        };
    }
    let (c, p) = (params.cutoff, params.order);
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| {
            large
                .iter()
                .map(|b| libm::pow((a - b).norm().min(c), p))
                .collect()
        })
        .collect();
    let (_, loc_sum) = min_cost_assignment(&cost);
    let card_sum = libm::pow(c, p) * (n - m) as f64;
    let nf = n as f64;
    OspaDistance {
        total: libm::pow((loc_sum + card_sum) / nf, 1.0 / p),
        localization: libm::pow(loc_sum / nf, 1.0 / p),
        cardinality: libm::pow(card_sum / nf, 1.0 / p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vector2<f64>> {
        v.iter().map(|&(a, b)| Vector2::new(a, b)).collect()
    }

    #[test]
    fn identical_sets() {
        let a = pts(&[(1.0, 2.0), (30.0, 4.0)]);
        let d = ospa(&a, &a, OspaParams::default());
        assert_eq!((d.total, d.localization, d.cardinality), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_vs_nonempty_is_cutoff() {
        let a = pts(&[(1.0, 2.0)]);
        let d = ospa(&a, &[], OspaParams::default());
        assert_eq!(d.total, 20.0);
        assert_eq!(d.cardinality, 20.0);
        assert_eq!(ospa(&[], &[], OspaParams::default()).total, 0.0);
    }

    #[test]
    fn singletons() {
        let d = ospa(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)]), OspaParams::default());
        assert_relative_eq!(d.total, 5.0);
        assert_eq!(d.cardinality, 0.0);
        let d = ospa(&pts(&[(0.0, 0.0)]), &pts(&[(30.0, 40.0)]), OspaParams::default());
        assert_eq!(d.total, 20.0);
    }

    #[test]
    fn order_two_decomposition() {
        let p = OspaParams { cutoff: 10.0, order: 2.0 };
        let d = ospa(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 0.0), (50.0, 50.0)]), p);
        assert_relative_eq!(d.total, ((9.0 + 100.0) / 2.0f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d.total.powi(2), d.localization.powi(2) + d.cardinality.powi(2), epsilon = 1e-9);
    }

    fn point_set() -> impl Strategy<Value = Vec<Vector2<f64>>> {
        prop::collection::vec((0.0..60.0f64, 0.0..60.0f64), 0..4)
            .prop_map(|v| v.into_iter().map(|(a, b)| Vector2::new(a, b)).collect())
    }

    proptest! {
        #[test]
        fn metric_axioms(a in point_set(), b in point_set(), c in point_set()) {
            let p = OspaParams::default();
            let ab = ospa(&a, &b, p).total;
            prop_assert!((ab - ospa(&b, &a, p).total).abs() < 1e-9);
            prop_assert!(ab >= 0.0 && ab <= p.cutoff + 1e-12);
            prop_assert!(ab <= ospa(&a, &c, p).total + ospa(&c, &b, p).total + 1e-9);
        }
    }
}
