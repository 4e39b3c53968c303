//! Single-track Gaussian inference: linear prediction, linear detection
//! update, and a sigma-point update against an arbitrary log-likelihood.

use core::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, SymmetricEigen, Vector2, Vector4};

use crate::error::{Error, Result};

pub type StateVector = Vector4<f64>;
pub type StateCovariance = Matrix4<f64>;

/// Floor applied to the log of the sigma-point integral. A component that hits
/// it has effectively zero weight.
pub const LOG_INTEGRAL_FLOOR: f64 = -700.0;

const SYMMETRY_TOL: f64 = 1e-10;

/// Gaussian density over `[p_x, v_x, p_y, v_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: StateVector,
    pub cov: StateCovariance,
}

impl GaussianDensity {
    /// Builds a density, rejecting covariances that are not symmetric
    /// positive-definite.
    pub fn new(mean: StateVector, cov: StateCovariance) -> Result<Self> {
        let g = Self { mean, cov };
        if g.is_spd() {
            Ok(g)
        } else {
            Err(Error::Numeric("covariance is not symmetric positive-definite"))
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[2])
    }

    pub fn is_spd(&self) -> bool {
        is_spd(&self.cov)
    }

    /// Bit pattern of the mean and the upper triangle of the covariance.
    /// Two densities with equal keys are numerically identical.
    pub fn bit_key(&self) -> [u64; 14] {
        let mut key = [0u64; 14];
        for i in 0..4 {
            key[i] = self.mean[i].to_bits();
        }
        let mut k = 4;
        for r in 0..4 {
            for c in r..4 {
                key[k] = self.cov[(r, c)].to_bits();
                k += 1;
            }
        }
        key
    }
}

pub fn is_spd(cov: &StateCovariance) -> bool {
    if cov.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = cov.amax().max(1.0);
    if (cov - cov.transpose()).amax() > SYMMETRY_TOL * scale {
        return false;
    }
    cov.cholesky().is_some()
}

fn symmetrize(cov: &StateCovariance) -> StateCovariance {
    (cov + cov.transpose()) * 0.5
}

/// Upper bound on the positional standard deviation of a track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceCap {
    pub max_position_std: Option<f64>,
}

impl CovarianceCap {
    pub const NONE: Self = Self {
        max_position_std: None,
    };

    pub const fn position_std(std: f64) -> Self {
        Self {
            max_position_std: Some(std),
        }
    }
}

impl Default for CovarianceCap {
    fn default() -> Self {
        Self::position_std(10.0)
    }
}

/// Clips the eigenvalues of the positional block so no positional direction
/// has standard deviation above `max_std`.
///
/// The clipping is applied as a congruence `T P Tᵀ` where `T` shrinks only
/// the positional coordinates, so position-velocity correlation is scaled
/// consistently and the result stays positive-definite.
pub fn cap_covariance(cov: &StateCovariance, max_std: f64) -> StateCovariance {
    let cap = max_std * max_std;
    let block = Matrix2::new(cov[(0, 0)], cov[(0, 2)], cov[(2, 0)], cov[(2, 2)]);
    let eig = SymmetricEigen::new(block);
    if eig.eigenvalues.iter().all(|&l| l <= cap) {
        return *cov;
    }
    let shrink = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| {
        if l > cap {
            libm::sqrt(cap / l)
        } else {
            1.0
        }
    }));
    let t2 = eig.eigenvectors * shrink * eig.eigenvectors.transpose();
    let mut t = Matrix4::identity();
    t[(0, 0)] = t2[(0, 0)];
    t[(0, 2)] = t2[(0, 1)];
    t[(2, 0)] = t2[(1, 0)];
    t[(2, 2)] = t2[(1, 1)];
    symmetrize(&(t * cov * t.transpose()))
}

/// Linear-Gaussian prediction `m' = F m`, `P' = F P Fᵀ + Q`, followed by the
/// positional cap.
pub fn predict(
    prior: &GaussianDensity,
    transition: &Matrix4<f64>,
    process_noise: &Matrix4<f64>,
    cap: CovarianceCap,
) -> Result<GaussianDensity> {
    let mean = transition * prior.mean;
    let mut cov = symmetrize(&(transition * prior.cov * transition.transpose() + process_noise));
    if let Some(std) = cap.max_position_std {
        cov = cap_covariance(&cov, std);
    }
    GaussianDensity::new(mean, cov).map_err(|_| Error::Numeric("predicted covariance not SPD"))
}

/// Kalman update with a linear detection `z = H x + v`, `v ~ N(0, R)`.
///
/// Returns the posterior (Joseph-form covariance) and `log N(z; H m, S)`,
/// the prior-integrated detection likelihood.
pub fn kalman_update(
    prior: &GaussianDensity,
    z: &Vector2<f64>,
    obs: &Matrix2x4<f64>,
    noise: &Matrix2<f64>,
) -> Result<(GaussianDensity, f64)> {
    let s = symmetrize2(&(obs * prior.cov * obs.transpose() + noise));
    let chol = s
        .cholesky()
        .ok_or(Error::Numeric("singular innovation covariance"))?;
    let innovation = z - obs * prior.mean;
    let s_inv = chol.inverse();
    let gain = prior.cov * obs.transpose() * s_inv;
    let mean = prior.mean + gain * innovation;
    let ikh = Matrix4::identity() - gain * obs;
    let cov = symmetrize(&(ikh * prior.cov * ikh.transpose() + gain * noise * gain.transpose()));

    let l = chol.l();
    let log_det = 2.0 * (libm::log(l[(0, 0)]) + libm::log(l[(1, 1)]));
    let maha = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    let log_lik = -0.5 * maha - 0.5 * log_det - libm::log(2.0 * PI);

    let post = GaussianDensity::new(mean, cov)
        .map_err(|_| Error::Numeric("posterior covariance not SPD"))?;
    Ok((post, log_lik))
}

fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Unscented-transform spread parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtConfig {
    /// `kappa = 1` keeps a strictly positive weight on the central point.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 1.0,
        }
    }
}

impl UtConfig {
    const DIM: f64 = 4.0;

    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (Self::DIM + self.kappa) - Self::DIM
    }

    /// Mean weights `(w_0, w_i)` and the central covariance weight.
    pub fn weights(&self) -> (f64, f64, f64) {
        let lambda = self.lambda();
        let w0 = lambda / (Self::DIM + lambda);
        let wi = 1.0 / (2.0 * (Self::DIM + lambda));
        let wc0 = w0 + 1.0 - self.alpha * self.alpha + self.beta;
        (w0, wi, wc0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter("ut alpha must lie in (0, 1]"));
        }
        if Self::DIM + self.lambda() <= 0.0 || self.weights().0 < 0.0 {
            return Err(Error::InvalidParameter(
                "ut parameters give a negative central weight",
            ));
        }
        Ok(())
    }
}

/// The `2n + 1` sigma points of a density, in the order: centre, `+` columns,
/// `-` columns.
pub fn sigma_points(prior: &GaussianDensity, cfg: &UtConfig) -> Result<[StateVector; 9]> {
    let scaled = prior.cov * (4.0 + cfg.lambda());
    let chol = scaled
        .cholesky()
        .ok_or(Error::Numeric("sigma-point factorisation failed"))?;
    let l = chol.l();
    let mut pts = [prior.mean; 9];
    for c in 0..4 {
        let col = l.column(c).into_owned();
        pts[1 + c] = prior.mean + col;
        pts[5 + c] = prior.mean - col;
    }
    Ok(pts)
}

/// Sigma-point update against a non-linear log-likelihood.
///
/// The sigma points of the prior are reweighted by `w_i exp(loglik(χ_i))`
/// and moment matched. The second return value is
/// `log Σ w_i exp(loglik(χ_i))`, an estimate of the prior-integrated
/// likelihood, floored at [`LOG_INTEGRAL_FLOOR`]; at the floor the prior is
/// returned unchanged.
pub fn unscented_update<F>(
    prior: &GaussianDensity,
    mut loglik: F,
    cfg: &UtConfig,
) -> Result<(GaussianDensity, f64)>
where
    F: FnMut(&StateVector) -> Result<f64>,
{
    let pts = sigma_points(prior, cfg)?;
    let (w0, wi, wc0) = cfg.weights();
    let mut logs = [0.0; 9];
    for (l, p) in logs.iter_mut().zip(pts.iter()) {
        *l = loglik(p)?;
        if l.is_nan() {
            return Err(Error::Numeric("log-likelihood is NaN at a sigma point"));
        }
    }
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return Ok((prior.clone(), LOG_INTEGRAL_FLOOR));
    }
    let mut u = [0.0; 9];
    for i in 0..9 {
        let w = if i == 0 { w0 } else { wi };
        u[i] = w * libm::exp(logs[i] - lmax);
    }
    let z: f64 = u.iter().sum();
    if !(z > 0.0) {
        return Ok((prior.clone(), LOG_INTEGRAL_FLOOR));
    }
    let log_integral = lmax + libm::log(z);
    if log_integral <= LOG_INTEGRAL_FLOOR {
        return Ok((prior.clone(), LOG_INTEGRAL_FLOOR));
    }

    let mut mean = StateVector::zeros();
    for i in 0..9 {
        mean += pts[i] * u[i];
    }
    mean /= z;
    let mut cov = StateCovariance::zeros();
    for i in 0..9 {
        let d = pts[i] - mean;
        let w = if i == 0 {
            wc0 * libm::exp(logs[0] - lmax)
        } else {
            u[i]
        };
        cov += d * d.transpose() * w;
    }
    cov = symmetrize(&(cov / z));
    let cov = regularize(cov)?;
    Ok((GaussianDensity { mean, cov }, log_integral))
}

/// Adds the smallest diagonal jitter (relative to the trace) that makes the
/// matrix factorisable.
fn regularize(cov: StateCovariance) -> Result<StateCovariance> {
    if is_spd(&cov) {
        return Ok(cov);
    }
    let base = (cov.trace() / 4.0).abs().max(1e-12);
    let mut eps = base * 1e-10;
    for _ in 0..12 {
        let candidate = cov + StateCovariance::identity() * eps;
        if is_spd(&candidate) {
            return Ok(candidate);
        }
        eps *= 10.0;
    }
    Err(Error::Numeric("posterior covariance could not be regularised"))
}

/// Log-density of a bivariate normal.
pub fn log_normal2(x: &Vector2<f64>, mean: &Vector2<f64>, cov: &Matrix2<f64>) -> Option<f64> {
    let chol = cov.cholesky()?;
    let d = x - mean;
    let maha = (d.transpose() * chol.inverse() * d)[(0, 0)];
    let l = chol.l();
    let log_det = 2.0 * (libm::log(l[(0, 0)]) + libm::log(l[(1, 1)]));
    Some(-0.5 * maha - 0.5 * log_det - libm::log(2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn position_obs() -> Matrix2x4<f64> {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    }

    fn cv(ts: f64) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 1)] = ts;
        f[(2, 3)] = ts;
        f
    }

    fn cv_noise(sigma_v: f64) -> Matrix4<f64> {
        let g = nalgebra::Matrix4x2::new(0.5, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 1.0);
        g * g.transpose() * (sigma_v * sigma_v)
    }

    fn prior() -> GaussianDensity {
        GaussianDensity::new(
            Vector4::new(5.0, 1.0, 5.0, 0.0),
            Matrix4::from_diagonal(&Vector4::new(4.0, 1.0, 9.0, 2.0)),
        )
        .unwrap()
    }

    #[test]
    fn identity_prediction_is_a_no_op() {
        let p = prior();
        let out = predict(&p, &Matrix4::identity(), &Matrix4::zeros(), CovarianceCap::NONE).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn cv_prediction_moves_position() {
        let out = predict(&prior(), &cv(1.0), &Matrix4::zeros(), CovarianceCap::NONE).unwrap();
        assert_eq!(out.mean, Vector4::new(6.0, 1.0, 5.0, 0.0));
    }

    #[test]
    fn process_noise_increases_trace() {
        let p = prior();
        let out = predict(&p, &cv(1.0), &cv_noise(1.0), CovarianceCap::NONE).unwrap();
        let no_noise = predict(&p, &cv(1.0), &Matrix4::zeros(), CovarianceCap::NONE).unwrap();
        // F P Fᵀ adds P_vv to P_pp; Q adds 2 * (1/4 + 1).
        assert_relative_eq!(no_noise.cov.trace(), p.cov.trace() + 1.0 + 2.0, epsilon = 1e-12);
        assert_relative_eq!(out.cov.trace(), no_noise.cov.trace() + 2.5, epsilon = 1e-12);
    }

    #[test]
    fn flat_measurement_leaves_prior() {
        let p = prior();
        let r = Matrix2::identity() * 1e12;
        let (post, ll) = kalman_update(&p, &Vector2::new(40.0, -3.0), &position_obs(), &r).unwrap();
        assert!((post.mean - p.mean).amax() < 1e-8);
        assert!((post.cov - p.cov).amax() < 1e-8);
        // ≈ -log(2π·1e12)
        assert_relative_eq!(ll, -libm::log(2.0 * PI * 1e12), epsilon = 1e-6);
    }

    #[test]
    fn dogmatic_prior_ignores_measurement() {
        let p = GaussianDensity {
            mean: Vector4::new(1.0, 2.0, 3.0, 4.0),
            cov: Matrix4::identity() * 1e-14,
        };
        let (post, _) = kalman_update(&p, &Vector2::new(50.0, 50.0), &position_obs(), &Matrix2::identity()).unwrap();
        assert!((post.mean - p.mean).amax() < 1e-9);
    }

    /// Independent scalar Kalman filter per axis. Valid when the prior has no
    /// x/y cross-covariance and the noise is diagonal.
    fn scalar_axis(mp: f64, mv: f64, ppp: f64, ppv: f64, pvv: f64, z: f64, r: f64) -> (f64, f64, f64, f64, f64, f64) {
        let s = ppp + r;
        let kp = ppp / s;
        let kv = ppv / s;
        let nu = z - mp;
        let loglik = -0.5 * nu * nu / s - 0.5 * libm::log(2.0 * PI * s);
        (mp + kp * nu, mv + kv * nu, ppp - kp * ppp, ppv - kp * ppv, pvv - kv * ppv, loglik)
    }

    #[test]
    fn kalman_matches_scalar_oracle() {
        let mut cov = Matrix4::from_diagonal(&Vector4::new(9.0, 2.0, 5.0, 1.5));
        cov[(0, 1)] = 1.2;
        cov[(1, 0)] = 1.2;
        cov[(2, 3)] = -0.7;
        cov[(3, 2)] = -0.7;
        let p = GaussianDensity::new(Vector4::new(10.0, 1.0, 20.0, -1.0), cov).unwrap();
        let z = Vector2::new(13.0, 17.5);
        let r = Matrix2::from_diagonal(&Vector2::new(16.0, 16.0));
        let (post, ll) = kalman_update(&p, &z, &position_obs(), &r).unwrap();
        let x = scalar_axis(10.0, 1.0, 9.0, 1.2, 2.0, 13.0, 16.0);
        let y = scalar_axis(20.0, -1.0, 5.0, -0.7, 1.5, 17.5, 16.0);
        assert_relative_eq!(post.mean[0], x.0, epsilon = 1e-12);
        assert_relative_eq!(post.mean[1], x.1, epsilon = 1e-12);
        assert_relative_eq!(post.mean[2], y.0, epsilon = 1e-12);
        assert_relative_eq!(post.mean[3], y.1, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(0, 0)], x.2, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(0, 1)], x.3, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(1, 1)], x.4, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(2, 2)], y.2, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(2, 3)], y.3, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(3, 3)], y.4, epsilon = 1e-12);
        assert_relative_eq!(ll, x.5 + y.5, epsilon = 1e-12);
    }

    #[test]
    fn predictive_likelihood_integrates_to_one() {
        let p = prior();
        let r = Matrix2::from_diagonal(&Vector2::new(16.0, 16.0));
        // Midpoint rule over ±10 standard deviations.
        let (cx, cy) = (5.0, 5.0);
        let h = 0.25;
        let half = 160;
        let mut total = 0.0;
        for i in -half..half {
            for j in -half..half {
                let z = Vector2::new(cx + (i as f64 + 0.5) * h, cy + (j as f64 + 0.5) * h);
                let (_, ll) = kalman_update(&p, &z, &position_obs(), &r).unwrap();
                total += libm::exp(ll) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn flat_loglik_returns_prior() {
        let p = prior();
        let (post, li) = unscented_update(&p, |_| Ok(0.0), &UtConfig::default()).unwrap();
        assert_relative_eq!(li, 0.0, epsilon = 1e-14);
        assert!((post.mean - p.mean).amax() < 1e-12);
        assert!((post.cov - p.cov).amax() < 1e-12);
    }

    #[test]
    fn peaked_loglik_pulls_toward_point() {
        let p = prior();
        let cfg = UtConfig::default();
        let pts = sigma_points(&p, &cfg).unwrap();
        let target = pts[1];
        let (post, li) = unscented_update(
            &p,
            |x| Ok(if (x - target).amax() < 1e-9 { 8.0 } else { 0.0 }),
            &cfg,
        )
        .unwrap();
        // Direct weighted-moment computation.
        let (w0, wi, _) = cfg.weights();
        let z = w0 + 7.0 * wi + wi * libm::exp(8.0);
        assert_relative_eq!(li, libm::log(z), epsilon = 1e-12);
        let mut mean = p.mean * w0;
        for (k, pt) in pts.iter().enumerate().skip(1) {
            mean += pt * if k == 1 { wi * libm::exp(8.0) } else { wi };
        }
        mean /= z;
        assert!((post.mean - mean).amax() < 1e-10);
        assert!((post.mean - target).norm() < (p.mean - target).norm());
        assert!(post.cov[(1, 1)] <= p.cov[(1, 1)] + 1e-12);
        assert!(post.is_spd());
    }

    #[test]
    fn weak_gaussian_loglik_approaches_kalman() {
        // The moment-matched sigma-point posterior converges to the Kalman
        // posterior as the likelihood flattens relative to the prior. Mean and
        // log integral errors are second order in prior/noise variance, the
        // covariance error first order.
        let p = prior();
        let cfg = UtConfig::default();
        let z = Vector2::new(6.0, 4.0);
        for &r in &[1e3, 1e4, 1e5] {
            let rm = Matrix2::identity() * r;
            let (kf, kf_ll) = kalman_update(&p, &z, &position_obs(), &rm).unwrap();
            let (ut, ut_ll) = unscented_update(
                &p,
                |x| Ok(log_normal2(&z, &Vector2::new(x[0], x[2]), &rm).unwrap()),
                &cfg,
            )
            .unwrap();
            let ratio = 9.0 / r;
            assert!((ut.mean - kf.mean).amax() < 2.0 * ratio * ratio, "r={r}");
            assert!((ut.cov - kf.cov).norm() < 20.0 * ratio, "r={r}");
            assert!((ut_ll - kf_ll).abs() < ratio * ratio, "r={r}");
        }
    }

    #[test]
    fn cap_is_identity_below_bound() {
        let c = prior().cov;
        assert_eq!(cap_covariance(&c, 10.0), c);
    }

    #[test]
    fn cap_clips_positional_variance() {
        let c = Matrix4::from_diagonal(&Vector4::new(1e6, 1.0, 1e6, 1.0));
        let out = cap_covariance(&c, 10.0);
        assert_relative_eq!(out[(0, 0)], 100.0, epsilon = 1e-9);
        assert_relative_eq!(out[(2, 2)], 100.0, epsilon = 1e-9);
        assert_relative_eq!(out[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out[(3, 3)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ut_defaults_are_valid() {
        let cfg = UtConfig::default();
        cfg.validate().unwrap();
        let (w0, wi, _) = cfg.weights();
        assert!(w0 > 0.0);
        assert_relative_eq!(w0 + 8.0 * wi, 1.0, epsilon = 1e-14);
        assert!(UtConfig { alpha: 0.5, beta: 2.0, kappa: 0.0 }.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spd() -> impl Strategy<Value = Matrix4<f64>> {
            (prop::array::uniform16(-3.0f64..3.0), prop::array::uniform4(0.01f64..5.0)).prop_map(|(a, d)| {
                let a = Matrix4::from_row_slice(&a);
                a * a.transpose() * 40.0 + Matrix4::from_diagonal(&Vector4::from(d))
            })
        }

        fn sorted_eigs(m: &Matrix4<f64>) -> [f64; 4] {
            let mut e: [f64; 4] = SymmetricEigen::new(*m).eigenvalues.into();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            e
        }

        proptest! {
            #[test]
            fn cap_keeps_spd_and_shrinks_spectrum(c in spd(), cap in 1.0f64..20.0) {
                let out = cap_covariance(&c, cap);
                prop_assert!(is_spd(&out));
                let block = Matrix2::new(out[(0, 0)], out[(0, 2)], out[(2, 0)], out[(2, 2)]);
                let max_pos = SymmetricEigen::new(block).eigenvalues.max();
                prop_assert!(max_pos <= cap * cap * (1.0 + 1e-9));
                let before = sorted_eigs(&c);
                let after = sorted_eigs(&out);
                for i in 0..4 {
                    prop_assert!(after[i] <= before[i] * (1.0 + 1e-9) + 1e-9);
                }
            }

            #[test]
            fn updates_return_spd(c in spd(), zx in -20.0f64..20.0, zy in -20.0f64..20.0) {
                let p = GaussianDensity::new(Vector4::zeros(), c).unwrap();
                let r = Matrix2::identity() * 16.0;
                let (kf, _) = kalman_update(&p, &Vector2::new(zx, zy), &position_obs(), &r).unwrap();
                prop_assert!(kf.is_spd());
                let (ut, _) = unscented_update(&p, |x| Ok(-0.1 * ((x[0] - zx).powi(2) + (x[2] - zy).powi(2))), &UtConfig::default()).unwrap();
                prop_assert!(ut.is_spd());
            }
        }
    }
}
