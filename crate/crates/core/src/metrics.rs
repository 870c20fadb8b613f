//! Distortion, exact and sliced Wasserstein perception metrics, and the
//! closed-form Gaussian rate-distortion-perception bounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Mean and diagonal covariance of a Gaussian source or reconstruction
/// marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub diag_cov: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, diag_cov: Vec<f64>) -> Result<Self> {
        if mean.len() != diag_cov.len() {
            return Err(Error::Config("mean/covariance length mismatch".into()));
        }
        if diag_cov.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(
                "diagonal covariance entries must be positive".into(),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("mean entries must be finite".into()));
        }
        Ok(GaussianSpec { mean, diag_cov })
    }

    /// i.i.d. N(mean, var) in `dim` dimensions.
    pub fn iid(dim: usize, mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean; dim], vec![var; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.diag_cov)
            .map(|(&m, &v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Empirical mean and per-coordinate variance of a sample batch
    /// (biased-variance-free, but variances may be zero for degenerate data).
    pub fn from_moments(batch: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let n = batch[0].len();
        let m = batch.len() as f64;
        let mut mean = vec![0.0; n];
        for x in batch {
            for (a, &b) in mean.iter_mut().zip(x) {
                *a += b;
            }
        }
        for a in mean.iter_mut() {
            *a /= m;
        }
        let mut var = vec![0.0; n];
        for x in batch {
            for i in 0..n {
                let d = x[i] - mean[i];
                var[i] += d * d;
            }
        }
        for a in var.iter_mut() {
            *a /= m - 1.0;
        }
        Ok((mean, var))
    }
}

/// Per-dimension mean squared error between paired batches, with its
/// standard error over the batch.
pub fn mse_per_dim(x: &[Vec<f64>], xhat: &[Vec<f64>]) -> Result<(f64, f64)> {
    if x.len() != xhat.len() || x.is_empty() {
        return Err(Error::Input(
            "batches must be non-empty and equal length".into(),
        ));
    }
    let n = x[0].len() as f64;
    let m = x.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (a, b) in x.iter().zip(xhat) {
        if a.len() != b.len() || a.len() != x[0].len() {
            return Err(Error::Input("ragged batch shapes".into()));
        }
        let v = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / m;
    let var = ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

/// Closed-form per-dimension squared 2-Wasserstein distance between diagonal
/// Gaussians: `(1/n) Σ_i (m_i^a - m_i^b)² + (σ_i^a - σ_i^b)²`.
pub fn gaussian_w2sq_per_dim(a: &GaussianSpec, b: &GaussianSpec) -> Result<f64> {
    gaussian_w2sq_from_moments(&a.mean, &a.diag_cov, &b.mean, &b.diag_cov)
}

/// Same closed form on raw moments; accepts zero variances (degenerate
/// reconstruction marginals).
pub fn gaussian_w2sq_from_moments(
    mean_a: &[f64],
    var_a: &[f64],
    mean_b: &[f64],
    var_b: &[f64],
) -> Result<f64> {
    if mean_a.len() != mean_b.len() || var_a.len() != var_b.len() || mean_a.len() != var_a.len() {
        return Err(Error::Input("dimension mismatch".into()));
    }
    let n = mean_a.len() as f64;
    let mut acc = 0.0;
    for i in 0..mean_a.len() {
        let dm = mean_a[i] - mean_b[i];
        let ds = var_a[i].sqrt() - var_b[i].sqrt();
        acc += dm * dm + ds * ds;
    }
    Ok(acc / n)
}

/// Empirical per-dimension squared sliced 2-Wasserstein distance.
///
/// Averages, over random unit directions, the squared 1-D Wasserstein
/// distance between the projected empirical distributions (order-statistic
/// coupling on equal-size samples). A unit-direction projection of an
/// n-dimensional batch already lives on the per-dimension scale, so no
/// further normalization is applied. The standard error is across
/// projections.
pub fn sliced_w2sq(
    samples_a: &[Vec<f64>],
    samples_b: &[Vec<f64>],
    n_projections: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if samples_a.len() != samples_b.len() || samples_a.is_empty() {
        return Err(Error::Contract(
            "quantile coupling requires equal, nonzero sample counts".into(),
        ));
    }
    if n_projections == 0 {
        return Err(Error::Input("need at least one projection".into()));
    }
    let dim = samples_a[0].len();
    if samples_b[0].len() != dim {
        return Err(Error::Input("dimension mismatch".into()));
    }
    let m = samples_a.len();
    let mut pa = vec![0.0; m];
    let mut pb = vec![0.0; m];
    let mut vals = Vec::with_capacity(n_projections);
    for _ in 0..n_projections {
        let mut theta: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            theta[0] = 1.0;
        } else {
            for v in theta.iter_mut() {
                *v /= norm;
            }
        }
        for (o, s) in pa.iter_mut().zip(samples_a) {
            *o = dot(s, &theta);
        }
        for (o, s) in pb.iter_mut().zip(samples_b) {
            *o = dot(s, &theta);
        }
        pa.sort_by(f64::total_cmp);
        pb.sort_by(f64::total_cmp);
        let w2: f64 = pa
            .iter()
            .zip(&pb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / m as f64;
        vals.push(w2);
    }
    let k = n_projections as f64;
    let mean = vals.iter().sum::<f64>() / k;
    if n_projections == 1 {
        return Ok((mean, 0.0));
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Perception value treated as unconstrained (the classical rate-distortion
/// branch).
pub const PERCEPTION_UNCONSTRAINED: f64 = f64::INFINITY;

fn rdp_check_domain(sigma2: f64, d: f64, p: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if !(d > 0.0) || d > 2.0 * sigma2 || !d.is_finite() {
        return Err(Error::Domain(format!(
            "distortion must lie in (0, 2σ²] = (0, {}], got {d}",
            2.0 * sigma2
        )));
    }
    if p < 0.0 || p.is_nan() {
        return Err(Error::Domain(format!(
            "perception must be in [0, ∞], got {p}"
        )));
    }
    Ok(())
}

/// Whether (D, P) falls in the perception-active branch
/// `√P < σ - √|σ² - D|`.
pub fn rdp_perception_active(sigma2: f64, d: f64, p: f64) -> bool {
    if p.is_infinite() {
        return false;
    }
    let sigma = sigma2.sqrt();
    p.sqrt() < sigma - (sigma2 - d).abs().sqrt()
}

/// The Gaussian rate-distortion-perception function (bits), for squared
/// error distortion and squared 2-Wasserstein perception:
///
/// - perception-active branch:
///   `½ log2[ σ²(σ-√P)² / (σ²(σ-√P)² - ((σ² + (σ-√P)² - D)/2)²) ]`
/// - otherwise the classical `max{½ log2(σ²/D), 0}`.
pub fn gaussian_rdp(sigma2: f64, d: f64, p: f64) -> Result<f64> {
    rdp_check_domain(sigma2, d, p)?;
    if rdp_perception_active(sigma2, d, p) {
        let sigma = sigma2.sqrt();
        let t = (sigma - p.sqrt()).powi(2);
        let num = sigma2 * t;
        let half = (sigma2 + t - d) / 2.0;
        let den = num - half * half;
        if den <= 0.0 {
            return Err(Error::Domain(
                "perception-active branch degenerate (D too small for this P)".into(),
            ));
        }
        Ok(0.5 * (num / den).log2())
    } else {
        Ok((0.5 * (sigma2 / d).log2()).max(0.0))
    }
}

/// Parameters of the jointly Gaussian channel achieving the RDP optimum:
/// the reconstruction marginal variance and the cross-covariance θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdpChannel {
    pub xhat_marginal_var: f64,
    pub cross_cov: f64,
}

/// The RDP-optimal joint-Gaussian channel parameters for the applicable
/// branch. Perception-active: marginal `(σ-√P)²`,
/// `θ = max{½(σ² + (σ-√P)² - D), 0}`; otherwise marginal `σ² - D` with the
/// classical `θ = σ² - D`.
pub fn gaussian_rdp_channel(sigma2: f64, d: f64, p: f64) -> Result<RdpChannel> {
    rdp_check_domain(sigma2, d, p)?;
    if rdp_perception_active(sigma2, d, p) {
        let sigma = sigma2.sqrt();
        let v = (sigma - p.sqrt()).powi(2);
        let theta = (0.5 * (sigma2 + v - d)).max(0.0);
        Ok(RdpChannel {
            xhat_marginal_var: v,
            cross_cov: theta,
        })
    } else {
        if d >= sigma2 {
            return Err(Error::Domain(
                "classical branch requires D < σ² for a non-degenerate channel".into(),
            ));
        }
        let v = sigma2 - d;
        Ok(RdpChannel {
            xhat_marginal_var: v,
            cross_cov: v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn mse_examples() {
        let x = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        let (m, _) = mse_per_dim(&x, &x).unwrap();
        assert_eq!(m, 0.0);

        let shifted: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().map(|v| v + 0.7).collect())
            .collect();
        let (m, _) = mse_per_dim(&x, &shifted).unwrap();
        assert!((m - 0.49).abs() < 1e-12);

        let mut rng = substream(4, "mse", 0);
        let spec = GaussianSpec::iid(4, 0.0, 1.0).unwrap();
        let xs: Vec<Vec<f64>> = (0..100_000).map(|_| spec.sample(&mut rng)).collect();
        let zeros = vec![vec![0.0; 4]; xs.len()];
        let (m, se) = mse_per_dim(&xs, &zeros).unwrap();
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn gaussian_w2_examples() {
        let a = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
        assert_eq!(gaussian_w2sq_per_dim(&a, &a).unwrap(), 0.0);

        let b = GaussianSpec::iid(8, 1.0, 1.0).unwrap();
        let c = GaussianSpec::iid(8, 0.0, 2.0).unwrap();
        let v = gaussian_w2sq_per_dim(&b, &c).unwrap();
        assert!((v - (1.0 + (1.0 - 2f64.sqrt()).powi(2))).abs() < 1e-12);

        // N(0, σ²) vs N(0, (σ-√P)²) has per-dim W2² exactly P.
        let p = 0.23f64;
        let sigma = 1.7f64;
        let d = GaussianSpec::iid(3, 0.0, sigma * sigma).unwrap();
        let e = GaussianSpec::iid(3, 0.0, (sigma - p.sqrt()).powi(2)).unwrap();
        assert!((gaussian_w2sq_per_dim(&d, &e).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn sliced_is_zero_on_identical_and_symmetric() {
        let mut rng = substream(6, "sw", 0);
        let spec = GaussianSpec::iid(8, 0.0, 1.0).unwrap();
        let a: Vec<Vec<f64>> = (0..500).map(|_| spec.sample(&mut rng)).collect();
        let (v, se) = sliced_w2sq(&a, &a, 16, &mut substream(6, "sw", 1)).unwrap();
        assert_eq!((v, se), (0.0, 0.0));

        let b: Vec<Vec<f64>> = (0..500).map(|_| spec.sample(&mut rng)).collect();
        let (vab, _) = sliced_w2sq(&a, &b, 16, &mut substream(6, "sw", 2)).unwrap();
        let (vba, _) = sliced_w2sq(&b, &a, 16, &mut substream(6, "sw", 2)).unwrap();
        assert_eq!(vab, vba);
    }

    #[test]
    fn sliced_rejects_unequal_counts() {
        let a = vec![vec![0.0; 2]; 10];
        let b = vec![vec![0.0; 2]; 11];
        assert!(sliced_w2sq(&a, &b, 4, &mut substream(0, "sw", 3)).is_err());
    }

    #[test]
    fn sliced_matches_exact_for_isotropic_gaussians() {
        // For isotropic Gaussian pairs the sliced estimator targets the
        // per-dimension exact W2².
        let mut rng = substream(6, "sw", 4);
        let sa = GaussianSpec::iid(8, 1.0, 1.0).unwrap();
        let sb = GaussianSpec::iid(8, 0.0, 4.0).unwrap();
        let a: Vec<Vec<f64>> = (0..4000).map(|_| sa.sample(&mut rng)).collect();
        let b: Vec<Vec<f64>> = (0..4000).map(|_| sb.sample(&mut rng)).collect();
        let (v, se) = sliced_w2sq(&a, &b, 64, &mut rng).unwrap();
        let exact = gaussian_w2sq_per_dim(&sa, &sb).unwrap();
        assert!(
            (v - exact).abs() < 3.0 * se + 0.05,
            "v={v} exact={exact} se={se}"
        );
    }

    #[test]
    fn rdp_spot_values() {
        assert!((gaussian_rdp(1.0, 0.25, f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
        let r = gaussian_rdp(1.0, 1.0, 0.0).unwrap();
        assert!((r - 0.5 * (4.0f64 / 3.0).log2()).abs() < 1e-12);
        assert_eq!(gaussian_rdp(1.0, 2.0, 0.0).unwrap(), 0.0);
        assert!(gaussian_rdp(1.0, 0.0, 0.0).is_err());
        assert!(gaussian_rdp(1.0, 2.5, 0.0).is_err());
    }

    #[test]
    fn rdp_branch_continuity() {
        for &d in &[0.3, 0.8, 1.2, 1.9] {
            let sigma = 1.0f64;
            let boundary = (sigma - (1.0f64 - d).abs().sqrt()).powi(2);
            let lo = gaussian_rdp(1.0, d, boundary * (1.0 - 1e-12)).unwrap();
            let hi = gaussian_rdp(1.0, d, boundary * (1.0 + 1e-12)).unwrap();
            assert!((lo - hi).abs() < 1e-9, "d={d} lo={lo} hi={hi}");
        }
    }

    #[test]
    fn rdp_monotone_in_d_and_p() {
        let ds: Vec<f64> = (1..=50).map(|i| 0.04 * i as f64).collect();
        let ps: Vec<f64> = (0..50).map(|i| 0.02 * i as f64).collect();
        for w in ds.windows(2) {
            for &p in &ps {
                let a = gaussian_rdp(1.0, w[0], p).unwrap();
                let b = gaussian_rdp(1.0, w[1], p).unwrap();
                assert!(b <= a + 1e-12);
            }
        }
        for &d in &ds {
            for w in ps.windows(2) {
                let a = gaussian_rdp(1.0, d, w[0]).unwrap();
                let b = gaussian_rdp(1.0, d, w[1]).unwrap();
                assert!(b <= a + 1e-12);
            }
        }
    }

    #[test]
    fn rdp_channel_examples() {
        let c = gaussian_rdp_channel(1.0, 1.0, 0.0).unwrap();
        assert!((c.xhat_marginal_var - 1.0).abs() < 1e-12);
        assert!((c.cross_cov - 0.5).abs() < 1e-12);

        let c = gaussian_rdp_channel(1.0, 0.5, 1.0).unwrap();
        assert!((c.xhat_marginal_var - 0.5).abs() < 1e-12);

        let c = gaussian_rdp_channel(1.0, 1e-9, 0.0).unwrap();
        assert!((c.xhat_marginal_var - 1.0).abs() < 1e-6);
        assert!((c.cross_cov - 1.0).abs() < 1e-6);
    }
}
