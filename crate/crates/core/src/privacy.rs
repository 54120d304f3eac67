//! Gaussian noise calibration and privacy accounting.
//!
//! Two routes to a noise scale:
//!
//! - [`calibrate_sigma_single`]: the classic single-release Gaussian
//!   mechanism bound, sigma = Delta * sqrt(2 ln(1.25/delta)) / epsilon;
//! - [`account_epsilon`] / [`calibrate_sigma_for_budget`]: a Rényi-DP
//!   accountant for T iterations of the Poisson-subsampled Gaussian
//!   mechanism at rate q, converted to (epsilon, delta) with the improved
//!   RDP-to-DP conversion.
//!
//! The optimizer loops sample batches uniformly without replacement; the
//! accountant assumes Poisson subsampling at q = B/N, the standard practice
//! for this family of mechanisms. Regimes where the accountant's bounds are
//! vacuous yield `f64::INFINITY`, never an error, so sweeps over bad
//! parameter grids keep running.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::vector::GradVector;
use crate::{Error, Result};

/// Privacy parameters for one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    /// l2-sensitivity of one release (C, 1, or C/s depending on the rule).
    pub sensitivity: f64,
    /// Noise multiplier: noise std = sensitivity * sigma.
    pub sigma: f64,
    /// Subsampling rate q = B/N.
    pub sampling_rate: f64,
    /// Number of iterations T.
    pub steps: usize,
}

impl PrivacySpec {
    /// True when delta exceeds 1/N, the regime the accounting theorem
    /// recommends against. Advisory only.
    pub fn delta_exceeds_recommended(&self, n: usize) -> bool {
        self.delta > 1.0 / n as f64
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must lie in (0, 1), got {v}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Minimal per-coordinate noise standard deviation for a single
/// (epsilon, delta)-DP Gaussian release of l2-sensitivity `sensitivity`.
pub fn calibrate_sigma_single(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    check_unit_interval("delta", delta)?;
    check_positive("sensitivity", sensitivity)?;
    Ok(sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Orders the accountant minimizes over. Integer orders are exact for the
/// subsampled Gaussian; the grid spans the regimes used in practice.
fn alpha_orders() -> Vec<u64> {
    let mut orders: Vec<u64> = (2..=128).collect();
    orders.extend([160, 192, 256, 384, 512, 1024]);
    orders
}

/// RDP of order alpha for one step of the Poisson-subsampled Gaussian
/// mechanism with noise multiplier sigma and sampling rate q.
///
/// For q = 1 this is the plain Gaussian value alpha / (2 sigma^2); for
/// q < 1 it is the exact integer-order expression
/// (1/(alpha-1)) * log( sum_k C(alpha,k) (1-q)^(alpha-k) q^k e^{k(k-1)/(2 sigma^2)} ),
/// evaluated in log space.
fn rdp_subsampled_gaussian(alpha: u64, sigma: f64, q: f64) -> f64 {
    debug_assert!(alpha >= 2);
    if q >= 1.0 {
        return alpha as f64 / (2.0 * sigma * sigma);
    }
    let a = alpha as f64;
    let ln_q = q.ln();
    let ln_1q = (-q).ln_1p();
    // log-sum-exp over k = 0..=alpha
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        let kf = k as f64;
        let ln_binom = ln_gamma(a + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(a - kf + 1.0);
        let t = ln_binom + (a - kf) * ln_1q + kf * ln_q + kf * (kf - 1.0) / (2.0 * sigma * sigma);
        terms.push(t);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::INFINITY;
    }
    let log_sum = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    log_sum / (a - 1.0)
}

/// Smallest epsilon certified by the Rényi accountant after `steps`
/// iterations at sampling rate `sampling_rate` with noise multiplier
/// `sigma`, at the given delta.
///
/// Returns `f64::INFINITY` when every order yields a vacuous bound.
pub fn account_epsilon(sigma: f64, sampling_rate: f64, steps: usize, delta: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    if !(sampling_rate > 0.0 && sampling_rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling_rate must lie in (0, 1], got {sampling_rate}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    check_unit_interval("delta", delta)?;

    let t = steps as f64;
    let mut best = f64::INFINITY;
    for alpha in alpha_orders() {
        let a = alpha as f64;
        let rdp = t * rdp_subsampled_gaussian(alpha, sigma, sampling_rate);
        if !rdp.is_finite() {
            continue;
        }
        // Improved RDP -> (eps, delta) conversion.
        let eps = rdp - (delta.ln() + a.ln()) / (a - 1.0) + ((a - 1.0) / a).ln();
        if eps.is_finite() && eps < best {
            best = eps;
        }
    }
    Ok(best.max(0.0))
}

/// Smallest noise multiplier whose accountant epsilon stays within the
/// budget: the returned sigma satisfies `account_epsilon(sigma, ..) <= eps`
/// while `account_epsilon(0.999 * sigma, ..) > eps`.
pub fn calibrate_sigma_for_budget(
    epsilon: f64,
    delta: f64,
    sampling_rate: f64,
    steps: usize,
) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    // Bracket the budget-feasible sigma.
    let mut lo = 1e-3;
    let mut hi = 1.0;
    while account_epsilon(hi, sampling_rate, steps, delta)? > epsilon {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::UnattainableBudget(format!(
                "no sigma <= 1e8 reaches epsilon {epsilon} at delta {delta}, q {sampling_rate}, T {steps}"
            )));
        }
    }
    while account_epsilon(lo, sampling_rate, steps, delta)? <= epsilon {
        lo /= 2.0;
        if lo < 1e-9 {
            // Even negligible noise satisfies the budget.
            return Ok(lo);
        }
    }
    while hi / lo > 1.0005 {
        let mid = (lo * hi).sqrt();
        if account_epsilon(mid, sampling_rate, steps, delta)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// A spherical Gaussian draw in parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSample {
    pub vector: GradVector,
    pub std: f64,
}

/// I.i.d. N(0, std^2) coordinates; deterministic under a fixed rng stream.
pub fn sample_noise(std: f64, dim: usize, rng: &mut impl Rng) -> Result<NoiseSample> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "std must be nonnegative and finite, got {std}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    let values = if std == 0.0 {
        vec![0.0; dim]
    } else {
        (0..dim)
            .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    };
    Ok(NoiseSample {
        vector: GradVector::new(values),
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, STREAM_NOISE};

    #[test]
    fn single_release_reference_value() {
        // Delta=1, eps=1, delta=1e-5 -> sqrt(2 ln(1.25e5)) ~ 4.8448
        let sigma = calibrate_sigma_single(1.0, 1e-5, 1.0).unwrap();
        assert!((sigma - 4.8448).abs() < 1e-4);
    }

    #[test]
    fn single_release_scalings() {
        let base = calibrate_sigma_single(1.0, 1e-5, 1.0).unwrap();
        let half = calibrate_sigma_single(2.0, 1e-5, 1.0).unwrap();
        assert!((half - base / 2.0).abs() < 1e-12);
        let doubled = calibrate_sigma_single(1.0, 1e-5, 2.0).unwrap();
        assert!((doubled - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn single_release_rejects_bad_input() {
        assert!(calibrate_sigma_single(0.0, 1e-5, 1.0).is_err());
        assert!(calibrate_sigma_single(1.0, 1.5, 1.0).is_err());
        assert!(calibrate_sigma_single(1.0, 1e-5, -1.0).is_err());
    }

    #[test]
    fn accountant_single_shot_within_lemma_bound() {
        // One full-batch release with the Lemma-calibrated sigma must be
        // certified at or below the target epsilon.
        let sigma = calibrate_sigma_single(1.0, 1e-5, 1.0).unwrap();
        let eps = account_epsilon(sigma, 1.0, 1, 1e-5).unwrap();
        assert!(eps <= 1.0, "accountant eps {eps} exceeds Lemma bound");
    }

    #[test]
    fn accountant_monotone_in_sigma() {
        let a = account_epsilon(1.0, 0.01, 1000, 1e-5).unwrap();
        let b = account_epsilon(10.0, 0.01, 1000, 1e-5).unwrap();
        assert!(b < a);
    }

    #[test]
    fn accountant_monotone_in_steps_and_rate() {
        let base = account_epsilon(1.0, 0.01, 1000, 1e-5).unwrap();
        assert!(account_epsilon(1.0, 0.01, 2000, 1e-5).unwrap() >= base);
        assert!(account_epsilon(1.0, 0.05, 1000, 1e-5).unwrap() >= base);
        assert!(account_epsilon(1.0, 0.01, 1000, 1e-7).unwrap() >= base);
    }

    #[test]
    fn accountant_vacuous_regime_is_infinite() {
        // Tiny sigma at full sampling for many steps: bound is astronomically
        // large but must come back as a number or infinity, not an error.
        let eps = account_epsilon(1e-3, 1.0, 1_000_000, 1e-5).unwrap();
        assert!(eps > 1e6);
    }

    #[test]
    fn mnist_setting_sigma_regression() {
        // B=512, N=60000, 20 epochs, delta=1e-5, target eps=3.
        let q = 512.0 / 60000.0;
        let steps = 20 * (60000usize).div_ceil(512);
        let sigma = calibrate_sigma_for_budget(3.0, 1e-5, q, steps).unwrap();
        let eps = account_epsilon(sigma, q, steps, 1e-5).unwrap();
        assert!(eps <= 3.0);
        assert!(account_epsilon(0.999 * sigma, q, steps, 1e-5).unwrap() > 3.0);
        // Frozen regression constant for this setting.
        assert!(
            (sigma - MNIST_EPS3_SIGMA).abs() / MNIST_EPS3_SIGMA < 5e-3,
            "sigma {sigma} drifted from recorded value {MNIST_EPS3_SIGMA}"
        );
    }

    /// Accountant output for the MNIST setting above, recorded once bisection
    /// converged and pinned as a regression value.
    const MNIST_EPS3_SIGMA: f64 = 0.9435;

    #[test]
    fn budget_roundtrip_random_settings() {
        let mut rng = stream_rng(77, 0);
        for _ in 0..20 {
            let eps: f64 = rng.random_range(0.5..10.0);
            let delta = 10f64.powf(rng.random_range(-7.0..-4.0));
            let q = rng.random_range(0.001..0.2);
            let steps = rng.random_range(10..5000);
            let sigma = calibrate_sigma_for_budget(eps, delta, q, steps).unwrap();
            assert!(account_epsilon(sigma, q, steps, delta).unwrap() <= eps);
        }
    }

    #[test]
    fn budget_single_shot_agrees_with_lemma() {
        let lemma = calibrate_sigma_single(1.0, 1e-5, 1.0).unwrap();
        let accountant = calibrate_sigma_for_budget(1.0, 1e-5, 1.0, 1).unwrap();
        assert!((accountant - lemma).abs() / lemma < 0.25);
    }

    #[test]
    fn budget_grows_with_steps() {
        let s1 = calibrate_sigma_for_budget(3.0, 1e-5, 0.01, 100).unwrap();
        let s2 = calibrate_sigma_for_budget(3.0, 1e-5, 0.01, 10_000).unwrap();
        assert!(s2 > s1);
    }

    #[test]
    fn noise_zero_std_is_zero_vector() {
        let mut rng = stream_rng(1, STREAM_NOISE);
        let n = sample_noise(0.0, 5, &mut rng).unwrap();
        assert_eq!(n.vector, GradVector::zeros(5));
    }

    #[test]
    fn noise_moments() {
        let mut rng = stream_rng(2, STREAM_NOISE);
        let n = sample_noise(1.0, 1_000_000, &mut rng).unwrap();
        let vals = n.vector.values();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 4.0 / (vals.len() as f64).sqrt());
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn noise_norm_concentrates() {
        // E||n|| ~ std*sqrt(d) for large d.
        let mut rng = stream_rng(3, STREAM_NOISE);
        let d = 10_000;
        let std = 0.7;
        let mut mean_norm = 0.0;
        let reps = 50;
        for _ in 0..reps {
            mean_norm += sample_noise(std, d, &mut rng).unwrap().vector.norm();
        }
        mean_norm /= reps as f64;
        let expected = std * (d as f64).sqrt();
        assert!((mean_norm - expected).abs() / expected < 0.02);
    }

    #[test]
    fn noise_deterministic_under_seed() {
        let a = sample_noise(1.0, 64, &mut stream_rng(9, STREAM_NOISE)).unwrap();
        let b = sample_noise(1.0, 64, &mut stream_rng(9, STREAM_NOISE)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_rejects_bad_input() {
        let mut rng = stream_rng(0, 0);
        assert!(sample_noise(-1.0, 4, &mut rng).is_err());
        assert!(sample_noise(1.0, 0, &mut rng).is_err());
        assert!(sample_noise(f64::NAN, 4, &mut rng).is_err());
    }
}
