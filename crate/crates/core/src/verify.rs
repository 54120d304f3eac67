//! Self-check suites: randomized property verification shared by the CLI
//! `verify` subcommand and the integration tests. Every suite takes its
//! scale as a parameter so the CLI can run a quick pass while the tests run
//! the full pinned sizes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{generate, SyntheticKind, SyntheticSpec};
use crate::model::{per_sample_gradient, Activation, LossKind, Model, ModelKind};
use crate::optim::{OptimizerConfig, OptimizerState, Variant};
use crate::privacy::{account_epsilon, calibrate_sigma_for_budget, calibrate_sigma_single};
use crate::rng::{stream_rng, STREAM_BATCH, STREAM_INIT, STREAM_NOISE};
use crate::scaling::{max_weight, noise_ratio_dominates, scale, weight, ScalingRule};
use crate::vector::GradVector;
use crate::{Error, Result};

/// Outcome of one suite. `detail` carries the measured extremes so a
/// failure message stands on its own.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> CheckResult {
        CheckResult {
            name,
            passed: true,
            detail,
        }
    }

    fn fail(name: &'static str, detail: String) -> CheckResult {
        CheckResult {
            name,
            passed: false,
            detail,
        }
    }
}

fn random_rule(rng: &mut impl Rng) -> ScalingRule {
    loop {
        let c = rng.random_range(0.1..10.0);
        let s = rng.random_range(0.01..=1.0);
        let r = rng.random_range(1e-6..1.0);
        if s * r < 1.0 {
            if let Ok(rule) = ScalingRule::psasc(c, r, s) {
                return rule;
            }
        }
    }
}

/// A vector with the given norm in a random direction.
fn random_gradient(dim: usize, norm: f64, rng: &mut impl Rng) -> GradVector {
    let mut values: Vec<f64> = (0..dim)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    let current: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if current > 0.0 {
        for v in &mut values {
            *v *= norm / current;
        }
    } else {
        values[0] = norm;
    }
    GradVector::new(values)
}

/// Scaled-gradient norms never exceed each rule's sensitivity bound.
pub fn check_sensitivity_bounds(samples: usize, seed: u64) -> Result<CheckResult> {
    let name = "sensitivity-bounds";
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..samples {
        // Log-uniform dim in 1..=10^4 and norm in [0, 10^6].
        let dim = 10f64.powf(rng.random_range(0.0..4.0)).ceil() as usize;
        let norm = if i % 100 == 0 {
            0.0
        } else {
            10f64.powf(rng.random_range(-6.0..6.0))
        };
        let g = random_gradient(dim, norm, &mut rng);
        let psasc = random_rule(&mut rng);
        let c = psasc.c;
        let r = psasc.r;
        let checks = [
            (scale(&psasc, &g)?.norm(), psasc.c / psasc.s, 1e-9),
            (scale(&ScalingRule::vanilla_clip(c, r)?, &g)?.norm(), c, 1e-12),
            (scale(&ScalingRule::auto_s(c, r)?, &g)?.norm(), 1.0, 1e-12),
        ];
        for (observed, bound, tol) in checks {
            let excess = observed - bound;
            worst = worst.max(excess / tol);
            if excess > tol {
                return Ok(CheckResult::fail(
                    name,
                    format!(
                        "scaled norm {observed} exceeds bound {bound} by {excess} (tol {tol})"
                    ),
                ));
            }
        }
    }
    Ok(CheckResult::pass(
        name,
        format!("{samples} random gradients; worst excess {worst:.3} tolerances"),
    ))
}

/// Closed-form weight maximum agrees with a dense grid search and is a
/// strict interior maximum.
pub fn check_closed_form_maximum(
    rules: usize,
    grid_points: usize,
    seed: u64,
) -> Result<CheckResult> {
    let name = "closed-form-maximum";
    let mut rng = stream_rng(seed, 1);
    let mut worst_rel = 0.0f64;
    for _ in 0..rules {
        let rule = random_rule(&mut rng);
        let (norm_at_max, max_value) = max_weight(&rule)?;
        // Grid spans several multiples of the maximizer.
        let hi = 4.0 * (norm_at_max + rule.r + 1.0);
        let mut grid_best = 0.0f64;
        let step = hi / grid_points as f64;
        let (c, s, r) = (rule.c, rule.s, rule.r);
        for i in 0..=grid_points {
            let n = i as f64 * step;
            let w = c / (s * n + r / (n + r));
            if w > grid_best {
                grid_best = w;
            }
        }
        let rel = (max_value - grid_best).abs() / max_value;
        worst_rel = worst_rel.max(rel);
        if rel > 1e-5 {
            return Ok(CheckResult::fail(
                name,
                format!(
                    "closed form {max_value} vs grid {grid_best}: relative error {rel} \
                     (rule c={c} r={r} s={s})"
                ),
            ));
        }
        // Strict interior maximum.
        let eps = (norm_at_max * 1e-3).max(1e-9);
        for probe in [norm_at_max - eps, norm_at_max + eps] {
            if probe > 0.0 && weight(&rule, probe)? >= max_value {
                return Ok(CheckResult::fail(
                    name,
                    format!("weight at {probe} not below the maximum {max_value}"),
                ));
            }
        }
    }
    Ok(CheckResult::pass(
        name,
        format!("{rules} rules x {grid_points}-point grids; worst relative error {worst_rel:.2e}"),
    ))
}

/// Parameter trajectory of a run, one entry per step.
pub fn run_trajectory(
    config: &OptimizerConfig,
    dataset: &crate::data::Dataset,
    model: Model,
    loss: LossKind,
    seed: u64,
) -> Result<Vec<GradVector>> {
    let mut state = OptimizerState::new(*config, model, loss, dataset.len())?;
    let mut batch_rng = stream_rng(seed, STREAM_BATCH);
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let mut trajectory = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        trajectory.push(state.step(dataset, &mut batch_rng, &mut noise_rng)?.new_params);
    }
    Ok(trajectory)
}

fn trajectory_distance(a: &[GradVector], b: &[GradVector]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.max_abs_diff(y))
        .fold(0.0, f64::max)
}

/// The four reduction identities: special parameter settings of the richer
/// method reproduce the simpler one step-for-step.
pub fn check_reduction_lattice(n: usize, steps: usize, seed: u64) -> Result<CheckResult> {
    let name = "reduction-lattice";
    let tol = 1e-10;
    let spec = SyntheticSpec {
        kind: SyntheticKind::LogisticBlobs {
            num_classes: 2,
            separation: 1.0,
        },
        n,
        dim: 6,
        seed,
    };
    let dataset = generate(&spec)?;
    let kind = ModelKind::LogisticRegression {
        input_dim: 6,
        num_classes: 2,
    };
    let model = Model::init_random(kind, &mut stream_rng(seed, STREAM_INIT))?;
    let loss = LossKind::CrossEntropy;
    let base = OptimizerConfig {
        rule: ScalingRule::psasc(0.7, 0.01, 1.0)?,
        eta: 0.2,
        batch_size: 16,
        steps,
        noise_std: 0.3,
        variant: Variant::Plain,
    };
    let mut worst = 0.0f64;
    let mut check = |label: &str, a: &OptimizerConfig, b: &OptimizerConfig| -> Result<Option<String>> {
        let ta = run_trajectory(a, &dataset, model.clone(), loss, seed)?;
        let tb = run_trajectory(b, &dataset, model.clone(), loss, seed)?;
        let d = trajectory_distance(&ta, &tb);
        worst = worst.max(d);
        Ok((d > tol).then(|| format!("{label}: trajectory distance {d} > {tol}")))
    };

    // PSASC(s=1) vs PSAC.
    let psac = OptimizerConfig {
        rule: ScalingRule::psac(0.7, 0.01)?,
        ..base
    };
    if let Some(msg) = check("psasc(s=1) vs psac", &base, &psac)? {
        return Ok(CheckResult::fail(name, msg));
    }

    // MomentumGd(gamma=1, B=N) vs Plain(B=N).
    let full = OptimizerConfig {
        batch_size: n,
        ..base
    };
    let momentum = OptimizerConfig {
        variant: Variant::MomentumGd { gamma: 1.0 },
        ..full
    };
    if let Some(msg) = check("momentum-gd(gamma=1, B=N) vs plain", &momentum, &full)? {
        return Ok(CheckResult::fail(name, msg));
    }

    // InnerOuterSgd(K0=0, gamma1=1) vs Plain.
    let inner_outer = OptimizerConfig {
        variant: Variant::InnerOuterSgd {
            gamma0: 0.5,
            gamma1: 1.0,
            k0: 0,
        },
        ..base
    };
    if let Some(msg) = check("inner-outer(K0=0, gamma1=1) vs plain", &inner_outer, &base)? {
        return Ok(CheckResult::fail(name, msg));
    }

    // Zero-noise PSASC(C, eta) vs PSASC(1, eta * C).
    let c = 0.7;
    let a = OptimizerConfig {
        rule: ScalingRule::psasc(c, 0.01, 0.8)?,
        noise_std: 0.0,
        ..base
    };
    let b = OptimizerConfig {
        rule: ScalingRule::psasc(1.0, 0.01, 0.8)?,
        eta: base.eta * c,
        noise_std: 0.0,
        ..base
    };
    if let Some(msg) = check("psasc(C, eta) vs psasc(1, eta C), zero noise", &a, &b)? {
        return Ok(CheckResult::fail(name, msg));
    }

    Ok(CheckResult::pass(
        name,
        format!("4 identities over {steps}-step runs on {n} samples; worst distance {worst:.2e}"),
    ))
}

/// The smaller-s denominator never shrinks relative noise: the inequality
/// behind choosing s <= 1, with exact equality at s = 1.
pub fn check_noise_amplification(samples: usize, seed: u64) -> Result<CheckResult> {
    let name = "noise-amplification";
    let mut rng = stream_rng(seed, 2);
    for _ in 0..samples {
        let s = rng.random_range(0.0..1.0f64).max(f64::MIN_POSITIVE).min(1.0);
        let norm = rng.random_range(0.0..1e3);
        let r = rng.random_range(1e-9..1.0);
        if !noise_ratio_dominates(s, norm, r)? {
            return Ok(CheckResult::fail(
                name,
                format!("domination fails at s={s} norm={norm} r={r}"),
            ));
        }
        // Equality at s = 1.
        let lhs = norm + r / (norm + r);
        let rhs = norm + (r / 1.0) / (norm + r);
        if (lhs - rhs).abs() > 1e-14 {
            return Ok(CheckResult::fail(
                name,
                format!("s=1 equality off by {} at norm={norm} r={r}", (lhs - rhs).abs()),
            ));
        }
    }
    Ok(CheckResult::pass(name, format!("{samples} random (s, norm, r) triples")))
}

fn finite_difference_gradient(
    model: &Model,
    loss: LossKind,
    x: &[f64],
    y: f64,
) -> Result<GradVector> {
    let h = 1e-6;
    let dim = model.params().dim();
    let mut grad = Vec::with_capacity(dim);
    let mut probe = model.clone();
    for j in 0..dim {
        let orig = model.params().values()[j];
        probe.params_mut().values_mut()[j] = orig + h;
        let up = probe.loss(loss, x, y)?;
        probe.params_mut().values_mut()[j] = orig - h;
        let down = probe.loss(loss, x, y)?;
        probe.params_mut().values_mut()[j] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(GradVector::new(grad))
}

/// Analytic per-sample gradients match central finite differences for every
/// model family.
pub fn check_gradient_correctness(configs_per_kind: usize, seed: u64) -> Result<CheckResult> {
    let name = "gradient-correctness";
    let mut rng = stream_rng(seed, 3);
    let kinds: Vec<(ModelKind, LossKind)> = vec![
        (ModelKind::LinearRegression { input_dim: 5 }, LossKind::SquaredError),
        (
            ModelKind::LogisticRegression {
                input_dim: 4,
                num_classes: 2,
            },
            LossKind::CrossEntropy,
        ),
        (
            ModelKind::LogisticRegression {
                input_dim: 3,
                num_classes: 4,
            },
            LossKind::CrossEntropy,
        ),
        (
            ModelKind::Mlp {
                layer_sizes: vec![4, 6, 1],
                activation: Activation::Relu,
            },
            LossKind::SquaredError,
        ),
        (
            ModelKind::Mlp {
                layer_sizes: vec![3, 5, 3],
                activation: Activation::Tanh,
            },
            LossKind::CrossEntropy,
        ),
    ];
    let mut worst = 0.0f64;
    for (kind, loss) in &kinds {
        for _ in 0..configs_per_kind {
            let model = Model::init_random(kind.clone(), &mut rng)?;
            let x: Vec<f64> = (0..kind.input_dim())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let y = match (kind, loss) {
                (_, LossKind::SquaredError) => rng.random_range(-2.0..2.0),
                (ModelKind::LogisticRegression { num_classes, .. }, _) => {
                    rng.random_range(0..*num_classes) as f64
                }
                (ModelKind::Mlp { layer_sizes, .. }, _) => {
                    let out = *layer_sizes.last().unwrap();
                    if out == 1 {
                        rng.random_range(0..2) as f64
                    } else {
                        rng.random_range(0..out) as f64
                    }
                }
                _ => rng.random_range(-2.0..2.0),
            };
            let analytic = per_sample_gradient(&model, *loss, &x, y)?;
            let numeric = finite_difference_gradient(&model, *loss, &x, y)?;
            let denom = analytic.norm().max(1e-8);
            let rel = analytic.max_abs_diff(&numeric) / denom;
            worst = worst.max(rel);
            if rel > 1e-5 {
                return Ok(CheckResult::fail(
                    name,
                    format!("{kind:?}/{loss:?}: relative error {rel:.2e} > 1e-5"),
                ));
            }
        }
    }
    Ok(CheckResult::pass(
        name,
        format!(
            "{} configs x {} model families; worst relative error {worst:.2e}",
            configs_per_kind,
            kinds.len()
        ),
    ))
}

/// Calibration reference value, accountant monotonicity in all four
/// arguments, and the calibrate/account round trip.
pub fn check_privacy_calibration(grid_points: usize, seed: u64) -> Result<CheckResult> {
    let name = "privacy-calibration";
    let reference = calibrate_sigma_single(1.0, 1e-5, 1.0)?;
    if (reference - 4.8448).abs() > 1e-4 {
        return Ok(CheckResult::fail(
            name,
            format!("single-release sigma {reference} != 4.8448 +- 1e-4"),
        ));
    }
    let mut rng = stream_rng(seed, 4);
    for _ in 0..grid_points {
        let sigma = rng.random_range(0.5..8.0);
        let q = rng.random_range(0.001..0.5);
        let steps = rng.random_range(1..5000usize);
        let delta = 10f64.powf(rng.random_range(-8.0..-2.0));
        let base = account_epsilon(sigma, q, steps, delta)?;
        // More noise, fewer steps, less sampling, more slack: all loosen.
        if account_epsilon(sigma * 1.2, q, steps, delta)? > base + 1e-12 {
            return Ok(CheckResult::fail(name, format!("epsilon rises with sigma at ({sigma}, {q}, {steps}, {delta})")));
        }
        if account_epsilon(sigma, q, steps * 2, delta)? + 1e-12 < base {
            return Ok(CheckResult::fail(name, format!("epsilon falls with steps at ({sigma}, {q}, {steps}, {delta})")));
        }
        if account_epsilon(sigma, (q * 1.5).min(1.0), steps, delta)? + 1e-12 < base {
            return Ok(CheckResult::fail(name, format!("epsilon falls with q at ({sigma}, {q}, {steps}, {delta})")));
        }
        if account_epsilon(sigma, q, steps, (delta * 10.0).min(0.5))? > base + 1e-12 {
            return Ok(CheckResult::fail(name, format!("epsilon rises with delta at ({sigma}, {q}, {steps}, {delta})")));
        }
    }
    // Round trip: the calibrated sigma certifies a budget-respecting epsilon.
    for _ in 0..20 {
        let eps = rng.random_range(0.2..10.0);
        let delta = 10f64.powf(rng.random_range(-7.0..-3.0));
        let q = rng.random_range(0.001..0.2);
        let steps = rng.random_range(10..3000usize);
        let sigma = calibrate_sigma_for_budget(eps, delta, q, steps)?;
        let achieved = account_epsilon(sigma, q, steps, delta)?;
        if achieved > eps {
            return Ok(CheckResult::fail(
                name,
                format!("round trip: achieved {achieved} > budget {eps}"),
            ));
        }
    }
    Ok(CheckResult::pass(
        name,
        format!("reference {reference:.4}; {grid_points} monotonicity points; 20 round trips"),
    ))
}

/// Quick versions of every suite, in order. The CLI prints one line per
/// result; the acceptance tests call the individual checks at full scale.
pub fn run_all(fast: bool) -> Result<Vec<CheckResult>> {
    let (samples, rules, grid, lattice_steps, grads, privacy) = if fast {
        (5_000, 10, 100_000, 50, 10, 20)
    } else {
        (100_000, 100, 10_000_000, 200, 100, 200)
    };
    Ok(vec![
        check_sensitivity_bounds(samples, 101)?,
        check_closed_form_maximum(rules, grid, 102)?,
        check_reduction_lattice(100, lattice_steps, 103)?,
        check_noise_amplification(samples, 104)?,
        check_gradient_correctness(grads, 105)?,
        check_privacy_calibration(privacy, 106)?,
    ])
}

/// Shorthand for "every suite passed"; errors carry the first failure.
pub fn verify_all(fast: bool) -> Result<Vec<CheckResult>> {
    let results = run_all(fast)?;
    if let Some(first) = results.iter().find(|r| !r.passed) {
        return Err(Error::InvalidArgument(format!(
            "verification failed: {}: {}",
            first.name, first.detail
        )));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        for result in run_all(true).unwrap() {
            assert!(result.passed, "{}: {}", result.name, result.detail);
        }
    }

    #[test]
    fn random_gradient_hits_requested_norm() {
        let mut rng = stream_rng(1, 0);
        for &norm in &[0.0, 1e-6, 1.0, 1e6] {
            let g = random_gradient(100, norm, &mut rng);
            assert!((g.norm() - norm).abs() <= norm * 1e-12 + 1e-15);
        }
    }
}
