//! Per-sample gradient scaling weights.
//!
//! Four transforms, all of the form `g ~> w(||g||) * g`:
//!
//! - `VanillaClip`: w = min{1, C/||g||}, classic DP-SGD clipping;
//! - `AutoS`: w = 1/(||g|| + r), automatic clipping / normalized SGD
//!   (sensitivity folded to 1);
//! - `Psac`: w = C/(||g|| + r/(||g||+r)), the non-monotonic per-sample
//!   adaptive clipping weight;
//! - `Psasc`: w_s = C/(s*||g|| + r/(||g||+r)), the scaled variant. An extra
//!   coefficient `s` modulates how strongly the norm drives the weight;
//!   s = 1 recovers `Psac`, and s < 1 raises the weight of small gradients
//!   while keeping the sensitivity bound C/s.

use serde::{Deserialize, Serialize};

use crate::vector::GradVector;
use crate::{Error, Result};

/// Which weight function to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    VanillaClip,
    AutoS,
    Psac,
    Psasc,
}

impl RuleKind {
    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::VanillaClip => "vanilla-clip",
            RuleKind::AutoS => "auto-s",
            RuleKind::Psac => "psac",
            RuleKind::Psasc => "psasc",
        }
    }
}

/// A weight function with its parameters.
///
/// `c` is the sensitivity bound C, `r` the stability constant, and `s` the
/// scaling coefficient (used by `Psasc` only; ignored elsewhere).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRule {
    pub kind: RuleKind,
    pub c: f64,
    pub r: f64,
    pub s: f64,
}

impl ScalingRule {
    pub fn new(kind: RuleKind, c: f64, r: f64, s: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
        }
        if kind == RuleKind::Psasc && !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "s must be positive for psasc, got {s}"
            )));
        }
        Ok(ScalingRule { kind, c, r, s })
    }

    pub fn vanilla_clip(c: f64, r: f64) -> Result<Self> {
        Self::new(RuleKind::VanillaClip, c, r, 1.0)
    }

    pub fn auto_s(c: f64, r: f64) -> Result<Self> {
        Self::new(RuleKind::AutoS, c, r, 1.0)
    }

    pub fn psac(c: f64, r: f64) -> Result<Self> {
        Self::new(RuleKind::Psac, c, r, 1.0)
    }

    pub fn psasc(c: f64, r: f64, s: f64) -> Result<Self> {
        Self::new(RuleKind::Psasc, c, r, s)
    }

    /// l2-sensitivity of one scaled per-sample gradient: the noise standard
    /// deviation handed to the Gaussian mechanism is `sensitivity() * sigma`.
    pub fn sensitivity(&self) -> f64 {
        match self.kind {
            RuleKind::VanillaClip | RuleKind::Psac => self.c,
            RuleKind::AutoS => 1.0,
            RuleKind::Psasc => self.c / self.s,
        }
    }
}

/// Scalar multiplier for a gradient of the given norm.
///
/// The value at norm 0 is the continuous extension: 1 for `VanillaClip`,
/// 1/r for `AutoS`, C for `Psac` and `Psasc`.
pub fn weight(rule: &ScalingRule, norm: f64) -> Result<f64> {
    if !norm.is_finite() || norm < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "norm must be finite and nonnegative, got {norm}"
        )));
    }
    let w = match rule.kind {
        RuleKind::VanillaClip => {
            if norm <= rule.c {
                1.0
            } else {
                rule.c / norm
            }
        }
        RuleKind::AutoS => 1.0 / (norm + rule.r),
        RuleKind::Psac => rule.c / (norm + rule.r / (norm + rule.r)),
        RuleKind::Psasc => rule.c / (rule.s * norm + rule.r / (norm + rule.r)),
    };
    Ok(w)
}

/// `weight(rule, ||g||) * g`. Direction is preserved.
pub fn scale(rule: &ScalingRule, g: &GradVector) -> Result<GradVector> {
    g.ensure_finite("scale input")?;
    let w = weight(rule, g.norm())?;
    Ok(g.scaled(w))
}

/// Interior maximum of the `Psasc` weight over norms.
///
/// Returns `(norm_at_max, max_value)` with
/// `norm_at_max = sqrt(r/s) - r` and `max_value = C / (1 - (1 - sqrt(s*r))^2)`.
/// Valid only for s*r < 1; outside that regime the closed form breaks down
/// and an error is returned.
pub fn max_weight(rule: &ScalingRule) -> Result<(f64, f64)> {
    if rule.kind != RuleKind::Psasc {
        return Err(Error::InvalidArgument(
            "max_weight is defined for the psasc rule".into(),
        ));
    }
    let sr = rule.s * rule.r;
    if sr >= 1.0 {
        return Err(Error::ClosedFormInvalid { sr });
    }
    let norm_at_max = (rule.r / rule.s).sqrt() - rule.r;
    let max_value = rule.c / (1.0 - (1.0 - sr.sqrt()).powi(2));
    Ok((norm_at_max, max_value))
}

/// Truth of the denominator inequality behind the noise-amplification claim:
///
/// `||g|| + r/(||g||+r)  <=  ||g|| + (r/s)/(||g||+r)`
///
/// which holds exactly when s <= 1, with equality at s = 1. A smaller `s`
/// inflates the scaled-gradient bound to C/s, so matching noise of scale
/// C*sigma/s yields a noise-to-signal ratio at least as large as at s = 1.
pub fn noise_ratio_dominates(s: f64, norm: f64, r: f64) -> Result<bool> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("s must be positive, got {s}")));
    }
    if !(norm > 0.0 && norm.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(
            "norm and r must be positive and finite".into(),
        ));
    }
    let lhs = norm + r / (norm + r);
    let rhs = norm + (r / s) / (norm + r);
    Ok(lhs <= rhs)
}
