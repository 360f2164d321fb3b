//! Eavesdropper-information bounds, visibility-threshold analysis, and the
//! security report assembled from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequality::{RepeaterScore, StarScore};
use crate::topology::IndependenceViolation;

/// Total variational distance `0.5 * sum |p - q|` between two distributions
/// on the same support.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "distributions have supports {} and {}",
            p.len(),
            q.len()
        )));
    }
    for dist in [p, q] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || dist.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
    }
    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok((d / 2.0).clamp(0.0, 1.0))
}

/// Which bound produced a value. The labels are part of the report schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFormula {
    /// `2 (2 - score)` for the repeater chain.
    Repeater,
    /// `n (k - score)` for the star with independent taps.
    Star,
    /// `(n + m (q - 1)) (k - score)` for the star with `m` sources
    /// correlated through a `q`-valued shared variable.
    StarCorrelated,
}

/// A bound on the eavesdropper's total-variation information, clipped at 0.
/// A TVD never exceeds 1, so values >= 1 carry no information and are
/// flagged vacuous.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EaveBound {
    pub formula: BoundFormula,
    pub value: f64,
    pub vacuous: bool,
}

fn make_bound(formula: BoundFormula, raw: f64) -> EaveBound {
    let value = raw.max(0.0);
    EaveBound {
        formula,
        value,
        vacuous: value >= 1.0,
    }
}

/// Eavesdropper-information bound from a repeater score: `2 (2 - score)`.
pub fn repeater_eavesdropper_bound(score: f64) -> Result<EaveBound> {
    if !score.is_finite() || score < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "repeater score must be a non-negative number, got {score}"
        )));
    }
    Ok(make_bound(BoundFormula::Repeater, 2.0 * (2.0 - score)))
}

/// Eavesdropper-information bound from a star score: `n (k - score)`.
pub fn star_eavesdropper_bound(score: f64, n: usize, k: usize) -> Result<EaveBound> {
    if n < 1 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "star bound needs n >= 1 branches and k >= 2 settings, got n={n}, k={k}"
        )));
    }
    if !score.is_finite() {
        return Err(Error::InvalidParameter("star score must be finite".into()));
    }
    Ok(make_bound(
        BoundFormula::Star,
        n as f64 * (k as f64 - score),
    ))
}

/// The quantum maximum of the star score, `k cos(pi / 2k)`.
pub fn star_quantum_optimum(k: usize) -> f64 {
    k as f64 * (std::f64::consts::PI / (2.0 * k as f64)).cos()
}

/// Bound value at the quantum optimum, `n k (1 - cos(pi / 2k))`; decays like
/// 1/k as the setting count grows.
pub fn star_bound_at_quantum_optimum(n: usize, k: usize) -> f64 {
    n as f64 * (k as f64 - star_quantum_optimum(k))
}

/// Bound against an eavesdropper correlating `m <= n` sources through a
/// shared variable with `q < k` values: `(n + m (q - 1)) (k - score)`.
/// `q = 1` carries no correlation and reduces to the independent-tap bound.
pub fn correlated_star_eavesdropper_bound(
    score: f64,
    n: usize,
    k: usize,
    m: usize,
    q: usize,
) -> Result<EaveBound> {
    if n < 1 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "star bound needs n >= 1 branches and k >= 2 settings, got n={n}, k={k}"
        )));
    }
    if m < 1 || m > n {
        return Err(Error::InvalidParameter(format!(
            "correlated source count m={m} must satisfy 1 <= m <= n={n}"
        )));
    }
    if q < 1 {
        return Err(Error::InvalidParameter(
            "shared variable needs q >= 1 values".into(),
        ));
    }
    if q >= k {
        return Err(Error::InvalidParameter(format!(
            "shared variable cardinality q={q} must be smaller than the setting count k={k}; \
             the bound only holds for q < k"
        )));
    }
    if !score.is_finite() {
        return Err(Error::InvalidParameter("star score must be finite".into()));
    }
    let factor = n as f64 + m as f64 * (q as f64 - 1.0);
    Ok(make_bound(
        BoundFormula::StarCorrelated,
        factor * (k as f64 - score),
    ))
}

/// Visibility below which the chain inequality cannot be violated.
pub const POLYNOMIAL_VISIBILITY_THRESHOLD: f64 = 0.5;
/// Visibility below which the induced two-party state cannot violate CHSH.
pub const CHSH_VISIBILITY_THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Effective visibility of the chain and the security regimes it admits.
#[derive(Debug, Clone, Serialize)]
pub struct VisibilityAnalysis {
    pub visibilities: Vec<f64>,
    /// Product of the per-source visibilities.
    pub effective: f64,
    pub polynomial_threshold: f64,
    pub chsh_threshold: f64,
    /// Effective visibility admits a chain-inequality violation.
    pub polynomial_violable: bool,
    /// Effective visibility admits a CHSH violation on the induced pair.
    pub chsh_violable: bool,
    /// Chain inequality violable while CHSH is not.
    pub intermediate_regime: bool,
    /// CHSH value of the induced noisy pair, `2 sqrt(2) * effective`.
    pub induced_chsh: f64,
    /// Repeater score at this visibility, `sqrt(2 * effective)`.
    pub induced_repeater_score: f64,
}

pub fn visibility_analysis(visibilities: &[f64]) -> Result<VisibilityAnalysis> {
    if visibilities.is_empty() {
        return Err(Error::InvalidParameter(
            "visibility analysis needs at least one source".into(),
        ));
    }
    for &v in visibilities {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "visibility {v} outside [0, 1]"
            )));
        }
    }
    let effective: f64 = visibilities.iter().product();
    let polynomial_violable = effective > POLYNOMIAL_VISIBILITY_THRESHOLD;
    let chsh_violable = effective > CHSH_VISIBILITY_THRESHOLD;
    Ok(VisibilityAnalysis {
        visibilities: visibilities.to_vec(),
        effective,
        polynomial_threshold: POLYNOMIAL_VISIBILITY_THRESHOLD,
        chsh_threshold: CHSH_VISIBILITY_THRESHOLD,
        polynomial_violable,
        chsh_violable,
        intermediate_regime: polynomial_violable && !chsh_violable,
        induced_chsh: 2.0 * std::f64::consts::SQRT_2 * effective,
        induced_repeater_score: (2.0 * effective).sqrt(),
    })
}

/// Outcome of the simulated correlated-source attack, as reported.
#[derive(Debug, Clone, Serialize)]
pub struct AttackDiagnostics {
    /// Fraction of transcript rounds where the eavesdropper inferred both
    /// end outcomes; absent when no rounds were simulated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guess_probability: Option<f64>,
    /// The exact attacked table equals the quantum chain table.
    pub matches_quantum_table: bool,
    pub max_deviation_from_quantum: f64,
    /// No DAG independence check on the agents' behavior exposes the attack.
    pub undetectable: bool,
    /// Worst-case (over inputs) total variation between the eavesdropper's
    /// conditioned view of the end outcomes and their marginal — 1 here,
    /// since the inference is exact.
    pub information_tvd: f64,
}

/// What the report describes: the scenario family and its parameters.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioDescriptor {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlated_sources: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shared_values: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visibilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
}

/// Inequality scores, eavesdropper bounds, visibility regime, and attack
/// diagnostics for one scenario. Serialized with stable keys.
#[derive(Debug, Clone, Serialize)]
pub struct SecurityReport {
    pub scenario: ScenarioDescriptor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeater_score: Option<RepeaterScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub star_score: Option<StarScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chsh_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chained_value: Option<f64>,
    /// |chained - (k - chsh/2)| consistency residue, when both apply.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chained_chsh_residue: Option<f64>,
    pub bounds: Vec<EaveBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visibility: Option<VisibilityAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackDiagnostics>,
    /// DAG independence violations of the evaluated behavior (empty for
    /// honest builds and for the undetectable attack).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dag_violations: Option<Vec<IndependenceViolation>>,
}

impl SecurityReport {
    pub fn new(scenario: ScenarioDescriptor) -> Self {
        Self {
            scenario,
            repeater_score: None,
            star_score: None,
            chsh_value: None,
            chained_value: None,
            chained_chsh_residue: None,
            bounds: Vec::new(),
            visibility: None,
            attack: None,
            dag_violations: None,
        }
    }
}
