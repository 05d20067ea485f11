//! Six-layer forward pass.
//!
//! Per rule: an affine feature transform `z = gamma (x - m)` decorrelates the
//! input locally, each feature is fuzzified at unit scale by a shape-uncertain
//! interval type-2 set, product t-norms give a firing interval, an adaptive
//! Nie-Tan reducer with trainable weights `(v1, v2)` collapses it to a scalar
//! firing strength `phi`, and the network output is `sum_i phi_i * y_i`.
//! Because firing is computed over transformed features, rules are
//! non-separable: their activation contours follow the local correlation
//! structure instead of being axis-aligned.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fuzzy::{self, ShapeParams, UnitActivation};

/// Feature count above which firing products are accumulated in log space
/// (sums of the Gaussian exponents) instead of direct multiplication.
const LOG_SPACE_THRESHOLD: usize = 16;

/// Floor on `sum(phi)` when dividing in normalized output mode.
const PHI_SUM_FLOOR: f64 = 1e-12;

/// One fuzzy rule: antecedent geometry, shape parameters, type-reduction
/// weights, and a scalar consequent.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// Rule center `m` (input units), length n.
    pub center: DVector<f64>,
    /// Feature transform `gamma`, n x n; row j extracts feature j.
    pub transform: DMatrix<f64>,
    /// Shape regulators, one per feature.
    pub beta: DVector<f64>,
    /// Shape-uncertainty regulators, one per feature.
    pub delta: DVector<f64>,
    /// Type-reduction weight paired with the lower firing strength.
    pub v1: f64,
    /// Type-reduction weight paired with the upper firing strength.
    pub v2: f64,
    /// Rule output value `y` (output units).
    pub consequent: f64,
}

/// Lower and upper firing strengths of one rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiringInterval {
    pub lower: f64,
    pub upper: f64,
}

/// How rule outputs combine into the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// `y_hat = sum_i phi_i * y_i`, the reference behavior.
    #[default]
    Additive,
    /// `y_hat = sum_i phi_i * y_i / max(sum_i phi_i, 1e-12)`.
    Normalized,
}

/// Per-rule intermediates of one forward evaluation.
#[derive(Debug, Clone)]
pub struct RuleTrace {
    /// Transformed features `z = gamma (x - m)`.
    pub z: DVector<f64>,
    /// Fuzzification intermediates per feature.
    pub features: Vec<UnitActivation>,
    pub firing: FiringInterval,
    /// `v1^2 / (v1^2 + v2^2)`.
    pub w_lower: f64,
    /// `v2^2 / (v1^2 + v2^2)`.
    pub w_upper: f64,
    /// Reduced firing strength.
    pub phi: f64,
}

/// Full record of one forward evaluation, retained for Jacobian assembly.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub rules: Vec<RuleTrace>,
    pub phi_sum: f64,
    pub output: f64,
}

impl Rule {
    /// Checks dimensional consistency against `n` inputs and all value-level
    /// invariants (finite fields, admissible shape pairs, non-degenerate
    /// type-reduction weights).
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.center.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.center.len(), what: "rule center" });
        }
        if self.transform.nrows() != n || self.transform.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.transform.nrows(), what: "rule transform" });
        }
        if self.beta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.beta.len(), what: "rule beta" });
        }
        if self.delta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.delta.len(), what: "rule delta" });
        }
        if self.center.iter().any(|v| !v.is_finite()) || self.transform.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite rule geometry".into()));
        }
        for j in 0..n {
            ShapeParams::new(0.0, 1.0, self.beta[j], self.delta[j])?;
        }
        if !(self.v1.is_finite() && self.v2.is_finite() && self.consequent.is_finite()) {
            return Err(Error::Domain("non-finite rule weight or consequent".into()));
        }
        if self.v1 * self.v1 + self.v2 * self.v2 == 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(())
    }

    /// `z = gamma (x - m)`.
    pub fn transform_features(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.center.len() {
            return Err(Error::DimensionMismatch { expected: self.center.len(), actual: x.len(), what: "input" });
        }
        Ok(&self.transform * (x - &self.center))
    }

    /// Fuzzification intermediates for every transformed feature.
    pub(crate) fn activations(&self, z: &DVector<f64>) -> Vec<UnitActivation> {
        (0..z.len()).map(|j| fuzzy::unit_activation(z[j], self.beta[j], self.delta[j])).collect()
    }

    /// Lower/upper membership pairs for every transformed feature.
    pub fn fuzzify(&self, z: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
        if z.len() != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.beta.len(), actual: z.len(), what: "feature vector" });
        }
        Ok(self.activations(z).iter().map(|a| (a.lower, a.upper)).collect())
    }

    /// Firing interval: product t-norm over the per-feature membership pairs.
    pub fn fire(&self, z: &DVector<f64>) -> Result<FiringInterval> {
        if z.len() != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.beta.len(), actual: z.len(), what: "feature vector" });
        }
        Ok(fire_from(&self.activations(z)))
    }

    /// Adaptive Nie-Tan reduction: `(v1^2 lower + v2^2 upper) / (v1^2 + v2^2)`.
    pub fn type_reduce(&self, fi: FiringInterval) -> Result<f64> {
        let (w_lower, w_upper) = self.reduction_weights()?;
        Ok(w_lower * fi.lower + w_upper * fi.upper)
    }

    /// `(v1^2, v2^2) / (v1^2 + v2^2)`; errors when both weights are zero.
    pub fn reduction_weights(&self) -> Result<(f64, f64)> {
        let a = self.v1 * self.v1;
        let b = self.v2 * self.v2;
        let s = a + b;
        if s == 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok((a / s, b / s))
    }
}

/// Multiplies membership factors; switches to exponent summation past
/// [`LOG_SPACE_THRESHOLD`] features. Each factor is `exp(-pow/2)`, so the log
/// of the product is exactly `-sum(pow)/2` with no `ln` round trip.
fn fire_from(acts: &[UnitActivation]) -> FiringInterval {
    if acts.len() <= LOG_SPACE_THRESHOLD {
        let mut lower = 1.0;
        let mut upper = 1.0;
        for a in acts {
            lower *= a.lower;
            upper *= a.upper;
        }
        FiringInterval { lower, upper }
    } else {
        let mut sum_lower = 0.0;
        let mut sum_upper = 0.0;
        for a in acts {
            sum_lower += a.pow_lower;
            sum_upper += a.pow_upper;
        }
        FiringInterval { lower: (-0.5 * sum_lower).exp(), upper: (-0.5 * sum_upper).exp() }
    }
}

/// A complete rule base over a fixed input dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    inputs: usize,
    pub rules: Vec<Rule>,
    pub output_mode: OutputMode,
}

impl Network {
    /// Builds a network in additive output mode, validating every rule.
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        Self::with_mode(rules, OutputMode::Additive)
    }

    pub fn with_mode(rules: Vec<Rule>, output_mode: OutputMode) -> Result<Self> {
        let first = rules.first().ok_or_else(|| Error::Config("network needs at least one rule".into()))?;
        let inputs = first.center.len();
        let net = Network { inputs, rules, output_mode };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        for rule in &self.rules {
            rule.validate(self.inputs)?;
        }
        Ok(())
    }

    /// Input dimensionality n (fixed at construction).
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Rule count R.
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::DimensionMismatch { expected: self.inputs, actual: x.len(), what: "input" });
        }
        Ok(())
    }

    /// Single-sample evaluation without trace retention.
    pub fn forward(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_input(x)?;
        let mut output = 0.0;
        let mut phi_sum = 0.0;
        for rule in &self.rules {
            let z = &rule.transform * (x - &rule.center);
            let firing = fire_from(&rule.activations(&z));
            let phi = rule.type_reduce(firing)?;
            output += phi * rule.consequent;
            phi_sum += phi;
        }
        Ok(self.combine(output, phi_sum))
    }

    /// Single-sample evaluation retaining all intermediates.
    pub fn forward_traced(&self, x: &DVector<f64>) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut rules = Vec::with_capacity(self.rules.len());
        let mut output = 0.0;
        let mut phi_sum = 0.0;
        for rule in &self.rules {
            let z = &rule.transform * (x - &rule.center);
            let features = rule.activations(&z);
            let firing = fire_from(&features);
            let (w_lower, w_upper) = rule.reduction_weights()?;
            let phi = w_lower * firing.lower + w_upper * firing.upper;
            output += phi * rule.consequent;
            phi_sum += phi;
            rules.push(RuleTrace { z, features, firing, w_lower, w_upper, phi });
        }
        output = self.combine(output, phi_sum);
        Ok(ForwardTrace { rules, phi_sum, output })
    }

    fn combine(&self, weighted_sum: f64, phi_sum: f64) -> f64 {
        match self.output_mode {
            OutputMode::Additive => weighted_sum,
            OutputMode::Normalized => weighted_sum / phi_sum.max(PHI_SUM_FLOOR),
        }
    }

    /// Evaluates every row of `inputs` (N x n).
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(inputs.nrows());
        let mut x = DVector::zeros(inputs.ncols());
        for r in 0..inputs.nrows() {
            for c in 0..inputs.ncols() {
                x[c] = inputs[(r, c)];
            }
            out[r] = self.forward(&x)?;
        }
        Ok(out)
    }

    /// Mean width of the footprint of uncertainty, probed at `|z| = 0.5`,
    /// averaged over every rule and feature. Grows with the learned shape
    /// uncertainty `delta^2` and is the scalar used to compare uncertainty
    /// footprints across noise levels.
    pub fn mean_fou_width(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for rule in &self.rules {
            for j in 0..rule.beta.len() {
                let a = fuzzy::unit_activation(0.5, rule.beta[j], rule.delta[j]);
                total += a.upper - a.lower;
                count += 1;
            }
        }
        total / count as f64
    }
}

/// Antecedent-plus-consequent parameter count `R (n^2 + 3n + 1)`: per rule,
/// n^2 transform entries, n centers, n shape regulators, n uncertainty
/// regulators, and one consequent.
pub fn param_count(rules: usize, inputs: usize) -> usize {
    rules * (inputs * inputs + 3 * inputs + 1)
}

/// Full trainable count `R (n^2 + 3n + 3)`: [`param_count`] plus the two
/// type-reduction weights of each rule.
pub fn trainable_count(rules: usize, inputs: usize) -> usize {
    param_count(rules, inputs) + 2 * rules
}
