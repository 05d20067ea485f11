//! Hierarchical Levenberg-Marquardt training.
//!
//! The trainable parameters split into six groups (feature transforms,
//! centers, consequents, shape regulators, uncertainty regulators,
//! type-reduction weights). Each group gets its own damped normal-equation
//! solve and its own persistent trust-region scalar; the outer loop cycles
//! groups until the validation error stops improving. Analytic Jacobians are
//! assembled from forward traces; a central finite-difference twin exists
//! solely to certify them and is never used for training.
//!
//! Sign conventions: residuals are `e = y_hat - y*`, steps are
//! `delta = -(J^T J + lambda I)^{-1} J^T e`, and lambda shrinks by a factor
//! `eta` on improvement, grows by `eta` on regression, and stays put on an
//! exact tie. A step that increases the training error is rolled back and
//! retried with the boosted lambda a bounded number of times.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fuzzy::project_shape;
use crate::network::{Network, OutputMode};

/// Guard below which `1/z` factors in the transform/center partials are
/// replaced by their zero limit.
const Z_GUARD: f64 = 1e-12;

/// One of the six trainable parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Feature transforms, R n^2 entries, rule-major then row-major.
    Gamma,
    /// Rule centers, R n entries.
    Center,
    /// Rule consequents, R entries.
    Consequent,
    /// Shape regulators, R n entries.
    Beta,
    /// Shape-uncertainty regulators, R n entries.
    Delta,
    /// Type-reduction weights, 2R entries: all v1, then all v2.
    TypeRed,
}

/// Canonical training order of the groups.
pub const GROUP_ORDER: [ParamGroup; 6] = [
    ParamGroup::Gamma,
    ParamGroup::Center,
    ParamGroup::Consequent,
    ParamGroup::Beta,
    ParamGroup::Delta,
    ParamGroup::TypeRed,
];

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Gamma => "gamma",
            ParamGroup::Center => "center",
            ParamGroup::Consequent => "consequent",
            ParamGroup::Beta => "beta",
            ParamGroup::Delta => "delta",
            ParamGroup::TypeRed => "type_reduction",
        }
    }

    /// Flat length of this group for R rules over n inputs.
    pub fn len(self, rules: usize, inputs: usize) -> usize {
        match self {
            ParamGroup::Gamma => rules * inputs * inputs,
            ParamGroup::Center | ParamGroup::Beta | ParamGroup::Delta => rules * inputs,
            ParamGroup::Consequent => rules,
            ParamGroup::TypeRed => 2 * rules,
        }
    }
}

/// Reads a group as a flat vector in canonical order.
pub fn get_group(net: &Network, group: ParamGroup) -> DVector<f64> {
    let n = net.inputs();
    let r = net.rule_count();
    let mut out = DVector::zeros(group.len(r, n));
    for (i, rule) in net.rules.iter().enumerate() {
        match group {
            ParamGroup::Gamma => {
                for j in 0..n {
                    for l in 0..n {
                        out[(i * n + j) * n + l] = rule.transform[(j, l)];
                    }
                }
            }
            ParamGroup::Center => {
                for j in 0..n {
                    out[i * n + j] = rule.center[j];
                }
            }
            ParamGroup::Consequent => out[i] = rule.consequent,
            ParamGroup::Beta => {
                for j in 0..n {
                    out[i * n + j] = rule.beta[j];
                }
            }
            ParamGroup::Delta => {
                for j in 0..n {
                    out[i * n + j] = rule.delta[j];
                }
            }
            ParamGroup::TypeRed => {
                out[i] = rule.v1;
                out[r + i] = rule.v2;
            }
        }
    }
    out
}

/// Writes a flat group vector back into the network.
///
/// With `project` set, rule invariants are restored afterwards: shape pairs
/// are clamped so `beta^2 - delta^2 > 0`, and a rule whose two type-reduction
/// weights both land on zero is reset to (0.5, 0.5). The raw path exists for
/// the finite-difference oracle, which needs exact symmetric perturbations.
pub fn set_group(net: &mut Network, group: ParamGroup, values: &DVector<f64>, project: bool) -> Result<()> {
    let n = net.inputs();
    let r = net.rule_count();
    let expected = group.len(r, n);
    if values.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: values.len(), what: "group vector" });
    }
    for (i, rule) in net.rules.iter_mut().enumerate() {
        match group {
            ParamGroup::Gamma => {
                for j in 0..n {
                    for l in 0..n {
                        rule.transform[(j, l)] = values[(i * n + j) * n + l];
                    }
                }
            }
            ParamGroup::Center => {
                for j in 0..n {
                    rule.center[j] = values[i * n + j];
                }
            }
            ParamGroup::Consequent => rule.consequent = values[i],
            ParamGroup::Beta => {
                for j in 0..n {
                    rule.beta[j] = values[i * n + j];
                    if project {
                        let (b, d) = project_shape(rule.beta[j], rule.delta[j]);
                        rule.beta[j] = b;
                        rule.delta[j] = d;
                    }
                }
            }
            ParamGroup::Delta => {
                for j in 0..n {
                    rule.delta[j] = values[i * n + j];
                    if project {
                        let (b, d) = project_shape(rule.beta[j], rule.delta[j]);
                        rule.beta[j] = b;
                        rule.delta[j] = d;
                    }
                }
            }
            ParamGroup::TypeRed => {
                rule.v1 = values[i];
                rule.v2 = values[r + i];
                if project && rule.v1 * rule.v1 + rule.v2 * rule.v2 == 0.0 {
                    rule.v1 = 0.5;
                    rule.v2 = 0.5;
                }
            }
        }
    }
    Ok(())
}

/// Residuals `e[k] = y_hat(x_k) - y*_k`.
pub fn error_vector(net: &Network, ds: &Dataset) -> Result<DVector<f64>> {
    Ok(net.predict(&ds.inputs)? - &ds.targets)
}

fn require_additive(net: &Network) -> Result<()> {
    if net.output_mode != OutputMode::Additive {
        return Err(Error::Config(
            "training derivatives cover the additive output mode only; normalized mode is inference-only".into(),
        ));
    }
    Ok(())
}

/// Analytic Jacobian `J[k][p] = d y_hat(x_k) / d theta_p` for one group, plus
/// the network outputs from the same pass.
fn jacobian_with_outputs(net: &Network, ds: &Dataset, group: ParamGroup) -> Result<(DMatrix<f64>, DVector<f64>)> {
    require_additive(net)?;
    let n = net.inputs();
    let r = net.rule_count();
    let rows = ds.len();
    let mut jac = DMatrix::zeros(rows, group.len(r, n));
    let mut outputs = DVector::zeros(rows);

    let mut gz = DVector::zeros(n);
    for k in 0..rows {
        let x = ds.row(k);
        let trace = net.forward_traced(&x)?;
        outputs[k] = trace.output;
        for (i, (rule, rt)) in net.rules.iter().zip(trace.rules.iter()).enumerate() {
            let y = rule.consequent;
            // Per-feature products w_lower f_lower t_lower (and upper twin):
            // derivatives of exp(-sum(t)/2) need no leave-one-out products.
            let g_low = |j: usize| rt.w_lower * rt.firing.lower * rt.features[j].pow_lower;
            let g_up = |j: usize| rt.w_upper * rt.firing.upper * rt.features[j].pow_upper;
            match group {
                ParamGroup::Consequent => jac[(k, i)] = rt.phi,
                ParamGroup::TypeRed => {
                    let s = rule.v1 * rule.v1 + rule.v2 * rule.v2;
                    let gap = rt.firing.lower - rt.firing.upper;
                    jac[(k, i)] = y * 2.0 * rule.v1 * rule.v2 * rule.v2 * gap / (s * s);
                    jac[(k, r + i)] = y * 2.0 * rule.v2 * rule.v1 * rule.v1 * (-gap) / (s * s);
                }
                ParamGroup::Beta => {
                    for j in 0..n {
                        let u = rt.features[j].z * rt.features[j].z;
                        if u > 0.0 {
                            jac[(k, i * n + j)] = -y * rule.beta[j] * u.ln() * (g_low(j) + g_up(j));
                        }
                    }
                }
                ParamGroup::Delta => {
                    for j in 0..n {
                        let f = &rt.features[j];
                        let u = f.z * f.z;
                        if u > 0.0 {
                            // Exponent sensitivities swap sign across |z| = 1:
                            // the bound carrying beta^2 - delta^2 shrinks with
                            // delta, the one carrying beta^2 + delta^2 grows.
                            let d2 = 2.0 * rule.delta[j];
                            let (dp_low, dp_up) = if f.inside { (-d2, d2) } else { (d2, -d2) };
                            jac[(k, i * n + j)] = -0.5 * y * u.ln() * (g_low(j) * dp_low + g_up(j) * dp_up);
                        }
                    }
                }
                ParamGroup::Center | ParamGroup::Gamma => {
                    for j in 0..n {
                        let f = &rt.features[j];
                        gz[j] = if f.z.abs() > Z_GUARD {
                            (g_low(j) * f.exp_lower + g_up(j) * f.exp_upper) / f.z
                        } else {
                            0.0
                        };
                    }
                    if group == ParamGroup::Center {
                        // z_l = sum_m gamma[l][m] (x_m - center_m), so center
                        // component j reaches every feature through column j.
                        for j in 0..n {
                            let mut acc = 0.0;
                            for l in 0..n {
                                acc += rule.transform[(l, j)] * gz[l];
                            }
                            jac[(k, i * n + j)] = y * acc;
                        }
                    } else {
                        let base = i * n * n;
                        for j in 0..n {
                            if gz[j] == 0.0 {
                                continue;
                            }
                            for l in 0..n {
                                let psi = x[l] - rule.center[l];
                                jac[(k, base + j * n + l)] = -y * psi * gz[j];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((jac, outputs))
}

/// Analytic Jacobian of the network outputs with respect to one group.
pub fn jacobian(net: &Network, ds: &Dataset, group: ParamGroup) -> Result<DMatrix<f64>> {
    Ok(jacobian_with_outputs(net, ds, group)?.0)
}

/// Central finite-difference Jacobian, the verification oracle. Steps are
/// `h = h_scale * max(1, |theta|)` per parameter, applied without invariant
/// projection so the two evaluations stay symmetric about the base point.
pub fn fd_jacobian(net: &Network, ds: &Dataset, group: ParamGroup, h_scale: f64) -> Result<DMatrix<f64>> {
    require_additive(net)?;
    if !h_scale.is_finite() || h_scale <= 0.0 {
        return Err(Error::Domain(format!("step scale must be positive, got {h_scale}")));
    }
    let mut work = net.clone();
    let theta = get_group(net, group);
    let mut jac = DMatrix::zeros(ds.len(), theta.len());
    for p in 0..theta.len() {
        let h = h_scale * theta[p].abs().max(1.0);
        let mut plus = theta.clone();
        plus[p] += h;
        set_group(&mut work, group, &plus, false)?;
        let y_plus = work.predict(&ds.inputs)?;
        let mut minus = theta.clone();
        minus[p] -= h;
        set_group(&mut work, group, &minus, false)?;
        let y_minus = work.predict(&ds.inputs)?;
        for k in 0..ds.len() {
            jac[(k, p)] = (y_plus[k] - y_minus[k]) / (2.0 * h);
        }
    }
    set_group(&mut work, group, &theta, false)?;
    Ok(jac)
}

/// Deterministic well-conditioned network plus sample set for derivative
/// certification. Shape regulators are drawn with `beta^2 - delta^2 >= 0.7`
/// so the `|z| -> 0` cusp in the transform/center partials stays mild and
/// central finite differences are trustworthy away from the `|z| = 1`
/// branch boundary. Targets are random; certification only compares
/// derivative routes, never fit quality.
pub fn certification_case(seed: u64, rules: usize, inputs: usize, samples: usize) -> (Network, Dataset) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = inputs;
    let rules: Vec<crate::network::Rule> = (0..rules)
        .map(|_| {
            let beta: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen_range(1.0..1.6));
            let delta = DVector::from_fn(n, |j, _| rng.gen_range(0.0..0.55) * beta[j]);
            crate::network::Rule {
                center: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
                transform: DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.2..1.2)),
                beta,
                delta,
                v1: rng.gen_range(0.2..1.2),
                v2: rng.gen_range(0.2..1.2),
                consequent: rng.gen_range(-4.0..4.0),
            }
        })
        .collect();
    let net = Network::new(rules).expect("certification rules are admissible by construction");
    let inputs = DMatrix::from_fn(samples, n, |_, _| rng.gen_range(-2.0..2.0));
    let targets = DVector::from_fn(samples, |_, _| rng.gen_range(-2.0..2.0));
    (net, Dataset::new(inputs, targets).expect("row counts match by construction"))
}

/// True when the parameter at `index` of `group` has a one-sided derivative
/// at `x`: a transformed feature it influences sits within `tol` of the
/// `|z| = 1` branch boundary, where the membership exponents swap and the
/// analytic derivative is only one-sided. Finite differences straddle the
/// boundary there, so certification skips such entries.
pub fn kink_sensitive(net: &Network, x: &DVector<f64>, group: ParamGroup, index: usize, tol: f64) -> bool {
    let n = net.inputs();
    let kinky = |i: usize, j: usize| match net.rules[i].transform_features(x) {
        Ok(z) => (z[j].abs() - 1.0).abs() < tol,
        Err(_) => false,
    };
    match group {
        ParamGroup::Consequent | ParamGroup::TypeRed => false,
        ParamGroup::Beta | ParamGroup::Delta => kinky(index / n, index % n),
        // gamma row j moves only feature j of its rule.
        ParamGroup::Gamma => kinky(index / (n * n), (index / n) % n),
        // A center component moves every feature of its rule.
        ParamGroup::Center => (0..n).any(|j| kinky(index / n, j)),
    }
}

/// Per-group trust-region state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmState {
    pub lambda: f64,
    pub eta: f64,
}

impl LmState {
    pub fn new(lambda0: f64, eta: f64) -> LmState {
        LmState { lambda: lambda0, eta }
    }
}

/// Applies the damping schedule to one observed error transition: shrink on
/// improvement, grow on regression, hold on an exact tie.
pub fn update_lambda(state: &mut LmState, prev_sse: f64, new_sse: f64) {
    if new_sse < prev_sse {
        state.lambda /= state.eta;
    } else if new_sse > prev_sse {
        state.lambda *= state.eta;
    }
}

/// What one damped step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Training sum of squared errors after the step (unchanged if rejected).
    pub sse: f64,
    /// Whether a parameter change was kept.
    pub accepted: bool,
    /// Whether the kept change strictly decreased the SSE (false on ties).
    pub improved: bool,
    /// Number of rolled-back attempts before the outcome.
    pub retries: usize,
}

fn solve_damped(jtj: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let p = jtj.nrows();
    let damped = jtj + DMatrix::identity(p, p) * lambda;
    if let Some(chol) = damped.clone().cholesky() {
        return Some(chol.solve(rhs));
    }
    // Cholesky can fail on semidefinite J^T J with tiny lambda; nudge the
    // diagonal by a trace-scaled jitter and try once more.
    let jitter = 1e-12 * damped.trace() / p as f64;
    (damped + DMatrix::identity(p, p) * jitter).cholesky().map(|c| c.solve(rhs))
}

/// One damped least-squares step on a single group: solve, apply, keep if the
/// training SSE did not increase, otherwise roll back, boost lambda, and
/// re-solve with the same Jacobian up to `max_retries` times.
pub fn lm_step(
    net: &mut Network,
    ds: &Dataset,
    group: ParamGroup,
    state: &mut LmState,
    max_retries: usize,
) -> Result<StepOutcome> {
    let (jac, outputs) = jacobian_with_outputs(net, ds, group)?;
    let e = &outputs - &ds.targets;
    let sse_prev = e.norm_squared();
    let jtj = jac.transpose() * &jac;
    let neg_jte = -(jac.transpose() * &e);
    let theta = get_group(net, group);

    let mut retries = 0;
    loop {
        let delta = solve_damped(&jtj, &neg_jte, state.lambda);
        match delta {
            Some(delta) if delta.iter().all(|v| v.is_finite()) => {
                set_group(net, group, &(&theta + &delta), true)?;
                let e_new = error_vector(net, ds)?;
                let sse_new = e_new.norm_squared();
                if sse_new.is_finite() && sse_new <= sse_prev {
                    update_lambda(state, sse_prev, sse_new);
                    return Ok(StepOutcome {
                        sse: sse_new,
                        accepted: true,
                        improved: sse_new < sse_prev,
                        retries,
                    });
                }
                set_group(net, group, &theta, true)?;
                state.lambda *= state.eta;
            }
            _ => state.lambda *= state.eta,
        }
        retries += 1;
        if retries > max_retries {
            return Ok(StepOutcome { sse: sse_prev, accepted: false, improved: false, retries: retries - 1 });
        }
    }
}

/// How the validation rows are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationSplit {
    /// Last fraction of the rows (temporal tail; right choice for series).
    Tail,
    /// Seeded random subset (right choice for i.i.d. regression).
    Random { seed: u64 },
}

/// Training configuration. Defaults: lambda0 = 1, eta = 1.001, tail
/// validation split of 0.2, outer cap 100, inner cap 50, patience 5,
/// 12 step retries, all six groups in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda0: f64,
    pub eta: f64,
    /// Fraction of rows held out for stopping; 0 stops on training error.
    pub validation_fraction: f64,
    pub validation_split: ValidationSplit,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Consecutive non-improving iterations tolerated before a loop stops.
    pub patience: usize,
    pub max_retries: usize,
    pub groups: Vec<ParamGroup>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda0: 1.0,
            eta: 1.001,
            validation_fraction: 0.2,
            validation_split: ValidationSplit::Tail,
            max_outer: 100,
            max_inner: 50,
            patience: 5,
            max_retries: 12,
            groups: GROUP_ORDER.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::Config(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must exceed 1, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.patience == 0 {
            return Err(Error::Config("epoch caps and patience must be at least 1".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::Config("need at least one parameter group".into()));
        }
        let unique: HashSet<_> = self.groups.iter().collect();
        if unique.len() != self.groups.len() {
            return Err(Error::Config("parameter groups must be unique".into()));
        }
        Ok(())
    }
}

/// One recorded training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub outer_epoch: usize,
    pub group: ParamGroup,
    pub inner_iter: usize,
    /// Trust-region scalar after the step.
    pub lambda: f64,
    /// Training RMSE after the step, in original target units.
    pub train_rmse: f64,
    /// Validation RMSE after the step, when a validation split exists.
    pub val_rmse: Option<f64>,
    /// Training SSE after the step (normalized units; drives the schedule).
    pub sse: f64,
    pub accepted: bool,
    pub improved: bool,
    pub retries: usize,
}

/// Full training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
    /// Monitored RMSE (validation when present, else training) before training.
    pub initial_rmse: f64,
    /// Best monitored RMSE reached; the returned network is its snapshot.
    pub best_rmse: f64,
}

impl TrainHistory {
    /// Writes `outer_epoch,group,inner_iter,lambda,train_rmse,val_rmse` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let map_err = |e: csv::Error| Error::Csv {
            path: path.display().to_string(),
            row: None,
            column: None,
            message: e.to_string(),
        };
        let mut wtr = csv::Writer::from_path(path).map_err(map_err)?;
        wtr.write_record(["outer_epoch", "group", "inner_iter", "lambda", "train_rmse", "val_rmse"])
            .map_err(map_err)?;
        for row in &self.rows {
            wtr.write_record([
                row.outer_epoch.to_string(),
                row.group.name().to_string(),
                row.inner_iter.to_string(),
                row.lambda.to_string(),
                row.train_rmse.to_string(),
                row.val_rmse.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(map_err)?;
        }
        wtr.flush().map_err(Error::Io)?;
        Ok(())
    }
}

/// A trained network with its history.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub network: Network,
    pub history: TrainHistory,
}

fn rmse_in_original_units(net: &Network, ds: &Dataset, unit_scale: f64) -> Result<f64> {
    let e = error_vector(net, ds)?;
    Ok((e.norm_squared() / ds.len() as f64).sqrt() * unit_scale)
}

/// Trains a copy of `net` on `ds` and returns the snapshot with the best
/// monitored RMSE. The monitor is the validation RMSE when a split is
/// configured, the training RMSE otherwise; both loops stop after `patience`
/// consecutive iterations without strict improvement. Aborts with a
/// divergence error if the monitor exceeds a million times its initial value.
pub fn fit(net: &Network, ds: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    net.validate()?;
    require_additive(net)?;

    let n_total = ds.len();
    let n_val = (n_total as f64 * cfg.validation_fraction).round() as usize;
    let (train, val) = if n_val == 0 {
        (ds.clone(), None)
    } else {
        if n_total - n_val < 2 {
            return Err(Error::Config(format!(
                "validation fraction {} leaves fewer than 2 of {} rows for training",
                cfg.validation_fraction, n_total
            )));
        }
        let (t, v) = match cfg.validation_split {
            ValidationSplit::Tail => ds.split_at(n_total - n_val)?,
            ValidationSplit::Random { seed } => ds.split_shuffled(n_total - n_val, seed)?,
        };
        (t, Some(v))
    };
    // Scale factor from normalized to original target units; affine, so it
    // never changes which of two errors is smaller.
    let unit_scale = ds.normalization.as_ref().map(|m| m.target.scale.abs()).unwrap_or(1.0);

    let mut current = net.clone();
    let monitor_of = |net: &Network| -> Result<f64> {
        match &val {
            Some(v) => rmse_in_original_units(net, v, unit_scale),
            None => rmse_in_original_units(net, &train, unit_scale),
        }
    };

    let initial_rmse = monitor_of(&current)?;
    let divergence_limit = 1e6 * (initial_rmse + 1e-12);
    let mut best = current.clone();
    let mut best_rmse = initial_rmse;
    let mut states: Vec<LmState> = cfg.groups.iter().map(|_| LmState::new(cfg.lambda0, cfg.eta)).collect();
    let mut rows = Vec::new();
    let mut outer_stall = 0;

    'outer: for epoch in 0..cfg.max_outer {
        let epoch_entry_best = best_rmse;
        let mut epoch_changed = false;
        for (gi, &group) in cfg.groups.iter().enumerate() {
            let mut loop_best = monitor_of(&current)?;
            let mut stall = 0;
            for iter in 0..cfg.max_inner {
                let outcome = lm_step(&mut current, &train, group, &mut states[gi], cfg.max_retries)?;
                epoch_changed |= outcome.improved || outcome.retries > 0;
                let train_rmse = (outcome.sse / train.len() as f64).sqrt() * unit_scale;
                let val_rmse = match &val {
                    Some(v) => Some(rmse_in_original_units(&current, v, unit_scale)?),
                    None => None,
                };
                let monitor = val_rmse.unwrap_or(train_rmse);
                rows.push(HistoryRow {
                    outer_epoch: epoch,
                    group,
                    inner_iter: iter,
                    lambda: states[gi].lambda,
                    train_rmse,
                    val_rmse,
                    sse: outcome.sse,
                    accepted: outcome.accepted,
                    improved: outcome.improved,
                    retries: outcome.retries,
                });
                if monitor < best_rmse {
                    best_rmse = monitor;
                    best = current.clone();
                }
                if monitor > divergence_limit {
                    return Err(Error::Divergence { initial_rmse, current_rmse: monitor });
                }
                if monitor < loop_best {
                    loop_best = monitor;
                    stall = 0;
                } else {
                    stall += 1;
                    if stall >= cfg.patience {
                        break;
                    }
                }
            }
        }
        if best_rmse < epoch_entry_best {
            outer_stall = 0;
        } else {
            outer_stall += 1;
            // A whole epoch with no kept improvement, no lambda movement, and
            // no monitor progress is an exact fixed point; later epochs would
            // replay it verbatim.
            if outer_stall >= cfg.patience || !epoch_changed {
                break 'outer;
            }
        }
    }

    Ok(FitResult { network: best, history: TrainHistory { rows, initial_rmse, best_rmse } })
}
