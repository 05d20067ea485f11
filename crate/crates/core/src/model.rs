//! Model persistence.
//!
//! A model file is a single self-describing JSON document carrying the input
//! dimensionality, every rule field, the output mode, and optionally the
//! normalization fitted on the training data. Numbers are written in shortest
//! round-trip decimal form, so save followed by load reproduces every `f64`
//! bit-for-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::network::{Network, OutputMode, Rule};

/// Format tag checked on load.
pub const FORMAT_VERSION: &str = "it2cfnn-v1";

#[derive(Debug, Serialize, Deserialize)]
struct RuleDoc {
    center: Vec<f64>,
    /// Row-major n x n transform; row j is feature j.
    transform: Vec<Vec<f64>>,
    beta: Vec<f64>,
    delta: Vec<f64>,
    v1: f64,
    v2: f64,
    consequent: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    version: String,
    inputs: usize,
    output_mode: String,
    rules: Vec<RuleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<Normalization>,
}

/// A trained network bundled with the scaling needed to accept raw inputs
/// and emit predictions in original target units.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub network: Network,
    pub normalization: Option<Normalization>,
}

impl SavedModel {
    pub fn new(network: Network, normalization: Option<Normalization>) -> Result<SavedModel> {
        if let Some(norm) = &normalization {
            if norm.inputs.len() != network.inputs() {
                return Err(Error::DimensionMismatch {
                    expected: network.inputs(),
                    actual: norm.inputs.len(),
                    what: "normalization columns",
                });
            }
        }
        Ok(SavedModel { network, normalization })
    }

    /// Predicts in original units: scales raw inputs into the network's
    /// training space when normalization is present and maps outputs back.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        match &self.normalization {
            None => self.network.predict(inputs),
            Some(norm) => {
                let mut scaled = inputs.clone();
                for c in 0..scaled.ncols().min(norm.inputs.len()) {
                    for r in 0..scaled.nrows() {
                        scaled[(r, c)] = norm.inputs[c].forward(scaled[(r, c)]);
                    }
                }
                let y = self.network.predict(&scaled)?;
                Ok(norm.invert_targets(&y))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.network.validate()?;
        let doc = ModelDoc {
            version: FORMAT_VERSION.to_string(),
            inputs: self.network.inputs(),
            output_mode: mode_name(self.network.output_mode).to_string(),
            rules: self.network.rules.iter().map(rule_to_doc).collect(),
            normalization: self.normalization.clone(),
        };
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SavedModel> {
        let doc: ModelDoc = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model version {:?}, expected {FORMAT_VERSION:?}",
                doc.version
            )));
        }
        let mode = match doc.output_mode.as_str() {
            "additive" => OutputMode::Additive,
            "normalized" => OutputMode::Normalized,
            other => return Err(Error::Config(format!("unknown output mode {other:?}"))),
        };
        let n = doc.inputs;
        let rules: Vec<Rule> = doc.rules.iter().map(|d| rule_from_doc(d, n)).collect::<Result<_>>()?;
        let network = Network::with_mode(rules, mode)?;
        if network.inputs() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: network.inputs(), what: "model inputs" });
        }
        SavedModel::new(network, doc.normalization)
    }
}

fn mode_name(mode: OutputMode) -> &'static str {
    match mode {
        OutputMode::Additive => "additive",
        OutputMode::Normalized => "normalized",
    }
}

fn rule_to_doc(rule: &Rule) -> RuleDoc {
    let n = rule.center.len();
    RuleDoc {
        center: rule.center.iter().copied().collect(),
        transform: (0..n).map(|j| (0..n).map(|l| rule.transform[(j, l)]).collect()).collect(),
        beta: rule.beta.iter().copied().collect(),
        delta: rule.delta.iter().copied().collect(),
        v1: rule.v1,
        v2: rule.v2,
        consequent: rule.consequent,
    }
}

fn rule_from_doc(doc: &RuleDoc, n: usize) -> Result<Rule> {
    if doc.transform.len() != n || doc.transform.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: doc.transform.len(), what: "rule transform" });
    }
    let mut transform = DMatrix::zeros(n, n);
    for (j, row) in doc.transform.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            transform[(j, l)] = v;
        }
    }
    Ok(Rule {
        center: DVector::from_vec(doc.center.clone()),
        transform,
        beta: DVector::from_vec(doc.beta.clone()),
        delta: DVector::from_vec(doc.delta.clone()),
        v1: doc.v1,
        v2: doc.v2,
        consequent: doc.consequent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnScale, NormMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_network(seed: u64, rules: usize, n: usize) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rules: Vec<Rule> = (0..rules)
            .map(|_| {
                let beta: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen_range(0.6..2.0));
                let delta = DVector::from_fn(n, |j, _| rng.gen_range(0.0..0.9) * beta[j]);
                Rule {
                    center: DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)),
                    transform: DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0)),
                    beta,
                    delta,
                    v1: rng.gen_range(0.1..1.0),
                    v2: rng.gen_range(0.1..1.0),
                    consequent: rng.gen_range(-5.0..5.0),
                }
            })
            .collect();
        Network::new(rules).unwrap()
    }

    #[test]
    fn round_trip_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let net = random_network(1, 3, 4);
        let model = SavedModel::new(net, None).unwrap();
        model.save(&path).unwrap();
        let loaded = SavedModel::load(&path).unwrap();
        assert_eq!(loaded.network, model.network);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0));
            let a = model.network.forward(&x).unwrap();
            let b = loaded.network.forward(&x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn normalization_block_round_trips_and_rescales() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let net = random_network(7, 2, 2);
        let norm = Normalization {
            mode: NormMode::MinMax01,
            inputs: vec![
                ColumnScale { offset: -2.0, scale: 5.0 },
                ColumnScale { offset: 0.5, scale: 1.5 },
            ],
            target: ColumnScale { offset: 1.0, scale: 9.0 },
        };
        let model = SavedModel::new(net, Some(norm.clone())).unwrap();
        model.save(&path).unwrap();
        let loaded = SavedModel::load(&path).unwrap();
        assert_eq!(loaded.normalization.as_ref().unwrap(), &norm);

        // Prediction must scale inputs forward and map outputs back.
        let raw = DMatrix::from_row_slice(1, 2, &[0.3, 1.1]);
        let scaled = DMatrix::from_row_slice(1, 2, &[(0.3 + 2.0) / 5.0, (1.1 - 0.5) / 1.5]);
        let direct = model.network.predict(&scaled).unwrap();
        let expected = direct[0] * 9.0 + 1.0;
        let got = loaded.predict(&raw).unwrap();
        assert!((got[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn version_and_shape_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = SavedModel::new(random_network(3, 1, 2), None).unwrap();
        model.save(&path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace(FORMAT_VERSION, "it2cfnn-v999");
        std::fs::write(&path, tampered).unwrap();
        match SavedModel::load(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(SavedModel::load(&path), Err(Error::Json(_))));
        assert!(SavedModel::load(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn mismatched_normalization_is_rejected() {
        let net = random_network(5, 1, 3);
        let norm = Normalization {
            mode: NormMode::ZScore,
            inputs: vec![ColumnScale::IDENTITY; 2],
            target: ColumnScale::IDENTITY,
        };
        assert!(SavedModel::new(net, Some(norm)).is_err());
    }
}
