use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{split, SplitSpec};
use crate::error::{Error, Result};
use crate::forest::{forest_fit, Forest, ForestConfig};
use crate::model::{check_len, Regressor, Table};
use crate::neuralnet::{mlp_train, rbf_train, CenterPolicy, MlpModel, MlpTrainConfig, RbfNetwork};

/// Learned regressor families driven by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Mlp,
    Rbf,
    Forest,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Mlp, ModelFamily::Rbf, ModelFamily::Forest];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Mlp => "mlp",
            ModelFamily::Rbf => "rbf",
            ModelFamily::Forest => "forest",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelFamily::Mlp),
            "rbf" => Ok(ModelFamily::Rbf),
            "forest" | "rf" => Ok(ModelFamily::Forest),
            other => Err(Error::invalid(format!("unknown model family `{other}`"))),
        }
    }
}

/// Hyperparameters of one trainable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Mlp {
        hidden: [usize; 2],
        #[serde(default)]
        train: MlpTrainConfig,
    },
    Rbf {
        spread: f64,
        #[serde(default)]
        policy: CenterPolicy,
    },
    Forest {
        #[serde(default)]
        config: ForestConfig,
    },
    /// Predicts the training mean; reference point for CV checks.
    Mean,
}

impl ModelSpec {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Mlp => ModelSpec::Mlp {
                hidden: [10, 5],
                train: MlpTrainConfig::default(),
            },
            ModelFamily::Rbf => ModelSpec::Rbf {
                spread: 1.0,
                policy: CenterPolicy::default(),
            },
            ModelFamily::Forest => ModelSpec::Forest {
                config: ForestConfig::default(),
            },
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ModelSpec::Mlp { .. } => "mlp",
            ModelSpec::Rbf { .. } => "rbf",
            ModelSpec::Forest { .. } => "forest",
            ModelSpec::Mean => "mean",
        }
    }

    /// Copy with every internal seed set to `seed`.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::Mlp { train, .. } => train.seed = seed,
            ModelSpec::Forest { config } => config.seed = seed,
            ModelSpec::Rbf { .. } | ModelSpec::Mean => {}
        }
        s
    }

    /// Short `key=value` description used in result tables.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Mlp { hidden, train } => format!(
                "mlp h1={} h2={} min_gradient={}",
                hidden[0], hidden[1], train.min_gradient
            ),
            ModelSpec::Rbf { spread, .. } => format!("rbf spread={spread}"),
            ModelSpec::Forest { config } => format!(
                "forest n_trees={} max_splits={}",
                config.n_trees, config.max_splits
            ),
            ModelSpec::Mean => "mean".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanModel {
    pub n_inputs: usize,
    pub mean: Vec<f64>,
}

impl Regressor for MeanModel {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_outputs(&self) -> usize {
        self.mean.len()
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_inputs, input.len())?;
        Ok(self.mean.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Mlp(MlpModel),
    Rbf(RbfNetwork),
    Forest(Forest),
    Mean(MeanModel),
}

impl TrainedModel {
    /// Structural consistency checks for models read from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("inconsistent model: {m}")));
        match self {
            TrainedModel::Mlp(m) => {
                let s = m.network.layer_sizes();
                if m.input_scaling.width() != s[0] || m.target_scaling.width() != s[3] {
                    return bad("scaler width differs from network shape");
                }
            }
            TrainedModel::Rbf(m) => {
                let (n, w, k) = (m.centers.len(), m.input_scaling.width(), m.bias.len());
                if m.weights.len() != n || m.spreads.len() != n {
                    return bad("center, spread and weight counts differ");
                }
                if m.centers.iter().any(|c| c.len() != w) || m.weights.iter().any(|r| r.len() != k) {
                    return bad("center or weight row width");
                }
                if m.spreads.iter().any(|&s| !(s > 0.0)) {
                    return bad("spreads must be > 0");
                }
            }
            TrainedModel::Forest(f) => {
                if f.trees.is_empty() || f.trees.iter().any(|t| t.n_features != f.n_features) {
                    return bad("forest trees");
                }
            }
            TrainedModel::Mean(_) => {}
        }
        Ok(())
    }

    fn inner(&self) -> &dyn Regressor {
        match self {
            TrainedModel::Mlp(m) => m,
            TrainedModel::Rbf(m) => m,
            TrainedModel::Forest(m) => m,
            TrainedModel::Mean(m) => m,
        }
    }
}

impl Regressor for TrainedModel {
    fn n_inputs(&self) -> usize {
        self.inner().n_inputs()
    }

    fn n_outputs(&self) -> usize {
        self.inner().n_outputs()
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.inner().predict(input)
    }
}

/// Fraction of the training rows held out for MLP early stopping when no
/// validation table is supplied.
pub const HOLDOUT_FRACTION: f64 = 0.2;

/// Seeded `(fit, holdout)` partition of `table`.
pub fn holdout(table: &Table, fraction: f64, seed: u64) -> Result<(Table, Table)> {
    let s = split(table.len(), &SplitSpec::new(1.0 - fraction, fraction, 0.0, seed)?)?;
    if s.train.is_empty() || s.validation.is_empty() {
        return Err(Error::invalid(format!(
            "cannot hold out {fraction} of {} rows",
            table.len()
        )));
    }
    Ok((table.subset(&s.train), table.subset(&s.validation)))
}

/// Trains `spec` on `train`. The MLP early-stops on `validation`, or on a
/// seeded holdout of `train` when none is given.
pub fn train_model(spec: &ModelSpec, train: &Table, validation: Option<&Table>) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match spec {
        ModelSpec::Mlp { hidden, train: cfg } => {
            let (model, _) = match validation.filter(|v| !v.is_empty()) {
                Some(v) => mlp_train(train, v, *hidden, cfg)?,
                None => {
                    let (fit, hold) = holdout(train, HOLDOUT_FRACTION, cfg.seed)?;
                    mlp_train(&fit, &hold, *hidden, cfg)?
                }
            };
            Ok(TrainedModel::Mlp(model))
        }
        ModelSpec::Rbf { spread, policy } => Ok(TrainedModel::Rbf(rbf_train(train, *spread, *policy)?)),
        ModelSpec::Forest { config } => Ok(TrainedModel::Forest(forest_fit(train, config)?)),
        ModelSpec::Mean => {
            let k = train.n_outputs();
            let mean = (0..k)
                .map(|j| train.targets.iter().map(|y| y[j]).sum::<f64>() / train.len() as f64)
                .collect();
            Ok(TrainedModel::Mean(MeanModel {
                n_inputs: train.n_inputs(),
                mean,
            }))
        }
    }
}

/// Predictions for every row of `table`.
pub fn predict_table(model: &dyn Regressor, table: &Table) -> Result<Vec<Vec<f64>>> {
    model.predict_many(&table.inputs)
}

/// RMSE pooled over every (row, output) pair.
pub fn pooled_rmse(model: &dyn Regressor, table: &Table) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut s = 0.0;
    let mut n = 0usize;
    for (x, t) in table.inputs.iter().zip(&table.targets) {
        let y = model.predict(x)?;
        check_len(t.len(), y.len())?;
        for (a, b) in y.iter().zip(t) {
            s += (a - b).powi(2);
            n += 1;
        }
    }
    Ok((s / n as f64).sqrt())
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk envelope for a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedModel {
    pub format_version: u32,
    pub task: crate::harness::Task,
    /// Input column names in the order the model expects them.
    pub features: Vec<String>,
    pub model: TrainedModel,
}

impl SavedModel {
    pub fn new(task: crate::harness::Task, features: Vec<String>, model: TrainedModel) -> Self {
        SavedModel {
            format_version: MODEL_FORMAT_VERSION,
            task,
            features,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and sanity-checks a saved model.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: SavedModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "model format version {}",
                m.format_version
            )));
        }
        m.model.validate()?;
        check_len(m.model.n_inputs(), m.features.len())?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Task;

    fn line(n: usize) -> Table {
        let inputs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let targets = inputs.iter().map(|x| 3.0 * x[0] - 1.0).collect();
        Table::scalar(inputs, targets).unwrap()
    }

    #[test]
    fn mean_model_predicts_mean() {
        let t = Table::scalar(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 2.0, 6.0]).unwrap();
        let m = train_model(&ModelSpec::Mean, &t, None).unwrap();
        assert_eq!(m.predict(&[9.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn every_family_trains_and_predicts() {
        let t = line(120);
        for fam in ModelFamily::ALL {
            let spec = match ModelSpec::default_for(fam) {
                ModelSpec::Forest { config } => ModelSpec::Forest {
                    config: ForestConfig { n_trees: 10, ..config },
                },
                s => s,
            };
            let m = train_model(&spec, &t, None).unwrap();
            let rmse = pooled_rmse(&m, &t).unwrap();
            assert!(rmse < 0.2, "{fam}: {rmse}");
        }
    }

    #[test]
    fn saved_model_round_trip() {
        let t = line(60);
        let spec = ModelSpec::Forest {
            config: ForestConfig { n_trees: 3, ..ForestConfig::default() },
        };
        let m = train_model(&spec, &t, None).unwrap();
        let saved = SavedModel::new(Task::Pathloss, vec!["distance".into()], m);
        let text = saved.to_json().unwrap();
        let back = SavedModel::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        for x in &t.inputs {
            assert_eq!(back.model.predict(x).unwrap(), saved.model.predict(x).unwrap());
        }

        let bad = text.replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(SavedModel::from_json(&bad).is_err());
        let mut broken = serde_json::to_value(&saved).unwrap();
        broken["model"]["trees"] = serde_json::json!([]);
        assert!(SavedModel::from_json(&broken.to_string()).is_err());
        let mut wrong = saved.clone();
        wrong.features.push("extra".into());
        assert!(SavedModel::from_json(&wrong.to_json().unwrap()).is_err());
    }

    #[test]
    fn holdout_partitions_rows() {
        let t = line(50);
        let (a, b) = holdout(&t, 0.2, 4).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        assert!(holdout(&line(1), 0.2, 0).is_err());
    }

    #[test]
    fn spec_json_and_labels() {
        let s = ModelSpec::default_for(ModelFamily::Rbf).seeded(3);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"family\":\"rbf\""));
        assert_eq!(serde_json::from_str::<ModelSpec>(&j).unwrap(), s);
        let m: ModelSpec = serde_json::from_str(r#"{"family":"mlp","hidden":[4,3]}"#).unwrap();
        assert_eq!(m.label(), "mlp h1=4 h2=3 min_gradient=0.000001");
        assert_eq!("rf".parse::<ModelFamily>().unwrap(), ModelFamily::Forest);
        assert!("svm".parse::<ModelFamily>().is_err());
    }
}
