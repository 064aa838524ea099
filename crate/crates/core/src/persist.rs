//! Versioned JSON model files.
//!
//! Trees are stored as pre-order node lists. Floats are written in their
//! shortest round-trip form, so a reloaded model predicts bit-identically.
//! Out-of-bag bookkeeping is not stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestHyperparams, ForestModel};
use crate::multilayer::{MultilayerConfig, MultilayerModel, Standardizer};
use crate::tree::{FlatNode, RegressionTree};

pub const FORMAT_NAME: &str = "sigmaforest-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ForestRecord {
    n_features: usize,
    hyperparams: ForestHyperparams,
    importances: Vec<f64>,
    trees: Vec<Vec<FlatNode>>,
}

impl ForestRecord {
    fn from_model(m: &ForestModel) -> Self {
        Self {
            n_features: m.n_features,
            hyperparams: m.hyperparams,
            importances: m.importances.clone(),
            trees: m.trees.iter().map(RegressionTree::to_preorder).collect(),
        }
    }

    fn into_model(self) -> Result<ForestModel> {
        if self.trees.is_empty() {
            return Err(Error::Format("forest has no trees".into()));
        }
        if self.importances.len() != self.n_features {
            return Err(Error::Format(format!(
                "{} importances for {} features",
                self.importances.len(),
                self.n_features
            )));
        }
        let trees = self
            .trees
            .iter()
            .map(|t| RegressionTree::from_preorder(t, self.n_features))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForestModel {
            trees,
            hyperparams: self.hyperparams,
            n_features: self.n_features,
            importances: self.importances,
            out_of_bag: Vec::new(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Body {
    Forest {
        feature_names: Vec<String>,
        forest: ForestRecord,
    },
    Multilayer {
        feature_names: Vec<String>,
        config: MultilayerConfig,
        hyperparams: ForestHyperparams,
        standardizer: Option<Standardizer>,
        layer1: Option<ForestRecord>,
        layer2: ForestRecord,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Body,
}

/// A plain forest with the names of its input columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedForest {
    pub feature_names: Vec<String>,
    pub forest: ForestModel,
}

/// Either kind of model file.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Forest(NamedForest),
    Multilayer(MultilayerModel),
}

impl SavedModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            SavedModel::Forest(f) => &f.feature_names,
            SavedModel::Multilayer(m) => m.feature_names(),
        }
    }
}

fn wrap(body: Body) -> Envelope {
    Envelope {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        body,
    }
}

fn forest_body(f: &NamedForest) -> Result<Body> {
    if f.feature_names.len() != f.forest.n_features() {
        return Err(Error::Config(format!(
            "{} feature names for a forest with {} features",
            f.feature_names.len(),
            f.forest.n_features()
        )));
    }
    Ok(Body::Forest {
        feature_names: f.feature_names.clone(),
        forest: ForestRecord::from_model(&f.forest),
    })
}

fn multilayer_body(m: &MultilayerModel) -> Body {
    Body::Multilayer {
        feature_names: m.feature_names.clone(),
        config: m.config,
        hyperparams: m.hyperparams,
        standardizer: m.standardizer,
        layer1: m.layer1.as_ref().map(ForestRecord::from_model),
        layer2: ForestRecord::from_model(&m.layer2),
    }
}

pub fn to_json(model: &SavedModel) -> Result<String> {
    let body = match model {
        SavedModel::Forest(f) => forest_body(f)?,
        SavedModel::Multilayer(m) => multilayer_body(m),
    };
    serde_json::to_string(&wrap(body)).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_json(text: &str) -> Result<SavedModel> {
    let probe: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("not a model file: {e}")))?;
    if probe.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
        return Err(Error::Format(format!("missing `format: {FORMAT_NAME}` marker")));
    }
    match probe.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Format(format!(
                "model format version {v} is not supported (expected {FORMAT_VERSION})"
            )))
        }
        None => return Err(Error::Format("missing format version".into())),
    }
    let env: Envelope = serde_json::from_value(probe).map_err(|e| Error::Format(e.to_string()))?;
    match env.body {
        Body::Forest { feature_names, forest } => {
            let forest = forest.into_model()?;
            if feature_names.len() != forest.n_features() {
                return Err(Error::Format("feature names do not match the forest".into()));
            }
            Ok(SavedModel::Forest(NamedForest { feature_names, forest }))
        }
        Body::Multilayer {
            feature_names,
            config,
            hyperparams,
            standardizer,
            layer1,
            layer2,
        } => {
            config.validate().map_err(|e| Error::Format(e.to_string()))?;
            let layer1 = layer1.map(ForestRecord::into_model).transpose()?;
            if config.flags.needs_first_layer() != layer1.is_some() {
                return Err(Error::Format("first layer does not match the feature flags".into()));
            }
            if let Some(l1) = &layer1 {
                if l1.n_features() != feature_names.len() {
                    return Err(Error::Format("first layer does not match the feature names".into()));
                }
            }
            let model = MultilayerModel {
                layer1,
                layer2: layer2.into_model()?,
                config,
                standardizer,
                hyperparams,
                feature_names,
            };
            if model.layer2_channels().len() != model.layer2.n_features() {
                return Err(Error::Format("second layer does not match the feature flags".into()));
            }
            Ok(SavedModel::Multilayer(model))
        }
    }
}

pub fn save(model: &SavedModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, FeatureMatrix, GeneratorConfig, TargetKind};
    use crate::forest::fit_forest;
    use crate::multilayer::{fit_multilayer, FeatureFlags, RotationAngle};

    #[test]
    fn forest_round_trip_is_bit_exact() {
        let d = generate(&GeneratorConfig::linear(200, 0.7, 3)).unwrap();
        let forest = fit_forest(&d.x, d.y().unwrap(), &ForestHyperparams::new(15, 2, 9)).unwrap();
        let saved = SavedModel::Forest(NamedForest {
            feature_names: vec!["x".into()],
            forest: forest.clone(),
        });
        let back = match from_json(&to_json(&saved).unwrap()).unwrap() {
            SavedModel::Forest(f) => f.forest,
            _ => panic!("kind changed"),
        };
        assert_eq!(back.feature_importances(), forest.feature_importances());
        for q in [-1.0, 0.0, 0.123456789, 3.3, 9.99, 20.0] {
            assert_eq!(back.predict(&[q]).unwrap(), forest.predict(&[q]).unwrap());
        }
        assert!(!back.has_out_of_bag());
    }

    #[test]
    fn multilayer_round_trip_is_bit_exact() {
        let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2Combined, 1.0, 120, 5).with_b(0.4)).unwrap();
        let cfg = MultilayerConfig::new(FeatureFlags::X_Y_SIGMA).with_theta(RotationAngle::new(35.0).unwrap());
        let m = fit_multilayer(&d, &cfg, &ForestHyperparams::new(12, 3, 2)).unwrap();
        let back = from_json(&to_json(&SavedModel::Multilayer(m.clone())).unwrap()).unwrap();
        let SavedModel::Multilayer(back) = back else { panic!("kind changed") };
        assert_eq!(back.predict_matrix(&d.x).unwrap(), m.predict_matrix(&d.x).unwrap());
        assert_eq!(back.importance_of_sigma().unwrap(), m.importance_of_sigma().unwrap());
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        assert!(matches!(from_json("{}"), Err(Error::Format(_))));
        assert!(matches!(from_json("not json"), Err(Error::Format(_))));
        let f = fit_forest(&FeatureMatrix::single(vec![0.0, 1.0]), &[0.0, 1.0], &ForestHyperparams::new(2, 1, 0)).unwrap();
        let text = to_json(&SavedModel::Forest(NamedForest {
            feature_names: vec!["x".into()],
            forest: f,
        }))
        .unwrap();
        let future = text.replace("\"version\":1", "\"version\":99");
        let err = from_json(&future).unwrap_err();
        assert!(err.to_string().contains("99"), "{err}");
    }
}
