//! Logistic regression over hashed character n-grams.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hash::hash_str;
use crate::text::fold_char;

/// Anything that maps text to a probability of being toxic.
pub trait ToxicityScorer: Send + Sync {
    /// A value in (0, 1).
    fn score(&self, text: &str) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: u32,
    pub seed: u64,
    pub lowercase: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            min_n: 3,
            max_n: 5,
            buckets: 1 << 18,
            seed: 0x746f_7869,
            lowercase: true,
        }
    }
}

impl FeatureSpec {
    fn validate(&self) -> Result<(), String> {
        if self.min_n == 0 || self.min_n > self.max_n {
            return Err("feature_spec needs 1 <= min_n <= max_n".into());
        }
        if self.buckets == 0 {
            return Err("feature_spec.buckets must be positive".into());
        }
        Ok(())
    }

    /// Sparse n-gram frequencies, damped as `1 + ln(count)` and
    /// L2-normalized, sorted by bucket.
    pub fn features(&self, text: &str) -> Vec<(u32, f64)> {
        let chars: Vec<char> = if self.lowercase {
            text.chars().map(fold_char).collect()
        } else {
            text.chars().collect()
        };
        let mut counts: HashMap<u32, f64> = HashMap::new();
        let mut gram = String::new();
        for n in self.min_n..=self.max_n {
            for w in chars.windows(n) {
                gram.clear();
                gram.extend(w);
                let b = (hash_str(&gram, self.seed ^ n as u64) % self.buckets as u64) as u32;
                *counts.entry(b).or_default() += 1.0;
            }
        }
        let mut out: Vec<(u32, f64)> = counts.into_iter().map(|(k, v)| (k, 1.0 + v.ln())).collect();
        out.sort_by_key(|(k, _)| *k);
        let norm = out.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        for (_, v) in &mut out {
            *v /= norm;
        }
        out
    }
}

const MAX_LOGIT: f64 = 30.0;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-MAX_LOGIT, MAX_LOGIT)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToxicityModel {
    pub feature_spec: FeatureSpec,
    pub bias: f64,
    pub weights: BTreeMap<u32, f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    feature_spec: FeatureSpec,
    bias: f64,
    weights: Vec<(u32, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training data needs both labels, only {0:?} present")]
    SingleClass(Label),
    #[error("training data has {count} {label:?} examples, at least {min} required")]
    TooFew { label: Label, count: usize, min: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ToxicityModel {
    pub fn logit(&self, text: &str) -> f64 {
        self.bias
            + self
                .feature_spec
                .features(text)
                .iter()
                .filter_map(|(k, v)| self.weights.get(k).map(|w| w * v))
                .sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            feature_spec: self.feature_spec,
            bias: self.bias,
            weights: self.weights.iter().map(|(k, v)| (*k, *v)).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        file.feature_spec.validate().map_err(ModelError::Format)?;
        if !file.bias.is_finite() {
            return Err(ModelError::Format("bias is not finite".into()));
        }
        let mut weights = BTreeMap::new();
        for (k, v) in file.weights {
            if k >= file.feature_spec.buckets || !v.is_finite() {
                return Err(ModelError::Format(format!("bad weight entry {k} -> {v}")));
            }
            if weights.insert(k, v).is_some() {
                return Err(ModelError::Format(format!("feature {k} listed twice")));
            }
        }
        Ok(Self {
            feature_spec: file.feature_spec,
            bias: file.bias,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl ToxicityScorer for ToxicityModel {
    fn score(&self, text: &str) -> f64 {
        sigmoid(self.logit(text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Toxic,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub feature_spec: FeatureSpec,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    /// Minimum number of examples per label.
    pub min_per_label: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature_spec: FeatureSpec::default(),
            epochs: 30,
            learning_rate: 2.0,
            batch_size: 8,
            l2: 1e-5,
            seed: 42,
            min_per_label: 10,
        }
    }
}

/// Mini-batch gradient descent on the log loss with a seeded shuffle per
/// epoch. The same data, config and seed always give the same model.
pub fn train_classifier<S: AsRef<str>>(labeled: &[(S, Label)], cfg: &TrainConfig) -> Result<ToxicityModel, ModelError> {
    cfg.feature_spec.validate().map_err(ModelError::Config)?;
    if cfg.epochs == 0
        || cfg.batch_size == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate <= 0.0
        || cfg.l2.is_nan()
        || cfg.l2 < 0.0
    {
        return Err(ModelError::Config(
            "epochs, batch_size and learning_rate must be positive, l2 >= 0".into(),
        ));
    }
    for label in [Label::Toxic, Label::Clean] {
        let count = labeled.iter().filter(|(_, l)| *l == label).count();
        if count == 0 {
            let other = if label == Label::Toxic {
                Label::Clean
            } else {
                Label::Toxic
            };
            return Err(ModelError::SingleClass(other));
        }
        if count < cfg.min_per_label {
            return Err(ModelError::TooFew {
                label,
                count,
                min: cfg.min_per_label,
            });
        }
    }

    let examples: Vec<(Vec<(u32, f64)>, f64)> = labeled
        .iter()
        .map(|(t, l)| {
            (
                cfg.feature_spec.features(t.as_ref()),
                if *l == Label::Toxic { 1.0 } else { 0.0 },
            )
        })
        .collect();
    let mut w = vec![0.0f64; cfg.feature_spec.buckets as usize];
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad: BTreeMap<u32, f64> = BTreeMap::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.clear();
            let mut grad_bias = 0.0;
            for &i in batch {
                let (x, y) = &examples[i];
                let z = bias + x.iter().map(|(k, v)| w[*k as usize] * v).sum::<f64>();
                let err = sigmoid(z) - y;
                grad_bias += err;
                for (k, v) in x {
                    *grad.entry(*k).or_default() += err * v;
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (k, g) in &grad {
                let wk = &mut w[*k as usize];
                *wk -= step * (g + cfg.l2 * *wk);
            }
            bias -= step * grad_bias;
        }
    }
    Ok(ToxicityModel {
        feature_spec: cfg.feature_spec,
        bias,
        weights: w
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .map(|(k, v)| (k as u32, v))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Filler words plus three short tokens per document: marker tokens for
    /// toxic documents, decoys for clean ones.
    fn toy(n: usize, seed: u64) -> Vec<(String, Label)> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filler = [
            "river", "stone", "garden", "window", "paper", "orange", "travel", "music",
        ];
        let markers = ["zqx", "vkj", "qqz", "jxv"];
        let decoys = ["cat", "sun", "map", "pen"];
        (0..n)
            .map(|i| {
                let mut words: Vec<&str> = (0..12).map(|_| filler[rng.gen_range(0..filler.len())]).collect();
                let label = if i % 2 == 0 { Label::Toxic } else { Label::Clean };
                let pool = if label == Label::Toxic { &markers } else { &decoys };
                for _ in 0..3 {
                    let pos = rng.gen_range(0..=words.len());
                    words.insert(pos, pool[rng.gen_range(0..pool.len())]);
                }
                (words.join(" "), label)
            })
            .collect()
    }

    fn accuracy(m: &ToxicityModel, data: &[(String, Label)]) -> f64 {
        let ok = data
            .iter()
            .filter(|(t, l)| (m.score(t) >= 0.5) == (*l == Label::Toxic))
            .count();
        ok as f64 / data.len() as f64
    }

    #[test]
    fn separable_toy_set() {
        let train = toy(100, 1);
        let held = toy(100, 2);
        let m = train_classifier(&train, &TrainConfig::default()).unwrap();
        assert!(accuracy(&m, &train) >= 0.95);
        assert!(accuracy(&m, &held) >= 0.9);
    }

    #[test]
    fn deterministic_and_roundtrips() {
        let data = toy(60, 3);
        let a = train_classifier(&data, &TrainConfig::default()).unwrap();
        let b = train_classifier(&data, &TrainConfig::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back = ToxicityModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn empty_text_scores_bias() {
        let m = train_classifier(&toy(40, 4), &TrainConfig::default()).unwrap();
        assert_eq!(m.score(""), sigmoid(m.bias));
        assert_eq!(m.score("ab"), sigmoid(m.bias));
    }

    #[test]
    fn scores_stay_open_interval() {
        let mut m = train_classifier(&toy(40, 5), &TrainConfig::default()).unwrap();
        m.bias = 1e6;
        let s = m.score("anything");
        assert!(s > 0.0 && s < 1.0);
        m.bias = -1e6;
        let s = m.score("anything");
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn rejects_bad_training_sets() {
        let only: Vec<(String, Label)> = (0..20).map(|i| (format!("t{i}"), Label::Clean)).collect();
        assert!(matches!(
            train_classifier(&only, &TrainConfig::default()),
            Err(ModelError::SingleClass(Label::Clean))
        ));
        let few: Vec<(String, Label)> = toy(12, 1);
        assert!(matches!(
            train_classifier(&few, &TrainConfig::default()),
            Err(ModelError::TooFew { .. })
        ));
    }

    #[test]
    fn features_are_unit_length() {
        let f = FeatureSpec::default().features("Hello World hello");
        let n: f64 = f.iter().map(|(_, v)| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(
            FeatureSpec::default().features("HELLO"),
            FeatureSpec::default().features("hello")
        );
    }

    #[test]
    fn malformed_model_files_rejected() {
        assert!(ToxicityModel::from_json("{}").is_err());
        let bad = r#"{"feature_spec":{"min_n":3,"max_n":5,"buckets":4,"seed":1,"lowercase":true},"bias":0,"weights":[[9,1.0]]}"#;
        assert!(ToxicityModel::from_json(bad).is_err());
    }
}
