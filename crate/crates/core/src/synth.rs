//! Synthetic subjects: a random dense classifier with planted fault clusters.
//!
//! Regular inputs are labeled with the classifier's own prediction, so they
//! are always correct. Each planted cluster is a tight blob around a centre
//! where the classifier is confident; its members carry the label
//! `(prediction + 1) mod C` and are therefore mispredicted.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{distance, Matrix};
use crate::model::{Activation, LabeledDataset, Layer, Model};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_clusters: usize,
    pub members: usize,
    /// Standard deviation of blob members around their centre.
    pub spread: f64,
    /// Minimum distance between two centres.
    pub separation: f64,
    /// Scale of the centre candidates relative to regular inputs.
    pub centre_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            input_dim: 8,
            hidden: vec![32, 32],
            num_classes: 10,
            n_train: 2000,
            n_test: 2000,
            n_clusters: 60,
            members: 7,
            spread: 0.05,
            separation: 2.0,
            centre_scale: 1.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub model: Model<f64>,
    pub train: LabeledDataset<f64>,
    pub test: LabeledDataset<f64>,
    pub centres: Vec<Vec<f64>>,
    /// Planted cluster of each training input, if any.
    pub train_cluster: Vec<Option<usize>>,
    pub test_cluster: Vec<Option<usize>>,
}

fn random_model(config: &SynthConfig) -> Result<Model<f64>> {
    let mut rng = seed::stream_rng(config.seed, "synth.model", 0);
    let mut widths = vec![config.input_dim];
    widths.extend(&config.hidden);
    widths.push(config.num_classes);
    let mut layers = Vec::new();
    for w in 0..widths.len() - 1 {
        let (fan_in, fan_out) = (widths[w], widths[w + 1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let weights = Matrix::new(fan_out, fan_in, (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect())?;
        let bias = (0..fan_out).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let activation = if w + 2 == widths.len() { Activation::Softmax } else { Activation::Relu };
        layers.push(Layer::dense(weights, bias, activation)?);
    }
    let mut model = Model::new("synthetic", config.input_dim, config.num_classes, layers)?;
    balance_classes(&mut model, config, &mut rng)?;
    Ok(model)
}

/// Shift output biases until every class is predicted for a fair share of
/// regular inputs.
fn balance_classes<R: Rng>(model: &mut Model<f64>, config: &SynthConfig, rng: &mut R) -> Result<()> {
    let probe = Matrix::from_rows(&(0..4000).map(|_| gaussian_row(rng, config.input_dim, 1.0)).collect::<Vec<_>>())?;
    let c = config.num_classes;
    let last = model.layers.len() - 1;
    let bias0 = model.layers[last].bias.clone();
    let logits: Vec<Vec<f64>> = probe
        .iter_rows()
        .map(|x| model.forward(x).map(|f| f.logits.values().iter().zip(&bias0).map(|(v, b)| v - b).collect()))
        .collect::<Result<_>>()?;
    for _ in 0..200 {
        let mut counts = vec![0usize; c];
        for l in &logits {
            let shifted: Vec<f64> = l.iter().zip(&model.layers[last].bias).map(|(v, b)| v + b).collect();
            counts[crate::model::argmax(&shifted)] += 1;
        }
        let target = probe.rows() as f64 / c as f64;
        if counts.iter().all(|&n| (n as f64 - target).abs() < 0.2 * target) {
            break;
        }
        for (b, &n) in model.layers[last].bias.iter_mut().zip(&counts) {
            *b -= 0.1 * ((n as f64 + 1.0) / target).ln();
        }
    }
    Ok(())
}

/// Gap between the two largest output probabilities.
fn margin(model: &Model<f64>, x: &[f64]) -> Result<f64> {
    let out = model.forward(x)?;
    let probs = out.activations.last().map(|t| t.values().to_vec()).unwrap_or_default();
    let mut sorted = probs;
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[0] - sorted.get(1).copied().unwrap_or(0.0))
}

fn gaussian_row<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draw `n` inputs of which `members` per cluster are blob members.
fn draw_split(
    model: &Model<f64>,
    centres: &[Vec<f64>],
    config: &SynthConfig,
    n: usize,
    stream: &str,
) -> Result<(LabeledDataset<f64>, Vec<Option<usize>>)> {
    let planted = centres.len() * config.members;
    if planted > n {
        return Err(Error::InvalidArgument(format!("{planted} planted inputs exceed {n} inputs")));
    }
    let mut rng = seed::stream_rng(config.seed, stream, 0);
    let mut rows = Vec::with_capacity(n);
    let mut cluster = Vec::with_capacity(n);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..config.members {
            rows.push(centre.iter().map(|&v| v + config.spread * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
            cluster.push(Some(c));
        }
    }
    while rows.len() < n {
        rows.push(gaussian_row(&mut rng, config.input_dim, 1.0));
        cluster.push(None);
    }
    // interleave planted and regular inputs
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let cluster: Vec<Option<usize>> = order.iter().map(|&i| cluster[i]).collect();
    let features = Matrix::from_rows(&rows)?;
    let pred = model.predict_all(&features)?;
    let labels = pred
        .iter()
        .zip(&cluster)
        .map(|(&p, c)| if c.is_some() { (p + 1) % config.num_classes } else { p })
        .collect();
    Ok((LabeledDataset::new(features, labels)?, cluster))
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticSubject> {
    if config.num_classes < 2 || config.input_dim == 0 || config.members == 0 {
        return Err(Error::InvalidArgument("synth needs >= 2 classes, input_dim >= 1 and members >= 1".into()));
    }
    let model = random_model(config)?;
    let mut rng = seed::stream_rng(config.seed, "synth.centres", 0);
    // rank candidates by confidence, then greedily keep well-separated ones
    let mut candidates = Vec::new();
    for _ in 0..(config.n_clusters * 50).max(200) {
        let x = gaussian_row(&mut rng, config.input_dim, config.centre_scale);
        let m = margin(&model, &x)?;
        candidates.push((m, x));
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut centres: Vec<Vec<f64>> = Vec::new();
    for (_, x) in candidates {
        if centres.len() == config.n_clusters {
            break;
        }
        if centres.iter().all(|c| distance(c, &x) >= config.separation) {
            // every member must share the centre's prediction
            let label = model.predict(&x)?;
            let stable = (0..8).all(|k| {
                let probe: Vec<f64> =
                    x.iter().enumerate().map(|(j, v)| v + 3.0 * config.spread * if (j + k) % 2 == 0 { 1.0 } else { -1.0 }).collect();
                model.predict(&probe).map(|l| l == label).unwrap_or(false)
            });
            if stable {
                centres.push(x);
            }
        }
    }
    if centres.len() < config.n_clusters {
        return Err(Error::InvalidArgument(format!(
            "could only place {} of {} separated cluster centres",
            centres.len(),
            config.n_clusters
        )));
    }
    let (train, train_cluster) = draw_split(&model, &centres, config, config.n_train, "synth.train")?;
    let (test, test_cluster) = draw_split(&model, &centres, config, config.n_test, "synth.test")?;
    Ok(SyntheticSubject { model, train, test, centres, train_cluster, test_cluster })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_inputs_are_exactly_the_mispredictions() {
        let cfg = SynthConfig { n_train: 400, n_test: 300, n_clusters: 6, ..Default::default() };
        let s = generate(&cfg).unwrap();
        let pred = s.model.predict_all(&s.train.features).unwrap();
        for i in 0..s.train.len() {
            assert_eq!(pred[i] != s.train.labels[i], s.train_cluster[i].is_some(), "input {i}");
        }
        assert_eq!(s.train_cluster.iter().flatten().count(), 6 * cfg.members);
        assert_eq!(generate(&cfg).unwrap(), s);
    }
}
