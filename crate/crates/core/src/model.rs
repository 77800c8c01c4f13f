//! Dense feedforward classifiers: evaluation and introspection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

/// Shaped buffer of finite values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {len} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Self { shape, values })
    }

    pub fn vector(values: Vec<T>) -> Result<Self> {
        Self::new(vec![values.len()], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f64> {
    pub kind: LayerKind,
    /// `out_dim x in_dim`.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn dense(weights: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::InvalidModel(format!(
                "weight matrix has {} rows but bias has {} entries",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Self { kind: LayerKind::Dense, weights, bias, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_square(&self) -> bool {
        self.in_dim() == self.out_dim()
    }

    fn pre_activation(&self, input: &[T]) -> Vec<T> {
        self.weights.iter_rows().zip(&self.bias).map(|(w, &b)| dot(w, input) + b).collect()
    }
}

fn activate<T: Scalar>(activation: Activation, z: &mut [T]) {
    match activation {
        Activation::Identity => {}
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::Softmax => {
            let m = z.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in z.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            z.iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Result of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T = f64> {
    /// Post-activation output of every layer, in order.
    pub activations: Vec<Tensor<T>>,
    /// Pre-activation output of the final layer.
    pub logits: Tensor<T>,
    /// Argmax of the final layer's output, lowest index on ties.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f64> {
    pub name: String,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn new(name: impl Into<String>, input_dim: usize, num_classes: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let model = Self { name: name.into(), input_dim, num_classes, layers };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidModel("input_dim and num_classes must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        let mut width = self.input_dim;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.rows() != layer.bias.len() {
                return Err(Error::InvalidModel(format!("layer {i}: weight rows != bias length")));
            }
            if layer.in_dim() != width {
                return Err(Error::DimensionMismatch { layer: i, expected: width, found: layer.in_dim() });
            }
            if layer.activation == Activation::Softmax && i != last {
                return Err(Error::InvalidModel(format!("layer {i}: softmax is only allowed on the final layer")));
            }
            if !layer.weights.all_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("model parameters"));
            }
            width = layer.out_dim();
        }
        if width != self.num_classes {
            return Err(Error::DimensionMismatch { layer: last, expected: self.num_classes, found: width });
        }
        Ok(())
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch { layer: 0, expected: self.input_dim, found: input.len() });
        }
        Ok(())
    }

    /// Full forward pass keeping every layer's activation.
    pub fn forward(&self, input: &[T]) -> Result<Forward<T>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        let mut logits = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() != current.len() {
                return Err(Error::DimensionMismatch { layer: i, expected: layer.in_dim(), found: current.len() });
            }
            let mut z = layer.pre_activation(&current);
            if i + 1 == self.layers.len() {
                logits = z.clone();
            }
            activate(layer.activation, &mut z);
            activations.push(Tensor::vector(z.clone())?);
            current = z;
        }
        Ok(Forward { label: argmax(&current), logits: Tensor::vector(logits)?, activations })
    }

    /// Predicted class only.
    pub fn predict(&self, input: &[T]) -> Result<usize> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.pre_activation(&current);
            activate(layer.activation, &mut z);
            current = z;
        }
        Ok(argmax(&current))
    }

    pub fn predict_all(&self, inputs: &Matrix<T>) -> Result<Vec<usize>> {
        use rayon::prelude::*;
        if inputs.cols() != self.input_dim {
            return Err(Error::DimensionMismatch { layer: 0, expected: self.input_dim, found: inputs.cols() });
        }
        (0..inputs.rows()).into_par_iter().map(|i| self.predict(inputs.row(i))).collect()
    }

    /// Post-activation output of `layer` for every row of `inputs`.
    pub fn layer_traces(&self, inputs: &Matrix<T>, layer: usize) -> Result<Matrix<T>> {
        if layer >= self.layers.len() {
            return Err(Error::InvalidArgument(format!("layer {layer} out of range ({} layers)", self.layers.len())));
        }
        let mut rows = Vec::with_capacity(inputs.rows());
        for r in inputs.iter_rows() {
            let f = self.forward(r)?;
            rows.push(f.activations[layer].values().to_vec());
        }
        Matrix::from_rows(&rows)
    }

    /// Index of the last hidden layer (the final layer if there is only one).
    pub fn deepest_hidden_layer(&self) -> usize {
        self.layers.len().saturating_sub(2)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::out_dim).sum()
    }

    pub fn map_scalar<U: Scalar>(&self) -> Model<U> {
        Model {
            name: self.name.clone(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kind: l.kind,
                    weights: l.weights.map(|v| U::of(v.as_f64())),
                    bias: l.bias.iter().map(|&b| U::of(b.as_f64())).collect(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T = f64> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        for (row, &label) in self.labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { row, label, num_classes });
            }
        }
        Ok(())
    }
}

/// Fraction of inputs whose predicted label equals the true label.
pub fn accuracy<T: Scalar>(model: &Model<T>, data: &LabeledDataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("accuracy is undefined on an empty dataset"));
    }
    let predicted = model.predict_all(&data.features)?;
    Ok(accuracy_of(&predicted, &data.labels))
}

pub(crate) fn accuracy_of(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: &[Vec<f64>], bias: Vec<f64>, act: Activation) -> Layer {
        Layer::dense(Matrix::from_rows(rows).unwrap(), bias, act).unwrap()
    }

    #[test]
    fn zero_network_ties_to_lowest_class() {
        let m = Model::new("z", 2, 3, vec![layer(&[vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]], vec![0.0; 3], Activation::Relu)])
            .unwrap();
        let f = m.forward(&[0.3, -1.0]).unwrap();
        assert_eq!(f.logits.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(f.label, 0);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let m = Model::new("id", 2, 2, vec![layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], Activation::Identity)])
            .unwrap();
        let f = m.forward(&[0.0, 1.0]).unwrap();
        assert_eq!(f.logits.values(), &[0.0, 1.0]);
        assert_eq!(f.label, 1);
    }

    #[test]
    fn two_layer_logits_match_hand_product() {
        // h = relu(W1 x + b1), z = W2 h + b2, computed by hand below.
        let m = Model::new(
            "two",
            2,
            2,
            vec![
                layer(&[vec![1.0, -2.0], vec![0.5, 3.0]], vec![0.1, -0.2], Activation::Relu),
                layer(&[vec![2.0, -1.0], vec![-0.5, 0.25]], vec![0.0, 1.0], Activation::Softmax),
            ],
        )
        .unwrap();
        let x = [0.7, 0.4];
        // W1 x + b1 = [0.7 - 0.8 + 0.1, 0.35 + 1.2 - 0.2] = [0.0, 1.35]
        let h = [0.0f64.max(0.7 - 0.8 + 0.1), 0.35 + 1.2 - 0.2];
        let z = [2.0 * h[0] - 1.0 * h[1], -0.5 * h[0] + 0.25 * h[1] + 1.0];
        let f = m.forward(&x).unwrap();
        for (a, b) in f.logits.values().iter().zip(z) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(f.label, 1);
        let probs = f.activations[1].values();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors_name_the_layer() {
        let bad = Model::new(
            "bad",
            2,
            2,
            vec![
                layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], Activation::Relu),
                layer(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.0; 2], Activation::Identity),
            ],
        );
        assert!(matches!(bad, Err(Error::DimensionMismatch { layer: 1, .. })));

        let m = Model::new("ok", 2, 2, vec![layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], Activation::Identity)])
            .unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { layer: 0, expected: 2, found: 1 })));
    }

    #[test]
    fn softmax_must_be_last() {
        let r = Model::new(
            "s",
            2,
            2,
            vec![
                layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], Activation::Softmax),
                layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], Activation::Identity),
            ],
        );
        assert!(matches!(r, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn accuracy_counts() {
        let m = Model::new("id", 2, 2, vec![layer(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], Activation::Identity)])
            .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let all = LabeledDataset::new(x.clone(), vec![0, 1, 0, 1]).unwrap();
        let none = LabeledDataset::new(x.clone(), vec![1, 0, 1, 0]).unwrap();
        let half = LabeledDataset::new(x, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(accuracy(&m, &all).unwrap(), 1.0);
        assert_eq!(accuracy(&m, &none).unwrap(), 0.0);
        assert_eq!(accuracy(&m, &half).unwrap(), 0.5);
        let empty = LabeledDataset::new(Matrix::zeros(0, 2), vec![]).unwrap();
        assert!(matches!(accuracy(&m, &empty), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn f32_model_agrees_with_f64() {
        let m = Model::new(
            "two",
            2,
            2,
            vec![layer(&[vec![1.0, -2.0], vec![0.5, 3.0]], vec![0.1, -0.2], Activation::Identity)],
        )
        .unwrap();
        let m32: Model<f32> = m.map_scalar();
        assert_eq!(m.predict(&[0.2, 0.9]).unwrap(), m32.predict(&[0.2, 0.9]).unwrap());
    }
}
