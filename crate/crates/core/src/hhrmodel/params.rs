use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::diffcore::DenseMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `W_r` for `r = 0..=p`, each `input_dim × d_k`.
    pub projections: Vec<DenseMatrix>,
    /// Bilinear tensor slices for `r = 1..=p`, each `d_k × d_k`.
    pub ntn_slices: Vec<DenseMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    /// `(p + 1)·d_K × F`.
    pub classifier: DenseMatrix,
}

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Glorot-initialized parameters, deterministic in `config.seed`.
pub fn init_params(config: &ModelConfig, feature_dim: usize) -> Result<ModelParams> {
    config.validate()?;
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = config.hops();
    let layers = config
        .layer_dims
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let input = config.layer_input_dim(k, feature_dim);
            LayerParams {
                projections: (0..=p).map(|_| glorot_uniform(input, d, &mut rng)).collect(),
                ntn_slices: (0..p).map(|_| glorot_uniform(d, d, &mut rng)).collect(),
            }
        })
        .collect();
    let classifier = glorot_uniform(config.classifier_input_dim(), config.num_classes, &mut rng);
    Ok(ModelParams { layers, classifier })
}

impl ModelParams {
    /// Every tensor in a fixed order: per layer the projections then the
    /// slices, then the classifier.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out: Vec<&DenseMatrix> = Vec::new();
        for layer in &self.layers {
            out.extend(&layer.projections);
            out.extend(&layer.ntn_slices);
        }
        out.push(&self.classifier);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out: Vec<&mut DenseMatrix> = Vec::new();
        for layer in &mut self.layers {
            out.extend(&mut layer.projections);
            out.extend(&mut layer.ntn_slices);
        }
        out.push(&mut self.classifier);
        out
    }

    /// A copy with every tensor replaced, in [`ModelParams::tensors`] order.
    pub fn with_tensors(&self, tensors: &[DenseMatrix]) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::invalid(format!("{} tensors for {} parameter slots", tensors.len(), slots.len())));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.dim() != t.dim() {
                return Err(Error::shape("with_tensors", format!("{:?} into {:?}", t.dim(), slot.dim())));
            }
            slot.assign(t);
        }
        Ok(out)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks that shapes chain from `feature_dim` through every layer to the
    /// class count and that all entries are finite.
    pub fn validate(&self, config: &ModelConfig, feature_dim: usize) -> Result<()> {
        config.validate()?;
        let p = config.hops();
        if self.layers.len() != config.num_layers() {
            return Err(Error::invalid(format!(
                "{} layers in parameters, config has {}",
                self.layers.len(),
                config.num_layers()
            )));
        }
        let mismatch = |what: String, got: (usize, usize), want: (usize, usize)| {
            Error::invalid(format!("{what} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1))
        };
        for (k, layer) in self.layers.iter().enumerate() {
            let d = config.layer_dims[k];
            let input = config.layer_input_dim(k, feature_dim);
            if layer.projections.len() != p + 1 || layer.ntn_slices.len() != p {
                return Err(Error::invalid(format!(
                    "layer {k}: expected {} projections and {p} tensor slices",
                    p + 1
                )));
            }
            for (r, w) in layer.projections.iter().enumerate() {
                if w.dim() != (input, d) {
                    return Err(mismatch(format!("layer {k} projection {r}"), w.dim(), (input, d)));
                }
            }
            for (r, s) in layer.ntn_slices.iter().enumerate() {
                if s.dim() != (d, d) {
                    return Err(mismatch(format!("layer {k} tensor slice {}", r + 1), s.dim(), (d, d)));
                }
            }
        }
        let want = (config.classifier_input_dim(), config.num_classes);
        if self.classifier.dim() != want {
            return Err(mismatch("classifier".to_owned(), self.classifier.dim(), want));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        Ok(())
    }
}
