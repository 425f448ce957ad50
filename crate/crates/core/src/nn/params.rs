use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::ModelSpec;
use crate::error::{Error, Result};

/// Weight matrix plus bias.
///
/// Conv weights are stored tap-major: `[tap][out][in]`, where taps run over
/// the time kernel (TDNN) or the row-major `k x k` grid (CNN). Dense weights
/// are `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub convs: Vec<Affine>,
    pub embed: Affine,
    pub classifier: Affine,
}

impl Parameters {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let mut it = spec
            .tensor_layout()
            .into_iter()
            .map(|(_, shape)| vec![0.0; shape.iter().product()]);
        let mut next = || Affine {
            weight: it.next().expect("layout"),
            bias: it.next().expect("layout"),
        };
        let convs = (0..spec.convs.len()).map(|_| next()).collect();
        let embed = next();
        let classifier = next();
        Self {
            convs,
            embed,
            classifier,
        }
    }

    /// He-uniform weights, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        let mut fill = |w: &mut [f64], fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w {
                *v = rng.gen_range(-bound..bound);
            }
        };
        for (l, a) in p.convs.iter_mut().enumerate() {
            fill(&mut a.weight, spec.conv_in_channels(l) * spec.taps(l));
        }
        fill(&mut p.embed.weight, spec.pooled_dim());
        fill(&mut p.classifier.weight, spec.embed_dim);
        p
    }

    /// Tensors in [`ModelSpec::tensor_layout`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.affines()
            .flat_map(|a| [a.weight.as_slice(), a.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for a in self.convs.iter_mut() {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        for a in [&mut self.embed, &mut self.classifier] {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        out
    }

    fn affines(&self) -> impl Iterator<Item = &Affine> {
        self.convs.iter().chain([&self.embed, &self.classifier])
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn check_shapes(&self, spec: &ModelSpec) -> Result<()> {
        let layout = spec.tensor_layout();
        let tensors = self.tensors();
        if layout.len() != tensors.len() {
            return Err(Error::Dimension(format!(
                "{} tensors for a spec with {}",
                tensors.len(),
                layout.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(tensors) {
            let n: usize = shape.iter().product();
            if n != t.len() {
                return Err(Error::Dimension(format!("{name}: {} values, expected {shape:?}", t.len())));
            }
        }
        Ok(())
    }
}

/// A model specification with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: Parameters,
    pub seed: u64,
}

impl TrainedModel {
    pub fn new(spec: ModelSpec, params: Parameters, seed: u64) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        if !params.all_finite() {
            return Err(Error::InvalidArgument("parameters contain non-finite values".into()));
        }
        Ok(Self { spec, params, seed })
    }

    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let params = Parameters::init(&spec, seed);
        Self::new(spec, params, seed)
    }

    /// Rounds every parameter to f32, the checkpoint storage precision.
    pub fn quantize_f32(&mut self) {
        for t in self.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arch, ModelSpec};

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec::from_arch(Arch::Cnn3, 64, 10).unwrap();
        let a = Parameters::init(&spec, 1);
        assert_eq!(a, Parameters::init(&spec, 1));
        assert_ne!(a, Parameters::init(&spec, 2));
        assert_eq!(a.len(), spec.tensor_layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum::<usize>());
    }

    #[test]
    fn shape_checks() {
        let spec = ModelSpec::from_arch(Arch::Tdnn1, 64, 10).unwrap();
        let mut p = Parameters::zeros(&spec);
        p.embed.bias.pop();
        assert!(TrainedModel::new(spec, p, 0).is_err());
    }
}
