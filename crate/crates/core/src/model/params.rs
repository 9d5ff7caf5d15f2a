use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::SeedRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `image_dim + text_dim`.
    pub input_dim: usize,
    pub image_dim: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub head_hidden_dim: usize,
    /// Dimension of the retrieval space (`t` and item index embeddings).
    pub index_dim: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Learn the blank image placeholder instead of using zeros.
    pub learnable_placeholder: bool,
    pub index_head_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 128,
            image_dim: 64,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            ff_dim: 256,
            head_hidden_dim: 64,
            index_dim: 64,
            dropout_rate: 0.1,
            seed: 0,
            learnable_placeholder: false,
            index_head_bias: true,
        }
    }
}

impl ModelConfig {
    pub fn with_feature_dims(mut self, image_dim: usize, text_dim: usize) -> Self {
        self.image_dim = image_dim;
        self.input_dim = image_dim + text_dim;
        self
    }

    pub fn text_dim(&self) -> usize {
        self.input_dim - self.image_dim
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("image_dim", self.image_dim),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("ff_dim", self.ff_dim),
            ("head_hidden_dim", self.head_hidden_dim),
            ("index_dim", self.index_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.image_dim >= self.input_dim {
            return Err(Error::Config(format!(
                "model.image_dim ({}) must be smaller than input_dim ({})",
                self.image_dim, self.input_dim
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "model.d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "model.dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn range(self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// `weight` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearSlots {
    pub weight: Slot,
    pub bias: Option<Slot>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormSlots {
    pub gain: Slot,
    pub bias: Slot,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    pub ln1: NormSlots,
    pub wq: LinearSlots,
    pub wk: LinearSlots,
    pub wv: LinearSlots,
    pub wo: LinearSlots,
    pub ln2: NormSlots,
    pub ff1: LinearSlots,
    pub ff2: LinearSlots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSlots {
    pub fc1: LinearSlots,
    pub fc2: LinearSlots,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum InitRule {
    Uniform { fan_in: usize },
    Zeros,
    Ones,
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Where every named tensor lives inside the flat parameter buffer. The `ParamSpec`
/// order is the canonical registry and serialization order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub input_projection: LinearSlots,
    pub outfit_token: Slot,
    pub blank_placeholder: Option<Slot>,
    pub layers: Vec<LayerSlots>,
    pub final_norm: NormSlots,
    pub cp_head: MlpSlots,
    pub cir_head: MlpSlots,
    pub index_head: LinearSlots,
    specs: Vec<ParamSpec>,
    rules: Vec<InitRule>,
    total: usize,
}

#[derive(Default)]
struct LayoutBuilder {
    specs: Vec<ParamSpec>,
    rules: Vec<InitRule>,
    total: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, rule: InitRule) -> Slot {
        let len = shape.iter().product();
        let slot = Slot {
            offset: self.total,
            len,
        };
        self.specs.push(ParamSpec {
            name,
            shape,
            offset: self.total,
        });
        self.rules.push(rule);
        self.total += len;
        slot
    }

    fn linear(&mut self, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> LinearSlots {
        let weight = self.add(
            format!("{name}.weight"),
            vec![out_dim, in_dim],
            InitRule::Uniform { fan_in: in_dim },
        );
        let bias = bias.then(|| self.add(format!("{name}.bias"), vec![out_dim], InitRule::Zeros));
        LinearSlots {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    fn norm(&mut self, name: &str, dim: usize) -> NormSlots {
        NormSlots {
            gain: self.add(format!("{name}.gain"), vec![dim], InitRule::Ones),
            bias: self.add(format!("{name}.bias"), vec![dim], InitRule::Zeros),
            dim,
        }
    }

    fn mlp(&mut self, name: &str, in_dim: usize, hidden: usize, out_dim: usize) -> MlpSlots {
        MlpSlots {
            fc1: self.linear(&format!("{name}.fc1"), in_dim, hidden, true),
            fc2: self.linear(&format!("{name}.fc2"), hidden, out_dim, true),
        }
    }
}

const TOKEN_INIT_STD: f64 = 0.02;

impl Layout {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut b = LayoutBuilder::default();
        let input_projection = b.linear("input_projection", config.input_dim, d, true);
        let outfit_token = b.add(
            "outfit_token".into(),
            vec![d],
            InitRule::Gaussian {
                std: TOKEN_INIT_STD,
            },
        );
        let blank_placeholder = config.learnable_placeholder.then(|| {
            b.add(
                "blank_placeholder".into(),
                vec![config.image_dim],
                InitRule::Zeros,
            )
        });
        let layers = (0..config.n_layers)
            .map(|i| {
                let p = format!("layers.{i}");
                LayerSlots {
                    ln1: b.norm(&format!("{p}.ln1"), d),
                    wq: b.linear(&format!("{p}.attn.wq"), d, d, true),
                    wk: b.linear(&format!("{p}.attn.wk"), d, d, true),
                    wv: b.linear(&format!("{p}.attn.wv"), d, d, true),
                    wo: b.linear(&format!("{p}.attn.wo"), d, d, true),
                    ln2: b.norm(&format!("{p}.ln2"), d),
                    ff1: b.linear(&format!("{p}.ff1"), d, config.ff_dim, true),
                    ff2: b.linear(&format!("{p}.ff2"), config.ff_dim, d, true),
                }
            })
            .collect();
        let final_norm = b.norm("final_norm", d);
        let cp_head = b.mlp("cp_head", d, config.head_hidden_dim, 1);
        let cir_head = b.mlp("cir_head", d, config.head_hidden_dim, config.index_dim);
        let index_head = b.linear(
            "index_head",
            config.input_dim,
            config.index_dim,
            config.index_head_bias,
        );
        Ok(Layout {
            input_projection,
            outfit_token,
            blank_placeholder,
            layers,
            final_norm,
            cp_head,
            cir_head,
            index_head,
            specs: b.specs,
            rules: b.rules,
            total: b.total,
        })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// All learnable tensors in one flat buffer, addressed through [`Layout`].
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    layout: Layout,
    data: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let layout = Layout::new(config)?;
        let data = vec![T::zero(); layout.total];
        Ok(ModelParams {
            config: config.clone(),
            layout,
            data,
        })
    }

    /// Seeded initialization: uniform `±1/sqrt(fan_in)` weights, zero biases,
    /// unit norm gains and a small Gaussian outfit token.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = SeedRng::seed_from_u64(config.seed);
        for (spec, rule) in p.layout.specs.iter().zip(&p.layout.rules) {
            let dst = &mut p.data[spec.offset..spec.offset + spec.numel()];
            match *rule {
                InitRule::Zeros => {}
                InitRule::Ones => dst.iter_mut().for_each(|x| *x = T::one()),
                InitRule::Uniform { fan_in } => {
                    let bound = 1.0 / libm::sqrt(fan_in as f64);
                    for x in dst.iter_mut() {
                        *x = T::of(rng.random_range(-bound..bound));
                    }
                }
                InitRule::Gaussian { std } => {
                    for x in dst.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *x = T::of(std * z);
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn from_data(config: &ModelConfig, data: Vec<T>) -> Result<Self> {
        let layout = Layout::new(config)?;
        if data.len() != layout.total {
            return Err(Error::Shape(format!(
                "parameter buffer has {} values, config requires {}",
                data.len(),
                layout.total
            )));
        }
        Ok(ModelParams {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| U::of(x.f64())).collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.layout.specs
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, slot: Slot) -> &[T] {
        &self.data[slot.range()]
    }

    #[inline]
    pub fn get_mut(&mut self, slot: Slot) -> &mut [T] {
        &mut self.data[slot.range()]
    }

    /// Named tensor lookup in registry order.
    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout
            .specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.offset..s.offset + s.numel()])
    }

    pub fn iter_tensors(&self) -> impl Iterator<Item = (&ParamSpec, &[T])> {
        self.layout
            .specs
            .iter()
            .map(move |s| (s, &self.data[s.offset..s.offset + s.numel()]))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Checks that `other` has the same names and shapes, describing the first
    /// difference otherwise.
    pub fn shape_diff<U>(&self, other: &ModelParams<U>) -> Option<String> {
        diff_specs(&self.layout.specs, &other.layout.specs)
    }

    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }
}

/// First difference between two registries, if any.
pub fn diff_specs(expected: &[ParamSpec], found: &[ParamSpec]) -> Option<String> {
    for (i, (a, b)) in expected.iter().zip(found).enumerate() {
        if a.name != b.name || a.shape != b.shape {
            return Some(format!(
                "tensor #{i}: expected `{}` {:?}, found `{}` {:?}",
                a.name, a.shape, b.name, b.shape
            ));
        }
    }
    if expected.len() != found.len() {
        return Some(format!(
            "expected {} tensors, found {}",
            expected.len(),
            found.len()
        ));
    }
    None
}
