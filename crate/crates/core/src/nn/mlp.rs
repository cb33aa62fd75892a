use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One input block of an optional per-modality projection stage. Blocks
/// split the input columns in order; a block with `project_to` gets its own
/// linear map (no activation), other blocks pass through unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputBlock {
    pub dim: usize,
    pub project_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// 2 for a softmax head, 1 for a single-score head.
    pub n_classes: usize,
    /// Applied after every hidden layer.
    pub dropout: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<InputBlock>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], n_classes: usize, dropout: f64) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            n_classes,
            dropout,
            blocks: Vec::new(),
        }
    }

    pub fn with_blocks(mut self, blocks: Vec<InputBlock>) -> Self {
        self.blocks = blocks;
        self
    }

    /// Width after the projection stage.
    pub fn projected_dim(&self) -> usize {
        if self.blocks.is_empty() {
            self.input_dim
        } else {
            self.blocks.iter().map(|b| b.project_to.unwrap_or(b.dim)).sum()
        }
    }

    /// Width of the representation fed to the head.
    pub fn rep_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or_else(|| self.projected_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.input_dim > 0
            && self.n_classes > 0
            && self.hidden_dims.iter().all(|&d| d > 0)
            && self.blocks.iter().all(|b| b.dim > 0 && b.project_to != Some(0));
        if !dims_ok {
            return Err(Error::Config(format!("all layer widths must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.blocks.is_empty() && self.blocks.iter().map(|b| b.dim).sum::<usize>() != self.input_dim {
            return Err(Error::Config(format!(
                "input blocks cover {} columns, input_dim is {}",
                self.blocks.iter().map(|b| b.dim).sum::<usize>(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

/// `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        Self {
            w: Array2::from_shape_simple_fn((n_in, n_out), || dist.sample(rng)),
            b: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Forward output: representation (last hidden activation) and head logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub rep: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Array2<f64>,
    /// Input to each hidden layer, then the representation.
    layer_inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    /// Dropout multipliers (0 or 1/(1-p)); `None` when dropout is off.
    masks: Vec<Option<Array2<f64>>>,
}

/// Gradients in [`Mlp::layers`] order.
pub type Grads = Vec<Dense>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    projections: Vec<Option<Dense>>,
    hidden: Vec<Dense>,
    head: Dense,
}

impl Mlp {
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let projections = spec
            .blocks
            .iter()
            .map(|b| b.project_to.map(|k| Dense::glorot(b.dim, k, rng)))
            .collect();
        let mut hidden = Vec::new();
        let mut width = spec.projected_dim();
        for &h in &spec.hidden_dims {
            hidden.push(Dense::glorot(width, h, rng));
            width = h;
        }
        let head = Dense::glorot(width, spec.n_classes, rng);
        Ok(Self {
            spec: spec.clone(),
            projections,
            hidden,
            head,
        })
    }

    /// Builds a model from layers in [`Mlp::layers`] order, checking shapes.
    pub fn from_layers(spec: &MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let mut template = Self::init(spec, &mut ChaCha8Rng::seed_from_u64(0))?;
        let expected: Vec<(usize, usize)> = template.layers().iter().map(|d| (d.n_in(), d.n_out())).collect();
        let got: Vec<(usize, usize)> = layers.iter().map(|d| (d.n_in(), d.n_out())).collect();
        if expected != got || layers.iter().any(|d| d.b.len() != d.n_out()) {
            return Err(Error::Shape(format!("layer shapes {got:?} do not match spec {expected:?}")));
        }
        for (slot, layer) in template.layers_mut().into_iter().zip(layers) {
            *slot = layer;
        }
        Ok(template)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn set_head(&mut self, head: Dense) -> Result<()> {
        if head.w.dim() != self.head.w.dim() || head.b.len() != self.head.b.len() {
            return Err(Error::Shape(format!(
                "head {:?} does not fit model head {:?}",
                head.w.dim(),
                self.head.w.dim()
            )));
        }
        self.head = head;
        Ok(())
    }

    /// Projection layers (present ones), hidden layers, head.
    pub fn layers(&self) -> Vec<&Dense> {
        self.projections
            .iter()
            .flatten()
            .chain(self.hidden.iter())
            .chain(std::iter::once(&self.head))
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.projections
            .iter_mut()
            .flatten()
            .chain(self.hidden.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|d| d.w.len() + d.b.len()).sum()
    }

    /// Rounds every weight to the nearest `f32`, the precision checkpoints store.
    pub fn round_to_f32(&mut self) {
        for d in self.layers_mut() {
            d.w.mapv_inplace(|v| v as f32 as f64);
            d.b.mapv_inplace(|v| v as f32 as f64);
        }
    }

    fn project(&self, x: &Array2<f64>) -> Array2<f64> {
        if self.spec.blocks.is_empty() {
            return x.clone();
        }
        let mut start = 0;
        let parts: Vec<Array2<f64>> = self
            .spec
            .blocks
            .iter()
            .zip(&self.projections)
            .map(|(b, p)| {
                let cols = x.slice(s![.., start..start + b.dim]).to_owned();
                start += b.dim;
                match p {
                    Some(d) => d.apply(&cols),
                    None => cols,
                }
            })
            .collect();
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(1), &views).expect("blocks share the row count")
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Eval-mode forward pass (dropout off).
    pub fn forward(&self, x: &Array2<f64>) -> Result<Output> {
        Ok(self.forward_traced(x, None::<&mut ChaCha8Rng>)?.0)
    }

    /// Forward pass keeping a trace for [`Mlp::backward`]. Dropout is active
    /// only when `rng` is given and `MlpSpec::dropout` is positive.
    pub fn forward_traced<R: Rng>(&self, x: &Array2<f64>, mut rng: Option<&mut R>) -> Result<(Output, Trace)> {
        self.check_input(x)?;
        let p = self.spec.dropout;
        let mut h = self.project(x);
        let mut layer_inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut masks = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let z = layer.apply(&h);
            let mut a = z.mapv(|v| v.max(0.0));
            let mask = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let m = Array2::from_shape_simple_fn(a.dim(), || if r.random::<f64>() < p { 0.0 } else { keep });
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            layer_inputs.push(std::mem::replace(&mut h, a));
            pre.push(z);
            masks.push(mask);
        }
        let logits = self.head.apply(&h);
        layer_inputs.push(h.clone());
        let trace = Trace {
            input: x.clone(),
            layer_inputs,
            pre,
            masks,
        };
        Ok((Output { rep: h, logits }, trace))
    }

    /// Backpropagates `d_logits` plus an optional gradient arriving directly
    /// at the representation.
    pub fn backward(&self, trace: &Trace, d_logits: &Array2<f64>, d_rep: Option<&Array2<f64>>) -> Grads {
        let rep = trace.layer_inputs.last().expect("trace holds the representation");
        let mut grads_rev = vec![Dense {
            w: rep.t().dot(d_logits),
            b: d_logits.sum_axis(Axis(0)),
        }];
        let mut d = d_logits.dot(&self.head.w.t());
        if let Some(extra) = d_rep {
            d += extra;
        }
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            if let Some(m) = &trace.masks[i] {
                d *= m;
            }
            d.zip_mut_with(&trace.pre[i], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            grads_rev.push(Dense {
                w: trace.layer_inputs[i].t().dot(&d),
                b: d.sum_axis(Axis(0)),
            });
            d = d.dot(&layer.w.t());
        }
        // `d` is now the gradient at the projection output.
        let mut proj_grads = Vec::new();
        let (mut in_col, mut out_col) = (0, 0);
        for (b, p) in self.spec.blocks.iter().zip(&self.projections) {
            let width = b.project_to.unwrap_or(b.dim);
            if p.is_some() {
                let x = trace.input.slice(s![.., in_col..in_col + b.dim]);
                let g = d.slice(s![.., out_col..out_col + width]);
                proj_grads.push(Dense {
                    w: x.t().dot(&g),
                    b: g.sum_axis(Axis(0)),
                });
            }
            in_col += b.dim;
            out_col += width;
        }
        grads_rev.reverse();
        proj_grads.extend(grads_rev);
        proj_grads
    }
}
