//! Radiance fields.
//!
//! A static field maps `(position, direction)` to `(rgb, σ)`; a dynamic field
//! additionally takes a normalized time `t ∈ [0, 1]` and predicts a blending
//! factor `β`. Both share one network shape:
//!
//! ```text
//! enc(p / scale) [⊕ enc(t)] → trunk (depth × width, optional skip) ─┬→ σ = softplus, β = sigmoid
//!                                                                  └→ feature ⊕ enc(d) → hidden → rgb = sigmoid
//! ```
//!
//! Gradients are source-structured: [`RadianceField::forward`] keeps the
//! activations and [`RadianceField::backward`] accumulates parameter
//! gradients into a flat slice laid out like [`RadianceField::params`].

mod encoding;

use std::ops::Range;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encoding::{encoded_dim, positional_encoding};

use crate::error::{NovaError, Result};
use crate::geometry::{Se3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Static,
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(pre),
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Network shape and input encoding of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldArch {
    pub kind: FieldKind,
    /// Number of trunk layers.
    pub depth: usize,
    pub width: usize,
    /// Trunk layer whose input is the previous activation concatenated with
    /// the encoded input.
    pub skip: Option<usize>,
    pub color_width: usize,
    pub pos_levels: usize,
    pub dir_levels: usize,
    pub time_levels: usize,
    pub activation: Activation,
    /// Positions are divided by this before encoding.
    pub scene_scale: f64,
}

impl FieldArch {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.color_width == 0 {
            return Err(NovaError::Config("field depth, width and color_width must be >= 1".into()));
        }
        if let Some(skip) = self.skip {
            if skip == 0 || skip >= self.depth {
                return Err(NovaError::Config(format!(
                    "field skip layer must lie in 1..{} (got {skip})",
                    self.depth
                )));
            }
        }
        if !(self.scene_scale > 0.0 && self.scene_scale.is_finite()) {
            return Err(NovaError::Config("field scene_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        let pos = encoded_dim(3, self.pos_levels);
        match self.kind {
            FieldKind::Static => pos,
            FieldKind::Dynamic => pos + encoded_dim(1, self.time_levels),
        }
    }

    pub fn dir_dim(&self) -> usize {
        encoded_dim(3, self.dir_levels)
    }

    fn density_outputs(&self) -> usize {
        match self.kind {
            FieldKind::Static => 1,
            FieldKind::Dynamic => 2,
        }
    }
}

/// One affine layer inside the flat parameter vector: a row-major
/// `input × output` weight block followed by `output` biases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub offset: usize,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn weight_range(&self) -> Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    pub fn bias_range(&self) -> Range<usize> {
        let start = self.offset + self.input * self.output;
        start..start + self.output
    }

    fn len(&self) -> usize {
        self.input * self.output + self.output
    }

    fn weight<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.input, self.output), &params[self.weight_range()]).expect("layer shape")
    }

    fn bias<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&params[self.bias_range()])
    }

    fn forward(&self, params: &[f64], x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weight(params));
        out += &self.bias(params);
        out
    }

    /// Accumulates `dW += xᵀ g`, `db += Σ g` and returns the first `keep`
    /// columns of `g Wᵀ`.
    fn backward(&self, params: &[f64], grad: &mut [f64], x: &ArrayView2<f64>, g: &ArrayView2<f64>, keep: usize) -> Array2<f64> {
        let (wr, br) = (self.weight_range(), self.bias_range());
        {
            let mut dw = ArrayViewMut2::from_shape((self.input, self.output), &mut grad[wr]).expect("layer shape");
            ndarray::linalg::general_mat_mul(1.0, &x.t(), g, 1.0, &mut dw);
        }
        {
            let mut db = ArrayViewMut1::from(&mut grad[br]);
            db += &g.sum_axis(Axis(0));
        }
        g.dot(&self.weight(params).slice(s![..keep, ..]).t())
    }
}

/// Offsets of every layer in the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub trunk: Vec<Linear>,
    pub density: Linear,
    pub feature: Linear,
    pub color: Linear,
    pub rgb: Linear,
    pub len: usize,
}

impl Layout {
    fn new(arch: &FieldArch) -> Layout {
        let mut offset = 0;
        let mut next = |input: usize, output: usize| {
            let l = Linear { offset, input, output };
            offset += l.len();
            l
        };
        let trunk = (0..arch.depth)
            .map(|i| {
                let input = match i {
                    0 => arch.input_dim(),
                    i if Some(i) == arch.skip => arch.width + arch.input_dim(),
                    _ => arch.width,
                };
                next(input, arch.width)
            })
            .collect();
        let density = next(arch.width, arch.density_outputs());
        let feature = next(arch.width, arch.width);
        let color = next(arch.width + arch.dir_dim(), arch.color_width);
        let rgb = next(arch.color_width, 3);
        Layout {
            trunk,
            density,
            feature,
            color,
            rgb,
            len: offset,
        }
    }

    pub fn named(&self) -> Vec<(String, Linear)> {
        let mut v: Vec<_> = self
            .trunk
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("trunk.{i}"), *l))
            .collect();
        v.push(("density".into(), self.density));
        v.push(("feature".into(), self.feature));
        v.push(("color".into(), self.color));
        v.push(("rgb".into(), self.rgb));
        v
    }
}

/// Per-sample field outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOutput {
    pub rgb: Vec<[f64; 3]>,
    pub sigma: Vec<f64>,
    pub beta: Option<Vec<f64>>,
}

impl FieldOutput {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

/// Activations retained by [`RadianceField::forward`] for the backward pass.
pub struct FieldCache {
    trunk_inputs: Vec<Array2<f64>>,
    trunk_pre: Vec<Array2<f64>>,
    trunk_out: Array2<f64>,
    density_pre: Array2<f64>,
    color_input: Array2<f64>,
    color_pre: Array2<f64>,
    color_out: Array2<f64>,
    rgb: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField {
    arch: FieldArch,
    layout: Layout,
    params: Vec<f64>,
}

impl RadianceField {
    /// Randomly initialized field (uniform fan-in scaled weights, zero biases).
    pub fn new(arch: FieldArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = match arch.activation {
            Activation::Relu => 6.0,
            Activation::Softplus => 3.0,
        };
        for (name, l) in layout.named() {
            let bound = if name == "density" || name == "rgb" {
                (6.0 / (l.input + l.output) as f64).sqrt()
            } else {
                (gain / l.input as f64).sqrt()
            };
            for w in &mut params[l.weight_range()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(RadianceField { arch, layout, params })
    }

    /// Field with the given flat parameters.
    pub fn from_params(arch: FieldArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if params.len() != layout.len {
            return Err(NovaError::CheckpointMismatch(format!(
                "architecture needs {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(RadianceField { arch, layout, params })
    }

    pub fn arch(&self) -> &FieldArch {
        &self.arch
    }

    pub fn kind(&self) -> FieldKind {
        self.arch.kind
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    pub fn query_static(&self, positions: &[Vec3], directions: &[Vec3]) -> Result<FieldOutput> {
        if self.arch.kind != FieldKind::Static {
            return Err(NovaError::InvalidInput("query_static on a dynamic field".into()));
        }
        Ok(self.forward(positions, directions, None)?.0)
    }

    pub fn query_dynamic(&self, positions: &[Vec3], directions: &[Vec3], times: &[f64]) -> Result<FieldOutput> {
        if self.arch.kind != FieldKind::Dynamic {
            return Err(NovaError::InvalidInput("query_dynamic on a static field".into()));
        }
        Ok(self.forward(positions, directions, Some(times))?.0)
    }

    fn check_inputs(&self, positions: &[Vec3], directions: &[Vec3], times: Option<&[f64]>) -> Result<()> {
        if positions.len() != directions.len() {
            return Err(NovaError::InvalidInput(format!(
                "{} positions but {} directions",
                positions.len(),
                directions.len()
            )));
        }
        match (self.arch.kind, times) {
            (FieldKind::Dynamic, None) => {
                return Err(NovaError::InvalidInput("dynamic field queried without times".into()))
            }
            (FieldKind::Dynamic, Some(t)) if t.len() != positions.len() => {
                return Err(NovaError::InvalidInput(format!(
                    "{} positions but {} times",
                    positions.len(),
                    t.len()
                )))
            }
            _ => {}
        }
        for (i, (p, d)) in positions.iter().zip(directions).enumerate() {
            if p.iter().chain(d.iter()).any(|v| !v.is_finite()) {
                return Err(NovaError::NonFinite(format!("field input {i}")));
            }
            if (d.norm() - 1.0).abs() > 1e-6 {
                return Err(NovaError::InvalidInput(format!("direction {i} is not unit length")));
            }
        }
        if let Some(t) = times {
            if let Some(i) = t.iter().position(|v| !v.is_finite()) {
                return Err(NovaError::NonFinite(format!("time {i}")));
            }
        }
        Ok(())
    }

    /// Forward pass retaining activations. `times` is required for dynamic
    /// fields and ignored for static ones.
    pub fn forward(&self, positions: &[Vec3], directions: &[Vec3], times: Option<&[f64]>) -> Result<(FieldOutput, FieldCache)> {
        self.check_inputs(positions, directions, times)?;
        let arch = &self.arch;
        let n = positions.len();
        let p = &self.params;

        let in_dim = arch.input_dim();
        let mut x0 = Vec::with_capacity(n * in_dim);
        let mut dirs = Vec::with_capacity(n * arch.dir_dim());
        let inv_scale = 1.0 / arch.scene_scale;
        for i in 0..n {
            let scaled = positions[i] * inv_scale;
            encoding::encode_into(scaled.as_slice(), arch.pos_levels, &mut x0);
            if arch.kind == FieldKind::Dynamic {
                let t = times.expect("checked")[i];
                encoding::encode_into(&[t], arch.time_levels, &mut x0);
            }
            encoding::encode_into(directions[i].as_slice(), arch.dir_levels, &mut dirs);
        }
        let x0 = Array2::from_shape_vec((n, in_dim), x0).expect("input shape");
        let dirs = Array2::from_shape_vec((n, arch.dir_dim()), dirs).expect("dir shape");

        let mut trunk_inputs = Vec::with_capacity(arch.depth);
        let mut trunk_pre = Vec::with_capacity(arch.depth);
        let mut h = x0.clone();
        for (i, layer) in self.layout.trunk.iter().enumerate() {
            let input = if i > 0 && Some(i) == arch.skip {
                ndarray::concatenate(Axis(1), &[h.view(), x0.view()]).expect("skip concat")
            } else {
                h
            };
            let pre = layer.forward(p, &input.view());
            h = pre.mapv(|v| arch.activation.apply(v));
            trunk_inputs.push(input);
            trunk_pre.push(pre);
        }

        let density_pre = self.layout.density.forward(p, &h.view());
        let sigma: Vec<f64> = density_pre.column(0).iter().map(|&v| softplus(v)).collect();
        let beta = (arch.kind == FieldKind::Dynamic)
            .then(|| density_pre.column(1).iter().map(|&v| sigmoid(v)).collect::<Vec<_>>());

        let feature = self.layout.feature.forward(p, &h.view());
        let color_input = ndarray::concatenate(Axis(1), &[feature.view(), dirs.view()]).expect("color concat");
        let color_pre = self.layout.color.forward(p, &color_input.view());
        let color_out = color_pre.mapv(|v| arch.activation.apply(v));
        let rgb = self.layout.rgb.forward(p, &color_out.view()).mapv(sigmoid);
        let rgb_vec = rgb.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();

        let out = FieldOutput {
            rgb: rgb_vec,
            sigma,
            beta,
        };
        let cache = FieldCache {
            trunk_inputs,
            trunk_pre,
            trunk_out: h,
            density_pre,
            color_input,
            color_pre,
            color_out,
            rgb,
        };
        Ok((out, cache))
    }

    /// Accumulates `∂L/∂params` into `param_grad` given `∂L/∂σ`, `∂L/∂β`
    /// (dynamic only) and `∂L/∂rgb` for every sample of the cached forward.
    pub fn backward(
        &self,
        cache: &FieldCache,
        grad_sigma: &[f64],
        grad_beta: Option<&[f64]>,
        grad_rgb: &[[f64; 3]],
        param_grad: &mut [f64],
    ) {
        assert_eq!(param_grad.len(), self.layout.len, "gradient buffer length");
        let arch = &self.arch;
        let p = &self.params;
        let n = grad_sigma.len();
        let width = arch.width;

        let mut g_rgb_pre = Array2::<f64>::zeros((n, 3));
        for (i, mut row) in g_rgb_pre.rows_mut().into_iter().enumerate() {
            for c in 0..3 {
                let y = cache.rgb[(i, c)];
                row[c] = grad_rgb[i][c] * y * (1.0 - y);
            }
        }
        let g_color_out = self.layout.rgb.backward(p, param_grad, &cache.color_out.view(), &g_rgb_pre.view(), arch.color_width);
        let g_color_pre = &g_color_out * &cache.color_pre.mapv(|v| arch.activation.derivative(v));
        let g_feature = self.layout.color.backward(p, param_grad, &cache.color_input.view(), &g_color_pre.view(), width);
        let mut g_h = self.layout.feature.backward(p, param_grad, &cache.trunk_out.view(), &g_feature.view(), width);

        let mut g_density = Array2::<f64>::zeros((n, arch.density_outputs()));
        for i in 0..n {
            g_density[(i, 0)] = grad_sigma[i] * sigmoid(cache.density_pre[(i, 0)]);
            if let Some(gb) = grad_beta {
                let b = sigmoid(cache.density_pre[(i, 1)]);
                g_density[(i, 1)] = gb[i] * b * (1.0 - b);
            }
        }
        g_h += &self.layout.density.backward(p, param_grad, &cache.trunk_out.view(), &g_density.view(), width);

        for (i, layer) in self.layout.trunk.iter().enumerate().rev() {
            let g_pre = &g_h * &cache.trunk_pre[i].mapv(|v| arch.activation.derivative(v));
            let keep = if i == 0 { 0 } else { width };
            g_h = layer.backward(p, param_grad, &cache.trunk_inputs[i].view(), &g_pre.view(), keep);
        }
    }
}

/// A dynamic field placed in the world by a rigid transform and replayed on
/// a remapped clock `t ↦ time_scale·t + time_offset`.
#[derive(Clone, Copy, Debug)]
pub struct ObjectInstance<'a> {
    pub field: &'a RadianceField,
    pub world_transform: Se3,
    pub time_scale: f64,
    pub time_offset: f64,
}

impl<'a> ObjectInstance<'a> {
    pub fn new(field: &'a RadianceField, world_transform: Se3, time_scale: f64, time_offset: f64) -> Result<Self> {
        world_transform.validate()?;
        if time_scale == 0.0 || !time_scale.is_finite() || !time_offset.is_finite() {
            return Err(NovaError::InvalidInput("time remap scale must be finite and nonzero".into()));
        }
        if field.kind() != FieldKind::Dynamic {
            return Err(NovaError::InvalidInput("object instances wrap dynamic fields".into()));
        }
        Ok(ObjectInstance {
            field,
            world_transform,
            time_scale,
            time_offset,
        })
    }

    pub fn identity(field: &'a RadianceField) -> Result<Self> {
        Self::new(field, Se3::identity(), 1.0, 0.0)
    }

    /// World-space samples mapped into the wrapped field's own frame and clock.
    pub fn to_local(&self, positions: &[Vec3], directions: &[Vec3], time: f64) -> (Vec<Vec3>, Vec<Vec3>, f64) {
        let inv = self.world_transform.inverse();
        let p = positions.iter().map(|x| inv.transform_point(x)).collect();
        let d = directions.iter().map(|x| inv.transform_vector(x)).collect();
        (p, d, self.time_scale * time + self.time_offset)
    }

    pub fn query(&self, positions: &[Vec3], directions: &[Vec3], time: f64) -> Result<FieldOutput> {
        let (p, d, t) = self.to_local(positions, directions, time);
        self.field.query_dynamic(&p, &d, &vec![t; p.len()])
    }
}

/// Parameter ranges of every layer, qualified by `prefix` and shifted by `base`.
pub fn named_ranges(prefix: &str, field: &RadianceField, base: usize) -> Vec<(String, Range<usize>)> {
    field
        .layout()
        .named()
        .into_iter()
        .flat_map(|(name, l)| {
            let w = l.weight_range();
            let b = l.bias_range();
            [
                (format!("{prefix}.{name}.weight"), base + w.start..base + w.end),
                (format!("{prefix}.{name}.bias"), base + b.start..base + b.end),
            ]
        })
        .collect()
}
