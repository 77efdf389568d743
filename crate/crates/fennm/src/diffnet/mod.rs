//! Dense feedforward network `U_NN(x)` with scalar input and output.
//!
//! Forward evaluation propagates truncated Taylor jets, producing the value
//! and the input-derivatives `u'`, `u''`, `u'''` exactly (no finite
//! differences). Parameter gradients of any scalar assembled from those jets
//! are computed by a reverse sweep over the jet-augmented computation, so a
//! loss may contain third derivatives and still differentiate exactly with
//! respect to every weight and bias.

pub mod tape;

use std::io::{Read, Write};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use tape::{Tape, Var};

/// Highest supported input-derivative order.
pub const MAX_JET_ORDER: usize = 3;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
}

impl Activation {
    /// `σ(z), σ'(z), ..., σ^(upto)(z)`; entries above `upto` are zero.
    #[inline]
    fn derivatives(self, z: f64, upto: usize) -> [f64; 5] {
        let mut s = [0.0; 5];
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                s[0] = t;
                s[1] = 1.0 - t * t;
                if upto >= 2 {
                    s[2] = -2.0 * t * s[1];
                }
                if upto >= 3 {
                    s[3] = -2.0 * (s[1] * s[1] + t * s[2]);
                }
                if upto >= 4 {
                    s[4] = -2.0 * (3.0 * s[1] * s[2] + t * s[3]);
                }
            }
            Activation::Sin => {
                let (sin, cos) = z.sin_cos();
                s[0] = sin;
                s[1] = cos;
                if upto >= 2 {
                    s[2] = -sin;
                }
                if upto >= 3 {
                    s[3] = -cos;
                }
                if upto >= 4 {
                    s[4] = sin;
                }
            }
        }
        s
    }
}

/// Architecture and initialization seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden-layer count `ℓ`.
    pub layers: usize,
    /// Neurons per hidden layer `𝒩`.
    pub width: usize,
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl NetConfig {
    pub fn new(layers: usize, width: usize, activation: Activation, seed: u64) -> Self {
        NetConfig {
            layers,
            width,
            activation,
            seed,
        }
    }
}

/// Network jets at a batch of points: values plus derivatives up to the
/// requested order (higher-order arrays are empty).
#[derive(Debug, Clone)]
pub struct JetBatch {
    pub points: Vec<f64>,
    pub max_order: usize,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
}

impl JetBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `[u, u', u'', u''']` at point `i`, zero-filled above `max_order`.
    pub fn jet(&self, i: usize) -> [f64; 4] {
        [
            self.values[i],
            if self.max_order >= 1 { self.d1[i] } else { 0.0 },
            if self.max_order >= 2 { self.d2[i] } else { 0.0 },
            if self.max_order >= 3 { self.d3[i] } else { 0.0 },
        ]
    }

    pub fn derivative(&self, order: usize) -> Option<&[f64]> {
        match order {
            0 => Some(&self.values),
            1 if self.max_order >= 1 => Some(&self.d1),
            2 if self.max_order >= 2 => Some(&self.d2),
            3 if self.max_order >= 3 => Some(&self.d3),
            _ => None,
        }
    }
}

/// Tape leaves for every jet entry of a batch, handed to loss builders.
pub struct JetLeaves<'t> {
    max_order: usize,
    vars: Vec<Var<'t>>,
}

impl<'t> JetLeaves<'t> {
    /// The tape variable holding `u^(order)(x_i)`.
    pub fn jet(&self, point: usize, order: usize) -> Var<'t> {
        debug_assert!(order <= self.max_order);
        self.vars[point * (self.max_order + 1) + order]
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }
}

/// Fully connected `1 → 𝒩 → ... → 𝒩 → 1` network in 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffNet {
    config: NetConfig,
    /// Per affine layer: `(fan_out, fan_in)`.
    shapes: Vec<(usize, usize)>,
    /// Row-major `fan_out × fan_in` weights per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Glorot-uniform weights (bound `√(6/(fan_in+fan_out))`), zero biases,
/// reproducible from the config seed.
pub fn init_network(config: &NetConfig) -> DiffNet {
    assert!(config.layers >= 1 && config.width >= 1, "invalid NetConfig");
    let mut shapes = Vec::with_capacity(config.layers + 1);
    shapes.push((config.width, 1));
    for _ in 1..config.layers {
        shapes.push((config.width, config.width));
    }
    shapes.push((1, config.width));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = Vec::with_capacity(shapes.len());
    let mut biases = Vec::with_capacity(shapes.len());
    for &(out, inp) in &shapes {
        let bound = (6.0 / (inp + out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        weights.push((0..out * inp).map(|_| dist.sample(&mut rng)).collect());
        biases.push(vec![0.0; out]);
    }
    DiffNet {
        config: *config,
        shapes,
        weights,
        biases,
    }
}

/// Per-point forward storage reused across the batch.
struct Scratch {
    /// Pre-activation jets per affine layer.
    z: Vec<Vec<[f64; 4]>>,
    /// Input jets per affine layer (`a[0]` is the seeded input).
    a: Vec<Vec<[f64; 4]>>,
}

impl DiffNet {
    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Number of trainable parameters.
    pub fn dof(&self) -> usize {
        self.shapes.iter().map(|&(o, i)| o * i + o).sum()
    }

    /// All parameters as one vector: per layer, row-major weights then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.dof());
        for l in 0..self.shapes.len() {
            flat.extend_from_slice(&self.weights[l]);
            flat.extend_from_slice(&self.biases[l]);
        }
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.dof() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.dof(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for l in 0..self.shapes.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn scratch(&self) -> Scratch {
        let mut z = Vec::with_capacity(self.shapes.len());
        let mut a = Vec::with_capacity(self.shapes.len());
        for &(out, inp) in &self.shapes {
            z.push(vec![[0.0; 4]; out]);
            a.push(vec![[0.0; 4]; inp]);
        }
        Scratch { z, a }
    }

    /// Forward one point, filling `scratch`; returns the output jet.
    fn forward_point(&self, x: f64, order: usize, scratch: &mut Scratch) -> [f64; 4] {
        let n_layers = self.shapes.len();
        scratch.a[0][0] = [x, if order >= 1 { 1.0 } else { 0.0 }, 0.0, 0.0];
        for l in 0..n_layers {
            let (out, inp) = self.shapes[l];
            let w = &self.weights[l];
            let b = &self.biases[l];
            for j in 0..out {
                let mut zj = [0.0; 4];
                zj[0] = b[j];
                let row = &w[j * inp..(j + 1) * inp];
                for (i, &wji) in row.iter().enumerate() {
                    let ai = &scratch.a[l][i];
                    for m in 0..=order {
                        zj[m] += wji * ai[m];
                    }
                }
                scratch.z[l][j] = zj;
            }
            if l + 1 < n_layers {
                for j in 0..out {
                    let zj = scratch.z[l][j];
                    let s = self.config.activation.derivatives(zj[0], order);
                    let mut aj = [0.0; 4];
                    aj[0] = s[0];
                    if order >= 1 {
                        aj[1] = s[1] * zj[1];
                    }
                    if order >= 2 {
                        aj[2] = s[2] * zj[1] * zj[1] + s[1] * zj[2];
                    }
                    if order >= 3 {
                        aj[3] = s[3] * zj[1].powi(3)
                            + 3.0 * s[2] * zj[1] * zj[2]
                            + s[1] * zj[3];
                    }
                    scratch.a[l + 1][j] = aj;
                }
            }
        }
        scratch.z[n_layers - 1][0]
    }

    /// Value and input-derivatives up to `max_order` at every point.
    pub fn forward_jets(&self, points: &[f64], max_order: usize) -> Result<JetBatch> {
        if max_order > MAX_JET_ORDER {
            return Err(Error::invalid(format!(
                "jet order {max_order} exceeds the supported maximum {MAX_JET_ORDER}"
            )));
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite evaluation point {bad}")));
        }
        let mut scratch = self.scratch();
        let m = points.len();
        let mut batch = JetBatch {
            points: points.to_vec(),
            max_order,
            values: Vec::with_capacity(m),
            d1: Vec::with_capacity(if max_order >= 1 { m } else { 0 }),
            d2: Vec::with_capacity(if max_order >= 2 { m } else { 0 }),
            d3: Vec::with_capacity(if max_order >= 3 { m } else { 0 }),
        };
        for &x in points {
            let jet = self.forward_point(x, max_order, &mut scratch);
            batch.values.push(jet[0]);
            if max_order >= 1 {
                batch.d1.push(jet[1]);
            }
            if max_order >= 2 {
                batch.d2.push(jet[2]);
            }
            if max_order >= 3 {
                batch.d3.push(jet[3]);
            }
        }
        Ok(batch)
    }

    /// Network value at a single point.
    pub fn value_at(&self, x: f64) -> f64 {
        let mut scratch = self.scratch();
        self.forward_point(x, 0, &mut scratch)[0]
    }

    /// Exact gradient of a jet-built scalar with respect to every parameter.
    ///
    /// The builder assembles the loss on the tape from the jet leaves (one
    /// leaf per point per derivative order); the auxiliary payload passes
    /// side values (e.g. individual loss terms) back to the caller. Returns
    /// `(loss value, flat gradient, aux)` with the gradient laid out like
    /// [`DiffNet::flat_params`].
    pub fn param_gradient_with<T, F>(
        &self,
        points: &[f64],
        max_order: usize,
        build: F,
    ) -> Result<(f64, Vec<f64>, T)>
    where
        F: for<'t> FnOnce(&'t Tape, &JetLeaves<'t>) -> (Var<'t>, T),
    {
        if max_order > MAX_JET_ORDER {
            return Err(Error::invalid(format!(
                "jet order {max_order} exceeds the supported maximum {MAX_JET_ORDER}"
            )));
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite evaluation point {bad}")));
        }
        let mut scratch = self.scratch();
        let stride = max_order + 1;

        // Jet values for every point, then the tape pass for the loss and
        // its sensitivity to each jet entry.
        let tape = Tape::new();
        let mut jet_store = Vec::with_capacity(points.len());
        let mut vars = Vec::with_capacity(points.len() * stride);
        for &x in points {
            let jet = self.forward_point(x, max_order, &mut scratch);
            jet_store.push(jet);
            for value in jet.iter().take(stride) {
                vars.push(tape.leaf(*value));
            }
        }
        let leaves = JetLeaves { max_order, vars };
        let (loss, aux) = build(&tape, &leaves);
        let adjoints = tape.gradient(loss);

        // Pull each point's jet adjoint back through the network.
        let n_layers = self.shapes.len();
        let mut grad = vec![0.0; self.dof()];
        let mut layer_offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for &(out, inp) in &self.shapes {
            layer_offsets.push(offset);
            offset += out * inp + out;
        }
        let mut zbar: Vec<Vec<[f64; 4]>> =
            self.shapes.iter().map(|&(out, _)| vec![[0.0; 4]; out]).collect();
        let mut abar: Vec<Vec<[f64; 4]>> =
            self.shapes.iter().map(|&(_, inp)| vec![[0.0; 4]; inp]).collect();

        for (p, &x) in points.iter().enumerate() {
            let mut seed = [0.0; 4];
            let mut any = false;
            for m in 0..stride {
                seed[m] = adjoints.wrt(leaves.jet(p, m));
                any |= seed[m] != 0.0;
            }
            if !any {
                continue;
            }
            self.forward_point(x, max_order, &mut scratch);
            zbar[n_layers - 1][0] = seed;
            for l in (0..n_layers).rev() {
                let (out, inp) = self.shapes[l];
                let w = &self.weights[l];
                let gw = &mut grad[layer_offsets[l]..];
                for v in abar[l].iter_mut() {
                    *v = [0.0; 4];
                }
                for j in 0..out {
                    let zb = zbar[l][j];
                    let row = &w[j * inp..(j + 1) * inp];
                    for i in 0..inp {
                        let ai = &scratch.a[l][i];
                        let mut acc = 0.0;
                        for m in 0..=max_order {
                            acc += zb[m] * ai[m];
                            abar[l][i][m] += row[i] * zb[m];
                        }
                        gw[j * inp + i] += acc;
                    }
                    gw[out * inp + j] += zb[0];
                }
                if l == 0 {
                    break;
                }
                // a[l] = σ(z[l-1]) componentwise.
                let (prev_out, _) = self.shapes[l - 1];
                for j in 0..prev_out {
                    let ab = abar[l][j];
                    let zj = scratch.z[l - 1][j];
                    let s = self.config.activation.derivatives(zj[0], max_order + 1);
                    let mut zb = [0.0; 4];
                    zb[0] = ab[0] * s[1];
                    if max_order >= 1 {
                        zb[0] += ab[1] * s[2] * zj[1];
                        zb[1] = ab[1] * s[1];
                    }
                    if max_order >= 2 {
                        zb[0] += ab[2] * (s[3] * zj[1] * zj[1] + s[2] * zj[2]);
                        zb[1] += ab[2] * 2.0 * s[2] * zj[1];
                        zb[2] = ab[2] * s[1];
                    }
                    if max_order >= 3 {
                        zb[0] += ab[3]
                            * (s[4] * zj[1].powi(3)
                                + 3.0 * s[3] * zj[1] * zj[2]
                                + s[2] * zj[3]);
                        zb[1] += ab[3] * (3.0 * s[3] * zj[1] * zj[1] + 3.0 * s[2] * zj[2]);
                        zb[2] += ab[3] * 3.0 * s[2] * zj[1];
                        zb[3] = ab[3] * s[1];
                    }
                    zbar[l - 1][j] = zb;
                }
            }
        }
        Ok((loss.value(), grad, aux))
    }

    /// [`DiffNet::param_gradient_with`] without an auxiliary payload.
    pub fn param_gradient<F>(&self, points: &[f64], max_order: usize, build: F) -> Result<Vec<f64>>
    where
        F: for<'t> FnOnce(&'t Tape, &JetLeaves<'t>) -> Var<'t>,
    {
        let (_, grad, ()) =
            self.param_gradient_with(points, max_order, |tape, leaves| (build(tape, leaves), ()))?;
        Ok(grad)
    }

    /// Checkpoint: a fixed header (`ℓ`, `𝒩`, activation, seed) followed by
    /// the flat parameter vector as little-endian 64-bit floats.
    pub fn save_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"FENNMNET")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.config.layers as u32).to_le_bytes())?;
        w.write_all(&(self.config.width as u32).to_le_bytes())?;
        w.write_all(&[match self.config.activation {
            Activation::Tanh => 0u8,
            Activation::Sin => 1u8,
        }])?;
        w.write_all(&self.config.seed.to_le_bytes())?;
        w.write_all(&(self.dof() as u64).to_le_bytes())?;
        for v in self.flat_params() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(mut r: R) -> Result<DiffNet> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"FENNMNET" {
            return Err(Error::invalid("not a FENNM checkpoint"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(Error::invalid("unsupported checkpoint version"));
        }
        r.read_exact(&mut u32buf)?;
        let layers = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let width = u32::from_le_bytes(u32buf) as usize;
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        let activation = match byte[0] {
            0 => Activation::Tanh,
            1 => Activation::Sin,
            other => return Err(Error::invalid(format!("unknown activation tag {other}"))),
        };
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let dof = u64::from_le_bytes(u64buf) as usize;
        let mut net = init_network(&NetConfig::new(layers, width, activation, seed));
        if net.dof() != dof {
            return Err(Error::invalid(format!(
                "checkpoint parameter count {dof} does not match architecture ({})",
                net.dof()
            )));
        }
        let mut flat = vec![0.0; dof];
        let mut f64buf = [0u8; 8];
        for v in flat.iter_mut() {
            r.read_exact(&mut f64buf)?;
            *v = f64::from_le_bytes(f64buf);
        }
        net.set_flat_params(&flat)?;
        Ok(net)
    }
}
