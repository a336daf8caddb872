//! Fully connected tanh networks, one per subdomain.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! `W^l` (row-major, `n_{l+1} × n_l`) followed by the bias `b^l`.
//!
//! Two evaluation routes exist. [`Network::forward_with`] is generic over
//! [`JetScalar`] and evaluates a single point (on a tape it records every
//! scalar multiply). [`Network::forward_batch`] pushes all jet components of
//! many points through each layer as one matrix product and has a hand-written
//! reverse pass, [`Network::backward_batch`]; training uses this one.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::SpaceTimePoint;
use crate::jet::{Jet2, JetScalar, HESS_PAIRS, JET_LEN};
use crate::physics::ProblemKind;

/// Input width: `(x, y, t)`.
pub const INPUT_WIDTH: usize = 3;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid layer spec: {0}")]
    BadSpec(String),
    #[error("non-finite activation in layer {layer}")]
    Overflow { layer: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Layer widths `n_1 .. n_{L+1}`. Hidden layers use tanh; the last map is
/// affine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    widths: Vec<usize>,
}

impl LayerSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self, NetworkError> {
        if widths.len() < 2 {
            return Err(NetworkError::BadSpec(format!(
                "need at least input and output widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(NetworkError::BadSpec(format!("zero-width layer in {widths:?}")));
        }
        if widths[0] != INPUT_WIDTH {
            return Err(NetworkError::BadSpec(format!(
                "input width must be {INPUT_WIDTH}, got {}",
                widths[0]
            )));
        }
        Ok(Self { widths })
    }

    /// `3 → hidden.. → outputs`.
    pub fn with_hidden(hidden: &[usize], outputs: usize) -> Result<Self, NetworkError> {
        let mut w = vec![INPUT_WIDTH];
        w.extend_from_slice(hidden);
        w.push(outputs);
        Self::new(w)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `N = Σ n_{l+1} (n_l + 1)`.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Offset of layer `l`'s weights in the flat vector.
    fn layer_offset(&self, layer: usize) -> usize {
        self.widths[..=layer]
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }
}

/// Per-subdomain output widths, `(Ω₁, Ω₂)`.
pub fn output_layout(kind: ProblemKind) -> (usize, usize) {
    match kind {
        ProblemKind::TwoPhaseFlow => (3, 3),
        ProblemKind::FsiWave => (3, 2),
        ProblemKind::FsiParabolic => (3, 4),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: LayerSpec,
    params: Vec<f64>,
    seed: u64,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: LayerSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.param_count());
        for w in spec.widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(rng.gen_range(-bound..=bound));
            }
            params.extend(std::iter::repeat(0.0).take(n_out));
        }
        Self { spec, params, seed }
    }

    pub fn from_params(spec: LayerSpec, params: Vec<f64>, seed: u64) -> Result<Self, NetworkError> {
        if params.len() != spec.param_count() {
            return Err(NetworkError::ParamLength {
                got: params.len(),
                expected: spec.param_count(),
            });
        }
        Ok(Self { spec, params, seed })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Evaluate with arbitrary jet scalars; `params` supplies `Θ` in flat
    /// order (constants for plain jets, parameter leaves on a tape).
    pub fn forward_with<S: JetScalar>(
        &self,
        input: [S; INPUT_WIDTH],
        params: &[S],
    ) -> Result<Vec<S>, NetworkError> {
        let mut act: Vec<S> = input.to_vec();
        let mut off = 0;
        let nl = self.spec.num_layers();
        for l in 0..nl {
            let (n_in, n_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_out * (n_in + 1);
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let mut z = b[j];
                for k in 0..n_in {
                    z = z + w[j * n_in + k] * act[k];
                }
                next.push(if l + 1 < nl { z.tanh() } else { z });
            }
            if next.iter().any(|s| !s.jet().is_finite()) {
                return Err(NetworkError::Overflow { layer: l + 1 });
            }
            act = next;
        }
        Ok(act)
    }

    /// Jets of all outputs at one space-time point.
    pub fn forward_jet(&self, p: &SpaceTimePoint) -> Result<Vec<Jet2>, NetworkError> {
        let input = p.input_jets();
        let params: Vec<Jet2> = self.params.iter().map(|&w| Jet2::constant(w)).collect();
        self.forward_with(input, &params)
    }

    /// Batched evaluation of `points`, keeping the intermediate activations
    /// needed by [`Network::backward_batch`].
    pub fn forward_batch(&self, points: &[SpaceTimePoint]) -> Result<BatchTrace, NetworkError> {
        self.forward_batch_order(points, JET_LEN)
    }

    /// Values only (no derivatives), for dense evaluation grids.
    pub fn forward_values(&self, points: &[SpaceTimePoint]) -> Result<Vec<Vec<f64>>, NetworkError> {
        let trace = self.forward_batch_order(points, 1)?;
        let out = trace.layers.last().unwrap();
        let n_out = self.spec.output_width();
        Ok((0..points.len())
            .map(|p| (0..n_out).map(|o| out[o * trace.cols + p]).collect())
            .collect())
    }

    fn forward_batch_order(
        &self,
        points: &[SpaceTimePoint],
        ncomp: usize,
    ) -> Result<BatchTrace, NetworkError> {
        let np = points.len();
        let cols = np * ncomp;
        // Column p*ncomp + c holds jet component c of point p.
        let mut input = vec![0.0; INPUT_WIDTH * cols];
        for (p, pt) in points.iter().enumerate() {
            let coords = [pt.x, pt.y, pt.t];
            for (k, &c) in coords.iter().enumerate() {
                input[k * cols + p * ncomp] = c;
                if ncomp > 1 {
                    input[k * cols + p * ncomp + 1 + k] = 1.0;
                }
            }
        }
        let nl = self.spec.num_layers();
        let mut layers = Vec::with_capacity(nl + 1);
        let mut pre = Vec::with_capacity(nl.saturating_sub(1));
        layers.push(input);
        for l in 0..nl {
            let (n_in, n_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let off = self.spec.layer_offset(l);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z = vec![0.0; n_out * cols];
            gemm(n_out, n_in, cols, w, false, &layers[l], &mut z, 0.0);
            for j in 0..n_out {
                let row = &mut z[j * cols..(j + 1) * cols];
                for p in 0..np {
                    row[p * ncomp] += b[j];
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::Overflow { layer: l + 1 });
            }
            if l + 1 < nl {
                let mut a = vec![0.0; z.len()];
                tanh_forward(&z, &mut a, ncomp);
                pre.push(z);
                layers.push(a);
            } else {
                layers.push(z);
            }
        }
        Ok(BatchTrace {
            np,
            ncomp,
            cols,
            pre,
            layers,
        })
    }

    /// Reverse pass. `out_cot` holds the cotangent of every output jet in the
    /// trace layout (`n_out × cols`); returns `dF/dΘ` in flat order.
    pub fn backward_batch(&self, trace: &BatchTrace, out_cot: &[f64]) -> Vec<f64> {
        let cols = trace.cols;
        let ncomp = trace.ncomp;
        let nl = self.spec.num_layers();
        let mut grad = vec![0.0; self.spec.param_count()];
        let mut dz = out_cot.to_vec();
        for l in (0..nl).rev() {
            let (n_in, n_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let off = self.spec.layer_offset(l);
            let a_prev = &trace.layers[l];
            // dW = dZ · Aᵀ
            {
                let gw = &mut grad[off..off + n_in * n_out];
                gemm_nt(n_out, cols, n_in, &dz, a_prev, gw);
            }
            let gb = &mut grad[off + n_in * n_out..off + n_in * n_out + n_out];
            for j in 0..n_out {
                let row = &dz[j * cols..(j + 1) * cols];
                gb[j] = (0..trace.np).map(|p| row[p * ncomp]).sum();
            }
            if l == 0 {
                break;
            }
            // dA = Wᵀ · dZ, then through tanh.
            let w = &self.params[off..off + n_in * n_out];
            let mut da = vec![0.0; n_in * cols];
            gemm(n_in, n_out, cols, w, true, &dz, &mut da, 0.0);
            dz = tanh_backward(&trace.pre[l - 1], &da, ncomp);
        }
        grad
    }
}

/// Activations of a batched forward pass.
pub struct BatchTrace {
    np: usize,
    ncomp: usize,
    cols: usize,
    /// Hidden pre-activations, layers 1..L-1.
    pre: Vec<Vec<f64>>,
    /// `layers[0]` is the input; `layers[l]` for hidden `l` holds tanh
    /// activations; the last entry holds the outputs.
    layers: Vec<Vec<f64>>,
}

impl BatchTrace {
    pub fn num_points(&self) -> usize {
        self.np
    }

    /// Width of one output row in the cotangent buffer.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().len() / self.cols.max(1)
    }

    /// Output jet `o` at point `p`.
    pub fn output(&self, p: usize, o: usize) -> Jet2 {
        let out = self.layers.last().unwrap();
        let start = o * self.cols + p * self.ncomp;
        if self.ncomp == JET_LEN {
            Jet2::from_array(&out[start..start + JET_LEN])
        } else {
            Jet2::constant(out[start])
        }
    }

    pub fn outputs(&self, p: usize) -> Vec<Jet2> {
        (0..self.output_width()).map(|o| self.output(p, o)).collect()
    }

    /// Zeroed cotangent buffer for [`Network::backward_batch`].
    pub fn zero_cotangent(&self) -> Vec<f64> {
        vec![0.0; self.output_width() * self.cols]
    }

    /// Store the cotangent of output `o` at point `p`.
    pub fn set_cotangent(&self, buf: &mut [f64], p: usize, o: usize, cot: &Jet2) {
        let start = o * self.cols + p * self.ncomp;
        let a = cot.to_array();
        buf[start..start + self.ncomp].copy_from_slice(&a[..self.ncomp]);
    }

    /// Accumulate `scale · cot` into the cotangent of output `o` at point `p`.
    pub fn add_cotangent(&self, buf: &mut [f64], p: usize, o: usize, cot: &Jet2, scale: f64) {
        let start = o * self.cols + p * self.ncomp;
        let a = cot.to_array();
        for (dst, src) in buf[start..start + self.ncomp].iter_mut().zip(&a) {
            *dst += scale * src;
        }
    }
}

/// `C (m×n) = op(A) (m×k) · B (k×n) + beta·C`, row-major; `A` is read
/// transposed when `trans_a` (then stored `k×m`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], c: &mut [f64], beta: f64) {
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    // SAFETY: slices are sized m*k, k*n, m*n by every caller and the strides
    // describe dense row-major storage within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `C (m×n) = A (m×k) · Bᵀ` with `B` stored `n×k`.
fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: dimensions checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn tanh_forward(z: &[f64], a: &mut [f64], ncomp: usize) {
    if ncomp == 1 {
        for (ai, zi) in a.iter_mut().zip(z) {
            *ai = zi.tanh();
        }
        return;
    }
    // Specialised jet chain rule for tanh: f' = 1 − t², f'' = −2t f'.
    for (zc, ac) in z.chunks_exact(JET_LEN).zip(a.chunks_exact_mut(JET_LEN)) {
        let t = zc[0].tanh();
        let f1 = 1.0 - t * t;
        let f2 = -2.0 * t * f1;
        let g = [zc[1], zc[2], zc[3]];
        ac[0] = t;
        ac[1] = f1 * g[0];
        ac[2] = f1 * g[1];
        ac[3] = f1 * g[2];
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            ac[4 + k] = f1 * zc[4 + k] + f2 * g[i] * g[j];
        }
    }
}

/// Pullback of [`tanh_forward`]; mirrors [`crate::jet::unary_pullback`]
/// for the tanh case without the per-entry branches.
fn tanh_backward(z: &[f64], da: &[f64], ncomp: usize) -> Vec<f64> {
    let mut dz = vec![0.0; z.len()];
    if ncomp == 1 {
        for ((d, zi), ci) in dz.iter_mut().zip(z).zip(da) {
            let t = zi.tanh();
            *d = ci * (1.0 - t * t);
        }
        return dz;
    }
    for ((zc, c), out) in z
        .chunks_exact(JET_LEN)
        .zip(da.chunks_exact(JET_LEN))
        .zip(dz.chunks_exact_mut(JET_LEN))
    {
        let t = zc[0].tanh();
        let f1 = 1.0 - t * t;
        let f2 = -2.0 * t * f1;
        let f3 = -2.0 * f1 * f1 - 2.0 * t * f2;
        let g = [zc[1], zc[2], zc[3]];
        let mut dv = c[0] * f1;
        let mut dg = [0.0; 3];
        for i in 0..3 {
            dv += c[1 + i] * f2 * g[i];
            dg[i] = c[1 + i] * f1;
        }
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            let ck = c[4 + k];
            dv += ck * (f2 * zc[4 + k] + f3 * g[i] * g[j]);
            dg[i] += ck * f2 * g[j];
            dg[j] += ck * f2 * g[i];
            out[4 + k] = ck * f1;
        }
        out[0] = dv;
        out[1..4].copy_from_slice(&dg);
    }
    dz
}

const CHECKPOINT_MAGIC: &str = "meshfree-checkpoint 1";

/// Write networks as text:
///
/// ```text
/// meshfree-checkpoint 1
/// networks <count>
/// network <index>
/// widths <n_1> ... <n_{L+1}>
/// seed <seed>
/// params <N>
/// <one parameter per line, shortest round-trip exponent form>
/// ```
///
/// Reading the file back yields bit-identical parameters.
pub fn write_checkpoint<W: Write>(mut w: W, nets: &[&Network]) -> Result<(), NetworkError> {
    let mut s = String::new();
    writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(s, "networks {}", nets.len()).unwrap();
    for (i, net) in nets.iter().enumerate() {
        writeln!(s, "network {i}").unwrap();
        let widths: Vec<String> = net.spec.widths.iter().map(|n| n.to_string()).collect();
        writeln!(s, "widths {}", widths.join(" ")).unwrap();
        writeln!(s, "seed {}", net.seed).unwrap();
        writeln!(s, "params {}", net.params.len()).unwrap();
        for p in &net.params {
            writeln!(s, "{p:e}").unwrap();
        }
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Vec<Network>, NetworkError> {
    let bad = |m: String| NetworkError::Checkpoint(m);
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String, NetworkError> {
        lines
            .next()
            .ok_or_else(|| bad(format!("unexpected end of file, expected {what}")))?
            .map_err(NetworkError::from)
    };
    fn field<'a>(line: &'a str, key: &str) -> Result<&'a str, NetworkError> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| NetworkError::Checkpoint(format!("expected `{key} ...`, got `{line}`")))
    }
    let magic = next("header")?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(bad(format!("bad header `{magic}`")));
    }
    let count: usize = field(&next("networks")?, "networks")?
        .parse()
        .map_err(|e| bad(format!("network count: {e}")))?;
    let mut nets = Vec::with_capacity(count);
    for i in 0..count {
        let idx = next("network")?;
        if field(&idx, "network")? != i.to_string() {
            return Err(bad(format!("expected network {i}, got `{idx}`")));
        }
        let widths = field(&next("widths")?, "widths")?
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("widths: {e}")))?;
        let seed: u64 = field(&next("seed")?, "seed")?
            .parse()
            .map_err(|e| bad(format!("seed: {e}")))?;
        let n: usize = field(&next("params")?, "params")?
            .parse()
            .map_err(|e| bad(format!("param count: {e}")))?;
        let mut params = Vec::with_capacity(n);
        for k in 0..n {
            let line = next("parameter")?;
            params.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("parameter {k}: {e}")))?,
            );
        }
        nets.push(Network::from_params(LayerSpec::new(widths)?, params, seed)?);
    }
    Ok(nets)
}
