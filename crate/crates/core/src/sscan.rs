//! Discretized selective state-space recurrence on masked scan-lines.
//!
//! Per channel the state matrix is diagonal with `N` entries. A line is
//! processed as
//!
//! ```text
//! h_0 = 0
//! h_t = f_t * (a_bar ⊙ h_{t-1} + b_bar x_t)
//! y_t = <c, h_t>
//! ```
//!
//! where `f_t` is the selective gate. Masked steps are skipped: they neither
//! update the state nor produce output.
//!
//! Parameters are stored in `groups` copies. A single group is shared by all
//! directions; `groups == D` gives every direction its own set.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateMode {
    #[default]
    ConstantOne,
    /// `f_t = sigmoid(w * x_t + b)`, one scalar `(w, b)` per channel.
    ///
    /// A stand-in for the selective gate network: the published model only
    /// fixes the multiplicative form of the gate, not how it is computed.
    AffineSigmoid,
}

/// How the transition is divided across directions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Normalization {
    None,
    /// Divide the continuous-time `A` before discretization:
    /// `a_bar = exp(delta * a / directions)`.
    Continuous { directions: usize },
    /// Divide the discrete transition: `a_bar = exp(delta * a) / directions`.
    Discrete { directions: usize },
    /// Continuous division by eight.
    #[default]
    Octa,
}

impl Normalization {
    fn resolved(self) -> Self {
        match self {
            Normalization::Octa => Normalization::Continuous { directions: 8 },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZohRule {
    /// `b_bar = delta * b`
    #[default]
    FirstOrder,
    /// `b_bar = (exp(delta a) - 1) / a * b`
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscretizeOptions {
    pub normalization: Normalization,
    pub zoh: ZohRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub gate_mode: GateMode,
    /// Continuous diagonal state matrix, shape `(G, C, N)`.
    pub a: Tensor,
    pub b: Tensor,
    pub c: Tensor,
    /// `(G, C)`; `delta = exp(log_delta)`.
    pub log_delta: Tensor,
    pub gate_w: Tensor,
    pub gate_b: Tensor,
}

impl SsmParams {
    /// Stable initialization: `a ~ U[-1, -0.1]`, `b, c ~ N(0, 1) / sqrt(N)`,
    /// `delta = 1`, gate weight 0 and bias 2.
    pub fn init(channels: usize, d_state: usize, groups: usize, gate_mode: GateMode, rng: &mut Rng) -> Self {
        let n = groups * channels * d_state;
        let scale = 1.0 / (d_state as f64).sqrt();
        let shape3 = vec![groups, channels, d_state];
        let shape2 = vec![groups, channels];
        Self {
            gate_mode,
            a: Tensor::new(shape3.clone(), rng.uniform_vec(n, -1.0, -0.1)).unwrap(),
            b: Tensor::new(shape3.clone(), rng.normal_vec(n, scale)).unwrap(),
            c: Tensor::new(shape3, rng.normal_vec(n, scale)).unwrap(),
            log_delta: Tensor::zeros(&shape2),
            gate_w: Tensor::zeros(&shape2),
            gate_b: Tensor::full(&shape2, 2.0),
        }
    }

    /// Builds a single-group parameter set from explicit values.
    pub fn from_values(
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        log_delta: Vec<f64>,
        channels: usize,
        d_state: usize,
    ) -> Result<Self> {
        Ok(Self {
            gate_mode: GateMode::ConstantOne,
            a: Tensor::new(vec![1, channels, d_state], a)?,
            b: Tensor::new(vec![1, channels, d_state], b)?,
            c: Tensor::new(vec![1, channels, d_state], c)?,
            log_delta: Tensor::new(vec![1, channels], log_delta)?,
            gate_w: Tensor::zeros(&[1, channels]),
            gate_b: Tensor::zeros(&[1, channels]),
        })
    }

    pub fn groups(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn d_state(&self) -> usize {
        self.a.shape()[2]
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gate_mode: self.gate_mode,
            a: Tensor::zeros(self.a.shape()),
            b: Tensor::zeros(self.b.shape()),
            c: Tensor::zeros(self.c.shape()),
            log_delta: Tensor::zeros(self.log_delta.shape()),
            gate_w: Tensor::zeros(self.gate_w.shape()),
            gate_b: Tensor::zeros(self.gate_b.shape()),
        }
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("a", &self.a),
            ("b", &self.b),
            ("c", &self.c),
            ("log_delta", &self.log_delta),
            ("gate_w", &self.gate_w),
            ("gate_b", &self.gate_b),
        ]
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("a", &mut self.a),
            ("b", &mut self.b),
            ("c", &mut self.c),
            ("log_delta", &mut self.log_delta),
            ("gate_w", &mut self.gate_w),
            ("gate_b", &mut self.gate_b),
        ]
    }

    /// Parameter group used by direction slot `k`.
    pub fn group_for(&self, k: usize) -> usize {
        if self.groups() == 1 {
            0
        } else {
            k
        }
    }
}

/// The direction-normalized continuous kernel `A_k = A / D`, shared by all
/// `D` directions (`B_k = B`, `C_k = C`).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedKernel {
    pub directions: usize,
    pub a_k: Vec<f64>,
}

impl NormalizedKernel {
    pub fn new(p: &SsmParams, directions: usize) -> Self {
        let scale = 1.0 / directions as f64;
        Self {
            directions,
            a_k: p.a.data().iter().map(|a| a * scale).collect(),
        }
    }

    /// `sum_k A_k`, reduced pairwise over the direction axis.
    pub fn equilibrium_sum(&self) -> Vec<f64> {
        self.a_k
            .iter()
            .map(|&a| pairwise_sum(&vec![a; self.directions]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedParams {
    pub groups: usize,
    pub channels: usize,
    pub d_state: usize,
    pub gate_mode: GateMode,
    /// `(G, C, N)` flattened.
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub c: Vec<f64>,
    /// `(G, C)` flattened.
    pub gate_w: Vec<f64>,
    pub gate_b: Vec<f64>,
}

impl DiscretizedParams {
    /// Single-group, constant-gate parameters given directly in discrete form.
    pub fn from_discrete(channels: usize, d_state: usize, a_bar: Vec<f64>, b_bar: Vec<f64>, c: Vec<f64>) -> Self {
        assert_eq!(a_bar.len(), channels * d_state);
        assert_eq!(b_bar.len(), channels * d_state);
        assert_eq!(c.len(), channels * d_state);
        Self {
            groups: 1,
            channels,
            d_state,
            gate_mode: GateMode::ConstantOne,
            a_bar,
            b_bar,
            c,
            gate_w: vec![0.0; channels],
            gate_b: vec![0.0; channels],
        }
    }

    pub fn with_gate(mut self, mode: GateMode, w: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(w.len(), self.groups * self.channels);
        assert_eq!(b.len(), self.groups * self.channels);
        self.gate_mode = mode;
        self.gate_w = w;
        self.gate_b = b;
        self
    }

    pub fn kernel(&self, group: usize) -> Kernel<'_> {
        assert!(group < self.groups);
        Kernel { dp: self, group }
    }
}

/// Gradients with respect to the discretized parameters, laid out like
/// [`DiscretizedParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGrads {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub c: Vec<f64>,
    pub gate_w: Vec<f64>,
    pub gate_b: Vec<f64>,
}

impl DiscreteGrads {
    pub fn zeros(dp: &DiscretizedParams) -> Self {
        let n = dp.a_bar.len();
        let m = dp.gate_w.len();
        Self {
            a_bar: vec![0.0; n],
            b_bar: vec![0.0; n],
            c: vec![0.0; n],
            gate_w: vec![0.0; m],
            gate_b: vec![0.0; m],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in [
            (&mut self.a_bar, &other.a_bar),
            (&mut self.b_bar, &other.b_bar),
            (&mut self.c, &other.c),
            (&mut self.gate_w, &other.gate_w),
            (&mut self.gate_b, &other.gate_b),
        ] {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn discretize(p: &SsmParams, opts: DiscretizeOptions) -> Result<DiscretizedParams> {
    for (name, t) in p.named_tensors() {
        if !t.all_finite() {
            return Err(Error::NonFinite(match name {
                "a" => "ssm.a",
                "b" => "ssm.b",
                "c" => "ssm.c",
                "log_delta" => "ssm.log_delta",
                "gate_w" => "ssm.gate_w",
                _ => "ssm.gate_b",
            }));
        }
    }
    let (g, ch, n) = (p.groups(), p.channels(), p.d_state());
    let mut a_bar = vec![0.0; g * ch * n];
    let mut b_bar = vec![0.0; g * ch * n];
    let (a, b) = (p.a.data(), p.b.data());
    for gc in 0..g * ch {
        let delta = p.log_delta.data()[gc].exp();
        for s in 0..n {
            let i = gc * n + s;
            let (ab, bb) = discretize_entry(a[i], b[i], delta, opts);
            a_bar[i] = ab;
            b_bar[i] = bb;
        }
    }
    Ok(DiscretizedParams {
        groups: g,
        channels: ch,
        d_state: n,
        gate_mode: p.gate_mode,
        a_bar,
        b_bar,
        c: p.c.data().to_vec(),
        gate_w: p.gate_w.data().to_vec(),
        gate_b: p.gate_b.data().to_vec(),
    })
}

/// Scale applied to `a` inside the exponential, and the divisor applied to
/// the discrete transition afterwards.
fn normalization_factors(norm: Normalization) -> (f64, f64) {
    match norm.resolved() {
        Normalization::None => (1.0, 1.0),
        Normalization::Continuous { directions } => (1.0 / directions as f64, 1.0),
        Normalization::Discrete { directions } => (1.0, directions as f64),
        Normalization::Octa => unreachable!(),
    }
}

fn discretize_entry(a: f64, b: f64, delta: f64, opts: DiscretizeOptions) -> (f64, f64) {
    let (scale, divisor) = normalization_factors(opts.normalization);
    let alpha = a * scale;
    let a_bar = (delta * alpha).exp() / divisor;
    let b_bar = match opts.zoh {
        ZohRule::FirstOrder => delta * b,
        ZohRule::Exact => {
            if alpha == 0.0 {
                delta * b
            } else {
                (delta * alpha).exp_m1() / alpha * b
            }
        }
    };
    (a_bar, b_bar)
}

/// Chains gradients on the discretized parameters back to the stored
/// continuous parameters.
pub fn discretize_backward(p: &SsmParams, opts: DiscretizeOptions, grads: &DiscreteGrads) -> SsmParams {
    let (g, ch, n) = (p.groups(), p.channels(), p.d_state());
    let (scale, divisor) = normalization_factors(opts.normalization);
    let mut out = p.zeros_like();
    let (a, b) = (p.a.data(), p.b.data());
    for gc in 0..g * ch {
        let delta = p.log_delta.data()[gc].exp();
        let mut d_delta = 0.0;
        for s in 0..n {
            let i = gc * n + s;
            let alpha = a[i] * scale;
            let e = (delta * alpha).exp();
            let a_bar = e / divisor;
            let ga = grads.a_bar[i];
            // a_bar = exp(delta * alpha) / divisor
            let mut d_alpha = ga * a_bar * delta;
            d_delta += ga * a_bar * alpha;
            let gb = grads.b_bar[i];
            match opts.zoh {
                ZohRule::FirstOrder => {
                    out.b.data_mut()[i] = gb * delta;
                    d_delta += gb * b[i];
                }
                ZohRule::Exact => {
                    if alpha == 0.0 {
                        out.b.data_mut()[i] = gb * delta;
                        d_delta += gb * b[i];
                        d_alpha += gb * b[i] * delta * delta / 2.0;
                    } else {
                        let em1 = (delta * alpha).exp_m1();
                        out.b.data_mut()[i] = gb * em1 / alpha;
                        d_delta += gb * e * b[i];
                        d_alpha += gb * b[i] * (delta * e * alpha - em1) / (alpha * alpha);
                    }
                }
            }
            out.a.data_mut()[i] = d_alpha * scale;
            out.c.data_mut()[i] = grads.c[i];
        }
        out.log_delta.data_mut()[gc] = d_delta * delta;
        out.gate_w.data_mut()[gc] = grads.gate_w[gc];
        out.gate_b.data_mut()[gc] = grads.gate_b[gc];
    }
    out
}

/// One parameter group's view of the discretized parameters.
#[derive(Debug, Clone, Copy)]
pub struct Kernel<'a> {
    dp: &'a DiscretizedParams,
    group: usize,
}

impl<'a> Kernel<'a> {
    pub fn channels(&self) -> usize {
        self.dp.channels
    }

    pub fn d_state(&self) -> usize {
        self.dp.d_state
    }

    pub fn gate_mode(&self) -> GateMode {
        self.dp.gate_mode
    }

    fn base(&self, ch: usize) -> usize {
        (self.group * self.dp.channels + ch) * self.dp.d_state
    }

    fn gate_index(&self, ch: usize) -> usize {
        self.group * self.dp.channels + ch
    }

    #[inline]
    fn gate(&self, ch: usize, x: f64) -> f64 {
        match self.dp.gate_mode {
            GateMode::ConstantOne => 1.0,
            GateMode::AffineSigmoid => {
                let gi = self.gate_index(ch);
                sigmoid(self.dp.gate_w[gi] * x + self.dp.gate_b[gi])
            }
        }
    }

    /// Runs the recurrence for channel `ch` over a contiguous valid prefix.
    pub fn forward_line(&self, ch: usize, x: &[f64], y: &mut [f64], state: &mut [f64]) {
        let n = self.dp.d_state;
        let base = self.base(ch);
        let a_bar = &self.dp.a_bar[base..base + n];
        let b_bar = &self.dp.b_bar[base..base + n];
        let c = &self.dp.c[base..base + n];
        let h = &mut state[..n];
        h.fill(0.0);
        for (xt, yt) in x.iter().zip(y.iter_mut()) {
            let f = self.gate(ch, *xt);
            let mut acc = 0.0;
            for s in 0..n {
                h[s] = f * (a_bar[s] * h[s] + b_bar[s] * xt);
                acc += c[s] * h[s];
            }
            *yt = acc;
        }
    }

    /// Reverse-mode pass for one line of channel `ch`.
    ///
    /// Writes `d loss / d x` into `gx` and accumulates parameter gradients
    /// into `grads`. `scratch` must hold at least `(len + 1) * N` values.
    pub fn backward_line(
        &self,
        ch: usize,
        x: &[f64],
        gy: &[f64],
        gx: &mut [f64],
        grads: &mut DiscreteGrads,
        scratch: &mut Vec<f64>,
    ) {
        let n = self.dp.d_state;
        let len = x.len();
        let base = self.base(ch);
        let a_bar = &self.dp.a_bar[base..base + n];
        let b_bar = &self.dp.b_bar[base..base + n];
        let c = &self.dp.c[base..base + n];
        let sigmoid_gate = self.dp.gate_mode == GateMode::AffineSigmoid;
        let gi = self.gate_index(ch);

        // states[t] = h_t for t = 0..=len (h_0 = 0)
        scratch.clear();
        scratch.resize((len + 1) * n + 2 * n, 0.0);
        let (states, rest) = scratch.split_at_mut((len + 1) * n);
        let (lambda, next) = rest.split_at_mut(n);
        for t in 0..len {
            let f = self.gate(ch, x[t]);
            for s in 0..n {
                states[(t + 1) * n + s] = f * (a_bar[s] * states[t * n + s] + b_bar[s] * x[t]);
            }
        }

        // lambda = dL/dh_t; `next` holds f_{t+1} * a_bar ⊙ lambda_{t+1}
        next.fill(0.0);
        for t in (0..len).rev() {
            let f = self.gate(ch, x[t]);
            let h_prev = &states[t * n..(t + 1) * n];
            let h_cur = &states[(t + 1) * n..(t + 2) * n];
            let mut dx = 0.0;
            let mut df = 0.0;
            for s in 0..n {
                lambda[s] = c[s] * gy[t] + next[s];
                grads.c[base + s] += gy[t] * h_cur[s];
                let du = f * lambda[s];
                grads.a_bar[base + s] += du * h_prev[s];
                grads.b_bar[base + s] += du * x[t];
                dx += du * b_bar[s];
                if sigmoid_gate {
                    df += lambda[s] * (a_bar[s] * h_prev[s] + b_bar[s] * x[t]);
                }
                next[s] = f * a_bar[s] * lambda[s];
            }
            if sigmoid_gate {
                let dz = df * f * (1.0 - f);
                grads.gate_w[gi] += dz * x[t];
                grads.gate_b[gi] += dz;
                dx += dz * self.dp.gate_w[gi];
            }
            gx[t] = dx;
        }
    }
}

fn check_line_shapes(k: &Kernel<'_>, x_line: &Tensor, mask: &[bool]) -> Result<(usize, usize)> {
    if x_line.rank() != 2 || x_line.shape()[0] != k.channels() {
        return Err(Error::Shape(format!(
            "line input must be (C={}, L), got {:?}",
            k.channels(),
            x_line.shape()
        )));
    }
    let len = x_line.shape()[1];
    if mask.len() != len {
        return Err(Error::Shape(format!(
            "mask length {} does not match line length {len}",
            mask.len()
        )));
    }
    Ok((k.channels(), len))
}

/// Applies the recurrence to a `(C, L)` line, skipping masked positions.
/// Outputs at masked positions are 0.
pub fn scanline_recurrence(k: &Kernel<'_>, x_line: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let (ch, len) = check_line_shapes(k, x_line, mask)?;
    let valid: Vec<usize> = (0..len).filter(|&t| mask[t]).collect();
    let mut out = Tensor::zeros(&[ch, len]);
    let mut xs = vec![0.0; valid.len()];
    let mut ys = vec![0.0; valid.len()];
    let mut state = vec![0.0; k.d_state()];
    for c in 0..ch {
        for (v, &t) in xs.iter_mut().zip(&valid) {
            *v = x_line.data()[c * len + t];
        }
        k.forward_line(c, &xs, &mut ys, &mut state);
        for (v, &t) in ys.iter().zip(&valid) {
            out.data_mut()[c * len + t] = *v;
        }
    }
    Ok(out)
}

/// Adjoint of [`scanline_recurrence`]: returns `d<y_adjoint, y>/dx` and the
/// gradients with respect to the discretized parameters.
pub fn recurrence_backward(
    k: &Kernel<'_>,
    x_line: &Tensor,
    mask: &[bool],
    y_adjoint: &Tensor,
) -> Result<(Tensor, DiscreteGrads)> {
    let (ch, len) = check_line_shapes(k, x_line, mask)?;
    if y_adjoint.shape() != x_line.shape() {
        return Err(Error::Shape("adjoint shape differs from input".into()));
    }
    let valid: Vec<usize> = (0..len).filter(|&t| mask[t]).collect();
    let mut grads = DiscreteGrads::zeros(k.dp);
    let mut gx_out = Tensor::zeros(&[ch, len]);
    let mut xs = vec![0.0; valid.len()];
    let mut gys = vec![0.0; valid.len()];
    let mut gxs = vec![0.0; valid.len()];
    let mut scratch = Vec::new();
    for c in 0..ch {
        for (i, &t) in valid.iter().enumerate() {
            xs[i] = x_line.data()[c * len + t];
            gys[i] = y_adjoint.data()[c * len + t];
        }
        k.backward_line(c, &xs, &gys, &mut gxs, &mut grads, &mut scratch);
        for (v, &t) in gxs.iter().zip(&valid) {
            gx_out.data_mut()[c * len + t] = *v;
        }
    }
    Ok((gx_out, grads))
}

/// Runs every `(batch, channel, line)` of one direction independently.
/// `seqs` is `(B, C, n_lines, L)` and `mask` is `(n_lines, L)` flattened.
pub fn direction_scan(k: &Kernel<'_>, seqs: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if seqs.rank() != 4 || seqs.shape()[1] != k.channels() {
        return Err(Error::Shape(format!(
            "direction sequences must be (B, C={}, n, L), got {:?}",
            k.channels(),
            seqs.shape()
        )));
    }
    let (b, ch, lines, len) = (seqs.shape()[0], seqs.shape()[1], seqs.shape()[2], seqs.shape()[3]);
    if mask.len() != lines * len {
        return Err(Error::Shape(format!(
            "mask holds {} entries, sequences need {}",
            mask.len(),
            lines * len
        )));
    }
    let mut out = Tensor::zeros(seqs.shape());
    let mut state = vec![0.0; k.d_state()];
    let mut xs = Vec::with_capacity(len);
    let mut ys = vec![0.0; len];
    for bi in 0..b {
        for c in 0..ch {
            for l in 0..lines {
                let m = &mask[l * len..(l + 1) * len];
                let base = ((bi * ch + c) * lines + l) * len;
                xs.clear();
                xs.extend((0..len).filter(|&t| m[t]).map(|t| seqs.data()[base + t]));
                let ys = &mut ys[..xs.len()];
                k.forward_line(c, &xs, ys, &mut state);
                let mut it = ys.iter();
                for t in (0..len).filter(|&t| m[t]) {
                    out.data_mut()[base + t] = *it.next().unwrap();
                }
            }
        }
    }
    Ok(out)
}

/// Dense lower-triangular lift of the constant-gate recurrence for one
/// channel: `M[j][i] = sum_n c_n a_bar_n^(j - i) b_bar_n` for `j >= i`.
pub fn semiseparable_matrix(k: &Kernel<'_>, channel: usize, len: usize) -> Result<Tensor> {
    if k.gate_mode() != GateMode::ConstantOne {
        return Err(Error::UnsupportedOracle);
    }
    if len == 0 || channel >= k.channels() {
        return Err(Error::InvalidArgument(format!(
            "need len >= 1 and channel < {}",
            k.channels()
        )));
    }
    let n = k.d_state();
    let base = k.base(channel);
    let mut m = Tensor::zeros(&[len, len]);
    for s in 0..n {
        let (a, b, c) = (k.dp.a_bar[base + s], k.dp.b_bar[base + s], k.dp.c[base + s]);
        for j in 0..len {
            let mut pow = 1.0;
            for i in (0..=j).rev() {
                m.data_mut()[j * len + i] += c * pow * b;
                pow *= a;
            }
        }
    }
    Ok(m)
}

/// Elementwise sum of per-direction operator lifts.
pub fn aggregate_operator(matrices: &[Tensor]) -> Result<Tensor> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidArgument("no matrices to aggregate".into()))?;
    let mut out = Tensor::zeros(first.shape());
    for m in matrices {
        if m.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "cannot aggregate {:?} with {:?}",
                first.shape(),
                m.shape()
            )));
        }
        out.data_mut().iter_mut().zip(m.data()).for_each(|(o, v)| *o += v);
    }
    Ok(out)
}
