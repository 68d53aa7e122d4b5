//! Successive convolutional encoder and per-rate decoders.
//!
//! The encoder applies one fully convolutional down-sizing (FCDS) block `S`
//! times; every application halves the width, and the output of application
//! `i` is the rate-`i` codeword (compression ratio `2^i`). All applications
//! share one parameter set. The dense variant appends a length-preserving
//! fully connected layer with its own parameters after each application.
//!
//! Decoder `i`: FC to `K·N_t` → activation → reshape `(1, K, N_t)` → 1×3 conv →
//! activation → RefineBlocks → linear FC to `K·N_t`.
//!
//! Parameters live in one flat vector; the model only stores offsets into it.

use rand::Rng;

use crate::nn::complexity::{propagate, LayerSpec, Shape};
use crate::nn::layers::{
    conv1xk_backward, conv1xk_forward, fc_backward, fc_forward, leaky_relu, leaky_relu_backward,
};
use crate::nn::tensor::{Real, Tensor};
use crate::seed::{rng_for, text_hash};
use crate::{Error, Result};

/// FCDS kernel widths, first to last layer.
pub const FCDS_KERNELS: [usize; 3] = [7, 5, 3];
/// Hidden channel count inside an FCDS block (channel plan 1→2→2→1).
pub const FCDS_HIDDEN: usize = 2;
/// RefineBlock channel plan 1→16→8→1 with 1×3 kernels.
pub const REFINE_CHANNELS: [usize; 3] = [16, 8, 1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenetConfig {
    /// Number of FCDS applications (= number of rates).
    pub stages: usize,
    /// Base number: rows per segment.
    pub k: usize,
    /// Delay taps per row.
    pub n_t: usize,
    pub dense: bool,
    pub refine_blocks: usize,
    pub slope: f64,
}

impl Default for ScenetConfig {
    fn default() -> Self {
        Self {
            stages: 4,
            k: 2,
            n_t: 32,
            dense: false,
            refine_blocks: 5,
            slope: 0.3,
        }
    }
}

impl ScenetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.stages >= 16 {
            return Err(Error::config(format!("S={} must lie in 1..16", self.stages)));
        }
        if self.k == 0 {
            return Err(Error::config("K must be positive"));
        }
        if self.n_t == 0 || !self.n_t.is_multiple_of(1 << self.stages) {
            return Err(Error::config(format!(
                "N_t={} must be a positive multiple of 2^{}",
                self.n_t, self.stages
            )));
        }
        if self.refine_blocks == 0 {
            return Err(Error::config("at least one RefineBlock is required"));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::config(format!("slope {} not in (0, 1)", self.slope)));
        }
        Ok(())
    }

    /// Canonical architecture text; its hash identifies compatible checkpoints.
    pub fn canonical(&self) -> String {
        format!(
            "S = {}\nK = {}\nN_t = {}\ndense = {}\nrefine_blocks = {}\nslope = {}\nfcds = 1-{h}-{h}-1/{}-{}-{}\n",
            self.stages,
            self.k,
            self.n_t,
            self.dense,
            self.refine_blocks,
            self.slope,
            FCDS_KERNELS[0],
            FCDS_KERNELS[1],
            FCDS_KERNELS[2],
            h = FCDS_HIDDEN,
        )
    }

    pub fn arch_hash(&self) -> String {
        text_hash(&self.canonical())
    }

    /// Elements in one segment, `K·N_t`.
    pub fn segment_len(&self) -> usize {
        self.k * self.n_t
    }

    /// Codeword length at rate `i` (1-based): `K·N_t / 2^i`.
    pub fn codeword_len(&self, rate: usize) -> usize {
        self.segment_len() >> rate
    }

    pub fn compression_ratio(&self, rate: usize) -> usize {
        1 << rate
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    w: Slot,
    b: Slot,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    n_in: usize,
    n_out: usize,
    w: Slot,
    b: Slot,
}

/// Contiguous run of parameters.
#[derive(Debug, Clone, Copy)]
struct Slot {
    start: usize,
    end: usize,
}

impl Slot {
    fn len(&self) -> usize {
        self.end - self.start
    }
    fn std(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

struct Layout {
    next: usize,
}

impl Layout {
    fn take(&mut self, len: usize) -> Slot {
        let r = Slot {
            start: self.next,
            end: self.next + len,
        };
        self.next += len;
        r
    }

    fn conv(&mut self, c_in: usize, c_out: usize, k: usize, stride: usize) -> Conv {
        let w = self.take(c_out * c_in * k);
        let b = self.take(c_out);
        Conv {
            c_in,
            c_out,
            k,
            stride,
            w,
            b,
        }
    }

    fn dense(&mut self, n_in: usize, n_out: usize) -> Dense {
        let w = self.take(n_out * n_in);
        let b = self.take(n_out);
        Dense { n_in, n_out, w, b }
    }
}

/// Weight and bias gradient slices of one layer (weights precede biases).
fn grad_slices<T>(grads: &mut [T], w: Slot, b: Slot) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(w.end, b.start);
    grads[w.start..b.end].split_at_mut(w.len())
}

impl Conv {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Conv1xk {
            c_in: self.c_in,
            c_out: self.c_out,
            k: self.k,
            stride: self.stride,
        }
    }

    fn fan_in(&self) -> usize {
        self.c_in * self.k
    }

    fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        conv1xk_forward(x, &p[self.w.std()], &p[self.b.std()], self.c_out, self.k, self.stride)
    }

    fn backward<T: Real>(
        &self,
        p: &[T],
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut [T],
    ) -> Result<Tensor<T>> {
        let (dw, db) = grad_slices(grads, self.w, self.b);
        conv1xk_backward(x, &p[self.w.std()], dy, self.k, self.stride, dw, db)
    }
}

impl Dense {
    fn spec(&self) -> LayerSpec {
        LayerSpec::FullyConnected {
            n_in: self.n_in,
            n_out: self.n_out,
        }
    }

    fn forward<T: Real>(&self, p: &[T], x: &[T]) -> Result<Vec<T>> {
        fc_forward(x, &p[self.w.std()], &p[self.b.std()])
    }

    fn backward<T: Real>(&self, p: &[T], x: &[T], dy: &[T], grads: &mut [T]) -> Result<Vec<T>> {
        let (dw, db) = grad_slices(grads, self.w, self.b);
        fc_backward(x, &p[self.w.std()], dy, dw, db)
    }
}

#[derive(Debug, Clone)]
struct Decoder {
    fc_in: Dense,
    conv: Conv,
    refine: Vec<[Conv; 3]>,
    fc_out: Dense,
}

/// Codewords for every rate and the reconstruction each decoder produces.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRateOutput<T> {
    pub codewords: Vec<Vec<T>>,
    /// Flat `K × N_t` row-major estimates, one per rate.
    pub reconstructions: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
struct FcdsTrace<T> {
    input: Tensor<T>,
    z1: Tensor<T>,
    a1: Tensor<T>,
    z2: Tensor<T>,
    a2: Tensor<T>,
    z3: Tensor<T>,
}

#[derive(Debug, Clone)]
struct StageTrace<T> {
    fcds: FcdsTrace<T>,
    /// Dense variant: FCDS output (flat) and the FC pre-activation.
    dense: Option<(Vec<T>, Vec<T>)>,
}

#[derive(Debug, Clone)]
struct RefineTrace<T> {
    input: Tensor<T>,
    z1: Tensor<T>,
    a1: Tensor<T>,
    z2: Tensor<T>,
    a2: Tensor<T>,
    sum: Tensor<T>,
}

#[derive(Debug, Clone)]
struct DecoderTrace<T> {
    codeword: Vec<T>,
    z0: Vec<T>,
    a0: Tensor<T>,
    zc: Tensor<T>,
    refine: Vec<RefineTrace<T>>,
    head_in: Vec<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    stages: Vec<StageTrace<T>>,
    decoders: Vec<DecoderTrace<T>>,
    pub output: MultiRateOutput<T>,
}

impl<T: Real> Trace<T> {
    /// Fingerprint of the sign of every activation input.
    pub fn activation_pattern(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |vals: &[T]| {
            for v in vals {
                h ^= u64::from(*v > T::zero());
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for s in &self.stages {
            feed(&s.fcds.z1.data);
            feed(&s.fcds.z2.data);
            feed(&s.fcds.z3.data);
            if let Some((_, z)) = &s.dense {
                feed(z);
            }
        }
        for d in &self.decoders {
            feed(&d.z0);
            feed(&d.zc.data);
            for r in &d.refine {
                feed(&r.z1.data);
                feed(&r.z2.data);
                feed(&r.sum.data);
            }
        }
        h
    }
}

/// Parameter and FLOP totals for one network part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Complexity {
    pub params: usize,
    pub flops: u64,
}

#[derive(Debug, Clone)]
pub struct Scenet {
    cfg: ScenetConfig,
    fcds: [Conv; 3],
    stage_fc: Vec<Dense>,
    decoders: Vec<Decoder>,
    encoder_end: usize,
    n_params: usize,
}

impl Scenet {
    pub fn new(cfg: ScenetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut lay = Layout { next: 0 };
        let fcds = [
            lay.conv(1, FCDS_HIDDEN, FCDS_KERNELS[0], 1),
            lay.conv(FCDS_HIDDEN, FCDS_HIDDEN, FCDS_KERNELS[1], 1),
            lay.conv(FCDS_HIDDEN, 1, FCDS_KERNELS[2], 2),
        ];
        let stage_fc = if cfg.dense {
            (1..=cfg.stages)
                .map(|i| {
                    let n = cfg.codeword_len(i);
                    lay.dense(n, n)
                })
                .collect()
        } else {
            Vec::new()
        };
        let encoder_end = lay.next;
        let full = cfg.segment_len();
        let decoders = (1..=cfg.stages)
            .map(|i| {
                let fc_in = lay.dense(cfg.codeword_len(i), full);
                let conv = lay.conv(1, 1, 3, 1);
                let refine = (0..cfg.refine_blocks)
                    .map(|_| {
                        [
                            lay.conv(1, REFINE_CHANNELS[0], 3, 1),
                            lay.conv(REFINE_CHANNELS[0], REFINE_CHANNELS[1], 3, 1),
                            lay.conv(REFINE_CHANNELS[1], REFINE_CHANNELS[2], 3, 1),
                        ]
                    })
                    .collect();
                let fc_out = lay.dense(full, full);
                Decoder {
                    fc_in,
                    conv,
                    refine,
                    fc_out,
                }
            })
            .collect();
        Ok(Self {
            cfg,
            fcds,
            stage_fc,
            decoders,
            encoder_end,
            n_params: lay.next,
        })
    }

    pub fn config(&self) -> &ScenetConfig {
        &self.cfg
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    /// Indices of the encoder parameters (shared FCDS block, then per-stage FCs).
    pub fn encoder_params(&self) -> std::ops::Range<usize> {
        0..self.encoder_end
    }

    /// Indices of the shared FCDS block parameters.
    pub fn fcds_params(&self) -> std::ops::Range<usize> {
        self.fcds[0].w.start..self.fcds[2].b.end
    }

    /// Indices of decoder `rate` (1-based).
    pub fn decoder_params(&self, rate: usize) -> std::ops::Range<usize> {
        let d = &self.decoders[rate - 1];
        d.fc_in.w.start..d.fc_out.b.end
    }

    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f32> {
        let mut rng = rng_for(seed, "init", 0);
        let mut p = vec![0f32; self.n_params];
        let mut fill = |w: Slot, fan_in: usize, p: &mut [f32]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[w.std()] {
                *v = rng.random_range(-bound..bound) as f32;
            }
        };
        for c in &self.fcds {
            fill(c.w, c.fan_in(), &mut p);
        }
        for d in &self.stage_fc {
            fill(d.w, d.n_in, &mut p);
        }
        for dec in &self.decoders {
            fill(dec.fc_in.w, dec.fc_in.n_in, &mut p);
            fill(dec.conv.w, dec.conv.fan_in(), &mut p);
            for rb in &dec.refine {
                for c in rb {
                    fill(c.w, c.fan_in(), &mut p);
                }
            }
            fill(dec.fc_out.w, dec.fc_out.n_in, &mut p);
        }
        p
    }

    fn slope<T: Real>(&self) -> T {
        T::from_f64(self.cfg.slope)
    }

    fn act<T: Real>(&self, z: &Tensor<T>) -> Tensor<T> {
        Tensor {
            channels: z.channels,
            height: z.height,
            width: z.width,
            data: leaky_relu(&z.data, self.slope()),
        }
    }

    fn act_back<T: Real>(&self, z: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        Tensor {
            channels: z.channels,
            height: z.height,
            width: z.width,
            data: leaky_relu_backward(&z.data, &dy.data, self.slope()),
        }
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::shape(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.n_params
            )));
        }
        Ok(())
    }

    /// One FCDS application: `(1, K, L)` → `(1, K, L/2)`.
    pub fn fcds_apply<T: Real>(&self, params: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_params(params)?;
        Ok(self.fcds_forward(params, x)?.1)
    }

    fn fcds_forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> Result<(FcdsTrace<T>, Tensor<T>)> {
        if x.channels != 1 || !x.width.is_multiple_of(2) {
            return Err(Error::shape(format!(
                "FCDS input must be (1, K, even L), got {:?}",
                x.shape()
            )));
        }
        let z1 = self.fcds[0].forward(p, x)?;
        let a1 = self.act(&z1);
        let z2 = self.fcds[1].forward(p, &a1)?;
        let a2 = self.act(&z2);
        let z3 = self.fcds[2].forward(p, &a2)?;
        let out = self.act(&z3);
        Ok((
            FcdsTrace {
                input: x.clone(),
                z1,
                a1,
                z2,
                a2,
                z3,
            },
            out,
        ))
    }

    fn fcds_backward<T: Real>(
        &self,
        p: &[T],
        t: &FcdsTrace<T>,
        d_out: &Tensor<T>,
        grads: &mut [T],
    ) -> Result<Tensor<T>> {
        let d_z3 = self.act_back(&t.z3, d_out);
        let d_a2 = self.fcds[2].backward(p, &t.a2, &d_z3, grads)?;
        let d_z2 = self.act_back(&t.z2, &d_a2);
        let d_a1 = self.fcds[1].backward(p, &t.a1, &d_z2, grads)?;
        let d_z1 = self.act_back(&t.z1, &d_a1);
        self.fcds[0].backward(p, &t.input, &d_z1, grads)
    }

    fn segment_tensor<T: Real>(&self, segment: &[T]) -> Result<Tensor<T>> {
        if segment.len() != self.cfg.segment_len() {
            return Err(Error::shape(format!(
                "segment has {} values, expected K·N_t = {}",
                segment.len(),
                self.cfg.segment_len()
            )));
        }
        Tensor::from_vec(1, self.cfg.k, self.cfg.n_t, segment.to_vec())
    }

    /// Per-stage activations and the codeword of every stage.
    #[allow(clippy::type_complexity)]
    fn encode_trace<T: Real>(&self, p: &[T], segment: &[T]) -> Result<(Vec<StageTrace<T>>, Vec<Vec<T>>)> {
        let mut h = self.segment_tensor(segment)?;
        let mut stages = Vec::with_capacity(self.cfg.stages);
        let mut codewords = Vec::with_capacity(self.cfg.stages);
        for s in 0..self.cfg.stages {
            let (fcds, out) = self.fcds_forward(p, &h)?;
            let (dense, out) = match self.stage_fc.get(s) {
                Some(fc) => {
                    let z = fc.forward(p, &out.data)?;
                    let a = leaky_relu(&z, self.slope());
                    let shaped = Tensor::from_vec(1, out.height, out.width, a)?;
                    (Some((out.data, z)), shaped)
                }
                None => (None, out),
            };
            codewords.push(out.data.clone());
            stages.push(StageTrace { fcds, dense });
            h = out;
        }
        Ok((stages, codewords))
    }

    /// Codewords `q_1..q_S` for one `K × N_t` segment (flat, row-major).
    pub fn encode<T: Real>(&self, params: &[T], segment: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_params(params)?;
        Ok(self.encode_trace(params, segment)?.1)
    }

    fn decode_trace<T: Real>(&self, p: &[T], rate: usize, q: &[T]) -> Result<(DecoderTrace<T>, Vec<T>)> {
        let dec = self
            .decoders
            .get(rate.wrapping_sub(1))
            .ok_or_else(|| Error::shape(format!("rate {rate} not in 1..={}", self.cfg.stages)))?;
        if q.len() != dec.fc_in.n_in {
            return Err(Error::shape(format!(
                "rate-{rate} codeword has {} values, expected {}",
                q.len(),
                dec.fc_in.n_in
            )));
        }
        let z0 = dec.fc_in.forward(p, q)?;
        let a0 = Tensor::from_vec(1, self.cfg.k, self.cfg.n_t, leaky_relu(&z0, self.slope()))?;
        let zc = dec.conv.forward(p, &a0)?;
        let mut h = self.act(&zc);
        let mut refine = Vec::with_capacity(dec.refine.len());
        for rb in &dec.refine {
            let z1 = rb[0].forward(p, &h)?;
            let a1 = self.act(&z1);
            let z2 = rb[1].forward(p, &a1)?;
            let a2 = self.act(&z2);
            let z3 = rb[2].forward(p, &a2)?;
            let mut sum = h.clone();
            for (s, v) in sum.data.iter_mut().zip(&z3.data) {
                *s += *v;
            }
            let y = self.act(&sum);
            refine.push(RefineTrace {
                input: h,
                z1,
                a1,
                z2,
                a2,
                sum,
            });
            h = y;
        }
        let out = dec.fc_out.forward(p, &h.data)?;
        Ok((
            DecoderTrace {
                codeword: q.to_vec(),
                z0,
                a0,
                zc,
                refine,
                head_in: h.data,
            },
            out,
        ))
    }

    /// Segment estimate (flat `K × N_t`) from a rate-`rate` codeword.
    pub fn decode<T: Real>(&self, params: &[T], rate: usize, codeword: &[T]) -> Result<Vec<T>> {
        self.check_params(params)?;
        Ok(self.decode_trace(params, rate, codeword)?.1)
    }

    /// One RefineBlock on `(1, K, N_t)`; `block` indexes decoder `rate`'s blocks.
    pub fn refineblock<T: Real>(
        &self,
        params: &[T],
        rate: usize,
        block: usize,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self.check_params(params)?;
        let rb = self
            .decoders
            .get(rate.wrapping_sub(1))
            .and_then(|d| d.refine.get(block))
            .ok_or_else(|| Error::shape(format!("no RefineBlock {block} at rate {rate}")))?;
        let z1 = rb[0].forward(params, x)?;
        let z2 = rb[1].forward(params, &self.act(&z1))?;
        let z3 = rb[2].forward(params, &self.act(&z2))?;
        let mut sum = x.clone();
        for (s, v) in sum.data.iter_mut().zip(&z3.data) {
            *s += *v;
        }
        Ok(self.act(&sum))
    }

    /// Encodes once, then decodes every codeword with its own decoder.
    pub fn forward_trace<T: Real>(&self, params: &[T], segment: &[T]) -> Result<Trace<T>> {
        self.check_params(params)?;
        let (stages, codewords) = self.encode_trace(params, segment)?;
        let mut decoders = Vec::with_capacity(codewords.len());
        let mut reconstructions = Vec::with_capacity(codewords.len());
        for (i, q) in codewords.iter().enumerate() {
            let (t, out) = self.decode_trace(params, i + 1, q)?;
            decoders.push(t);
            reconstructions.push(out);
        }
        Ok(Trace {
            stages,
            decoders,
            output: MultiRateOutput {
                codewords,
                reconstructions,
            },
        })
    }

    pub fn forward_all_rates<T: Real>(&self, params: &[T], segment: &[T]) -> Result<MultiRateOutput<T>> {
        Ok(self.forward_trace(params, segment)?.output)
    }

    /// Accumulates into `grads` the parameter gradient of a scalar loss whose
    /// gradient with respect to each reconstruction is `d_recon[rate - 1]`.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        trace: &Trace<T>,
        d_recon: &[Vec<T>],
        grads: &mut [T],
    ) -> Result<()> {
        self.check_params(params)?;
        self.check_params(grads)?;
        if d_recon.len() != self.cfg.stages {
            return Err(Error::shape("one upstream gradient per rate is required"));
        }
        let p = params;
        let mut d_codewords = Vec::with_capacity(self.cfg.stages);
        for ((dec, t), dy) in self.decoders.iter().zip(&trace.decoders).zip(d_recon) {
            let d_head = dec.fc_out.backward(p, &t.head_in, dy, grads)?;
            let mut dh = Tensor::from_vec(1, self.cfg.k, self.cfg.n_t, d_head)?;
            for (rb, rt) in dec.refine.iter().zip(&t.refine).rev() {
                let d_sum = self.act_back(&rt.sum, &dh);
                let d_a2 = rb[2].backward(p, &rt.a2, &d_sum, grads)?;
                let d_z2 = self.act_back(&rt.z2, &d_a2);
                let d_a1 = rb[1].backward(p, &rt.a1, &d_z2, grads)?;
                let d_z1 = self.act_back(&rt.z1, &d_a1);
                let mut d_in = rb[0].backward(p, &rt.input, &d_z1, grads)?;
                for (d, s) in d_in.data.iter_mut().zip(&d_sum.data) {
                    *d += *s;
                }
                dh = d_in;
            }
            let d_zc = self.act_back(&t.zc, &dh);
            let d_a0 = dec.conv.backward(p, &t.a0, &d_zc, grads)?;
            let d_z0 = leaky_relu_backward(&t.z0, &d_a0.data, self.slope());
            d_codewords.push(dec.fc_in.backward(p, &t.codeword, &d_z0, grads)?);
        }

        // Walk the encoder stages backwards; stage s receives the gradient of
        // its own codeword plus whatever flows back from stage s + 1.
        let mut carry: Option<Tensor<T>> = None;
        for (s, st) in trace.stages.iter().enumerate().rev() {
            let out_shape = (1, self.cfg.k, self.cfg.n_t >> (s + 1));
            let mut g = d_codewords[s].clone();
            if let Some(c) = carry.take() {
                for (a, b) in g.iter_mut().zip(&c.data) {
                    *a += *b;
                }
            }
            let g_fcds = match (&st.dense, self.stage_fc.get(s)) {
                (Some((fcds_out, z)), Some(fc)) => {
                    let d_z = leaky_relu_backward(z, &g, self.slope());
                    fc.backward(p, fcds_out, &d_z, grads)?
                }
                _ => g,
            };
            let g_fcds = Tensor::from_vec(out_shape.0, out_shape.1, out_shape.2, g_fcds)?;
            let d_in = self.fcds_backward(p, &st.fcds, &g_fcds, grads)?;
            if s > 0 {
                carry = Some(d_in);
            }
        }
        Ok(())
    }

    /// The FCDS block once, as a layer list.
    pub fn fcds_spec(&self) -> Vec<LayerSpec> {
        self.fcds
            .iter()
            .flat_map(|c| [c.spec(), LayerSpec::LeakyRelu])
            .collect()
    }

    pub fn decoder_spec(&self, rate: usize) -> Vec<LayerSpec> {
        let dec = &self.decoders[rate - 1];
        let mut spec = vec![dec.fc_in.spec(), LayerSpec::LeakyRelu, dec.conv.spec(), LayerSpec::LeakyRelu];
        for rb in &dec.refine {
            spec.extend([
                rb[0].spec(),
                LayerSpec::LeakyRelu,
                rb[1].spec(),
                LayerSpec::LeakyRelu,
                rb[2].spec(),
                LayerSpec::ResidualAdd,
                LayerSpec::LeakyRelu,
            ]);
        }
        spec.push(dec.fc_out.spec());
        spec
    }

    /// Encoder parameters (shared block counted once) and FLOPs for producing
    /// all `S` codewords (block counted once per application).
    pub fn encoder_complexity(&self) -> Result<Complexity> {
        let block = self.fcds_spec();
        let mut params = crate::nn::count_params(&block);
        let mut flops = 0;
        let mut shape = Shape::new(1, self.cfg.k, self.cfg.n_t);
        for s in 0..self.cfg.stages {
            let (f, out) = propagate(&block, shape)?;
            flops += f;
            shape = out;
            if let Some(fc) = self.stage_fc.get(s) {
                let spec = [fc.spec(), LayerSpec::LeakyRelu];
                params += crate::nn::count_params(&spec);
                let (f, out) = propagate(&spec, shape)?;
                flops += f;
                shape = out;
            }
        }
        Ok(Complexity { params, flops })
    }

    pub fn decoder_complexity(&self, rate: usize) -> Result<Complexity> {
        let spec = self.decoder_spec(rate);
        let q = self.cfg.codeword_len(rate);
        let (flops, _) = propagate(&spec, Shape::new(1, self.cfg.k, q / self.cfg.k))?;
        Ok(Complexity {
            params: crate::nn::count_params(&spec),
            flops,
        })
    }
}
