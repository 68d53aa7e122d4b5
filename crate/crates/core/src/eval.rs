//! Reconstruction quality, channel-statistics analysis and the array-size
//! scalability experiment.

use std::fmt::Write as _;

use ndarray::Array2;
use num_complex::Complex64;

use crate::channel_gen::ArrayGeometry;
use crate::preprocess::{unitary_dft_matrix, Pipeline, PreparedChannel, SegmentationConfig};
use crate::scenet::Scenet;
use crate::{CsiMatrix, Error, Result};

/// Reports never go below this many dB.
pub const DB_FLOOR: f64 = -100.0;

pub fn to_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        return DB_FLOOR;
    }
    (10.0 * linear.log10()).max(DB_FLOOR)
}

fn energy(h: &CsiMatrix) -> f64 {
    h.iter().map(|c| c.norm_sqr()).sum()
}

/// `‖H − Ĥ‖²_F / ‖H‖²_F` for one sample.
pub fn nmse_sample(truth: &CsiMatrix, estimate: &CsiMatrix) -> Result<f64> {
    if truth.dim() != estimate.dim() {
        return Err(Error::shape(format!(
            "truth {:?} vs estimate {:?}",
            truth.dim(),
            estimate.dim()
        )));
    }
    let e = energy(truth);
    if e <= 0.0 {
        return Err(Error::Degenerate("zero-norm truth sample".into()));
    }
    let err: f64 = truth
        .iter()
        .zip(estimate.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(err / e)
}

/// Mean of per-sample normalized squared errors.
pub fn nmse(truth: &[CsiMatrix], estimate: &[CsiMatrix]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::shape(format!(
            "{} truth samples vs {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    let mut sum = 0.0;
    for (t, e) in truth.iter().zip(estimate) {
        sum += nmse_sample(t, e)?;
    }
    Ok(sum / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateNmse {
    pub compression_ratio: usize,
    pub linear: f64,
    pub db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseResult {
    pub rates: Vec<RateNmse>,
    pub samples: usize,
    pub scenario: String,
    pub k: usize,
    pub n_a: usize,
}

impl NmseResult {
    pub const CSV_HEADER: &'static str = "scenario,n_a,k,samples,compression_ratio,nmse_linear,nmse_db";

    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.rates {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.9e},{:.6}",
                self.scenario, self.n_a, self.k, self.samples, r.compression_ratio, r.linear, r.db
            );
        }
        s
    }
}

/// Per-rate NMSE plus the weighted training criterion on the same data.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub nmse_linear: Vec<f64>,
    /// Mean over segments of `Σ_s W_s ‖x − x̂_s‖²` in the normalized domain.
    pub weighted_loss: f64,
    pub samples: usize,
}

/// Runs every rate on every prepared channel and scores it in the pilot
/// frequency domain.
pub fn evaluate_prepared(
    model: &Scenet,
    params: &[f32],
    pipeline: &Pipeline,
    channels: &[PreparedChannel],
    weights: &[f64],
) -> Result<EvalSummary> {
    let stages = model.config().stages;
    if weights.len() != stages {
        return Err(Error::config(format!("{} weights for {stages} rates", weights.len())));
    }
    if channels.is_empty() {
        return Err(Error::Degenerate("no channels to evaluate".into()));
    }
    let mut nmse_sum = vec![0.0; stages];
    let mut loss_sum = 0.0;
    let mut n_segments = 0usize;
    for ch in channels {
        let mut per_rate: Vec<Vec<Vec<f32>>> = vec![Vec::with_capacity(ch.segments.len()); stages];
        for seg in &ch.segments {
            let out = model.forward_all_rates(params, seg)?;
            for (s, rec) in out.reconstructions.into_iter().enumerate() {
                let sq: f64 = rec
                    .iter()
                    .zip(seg)
                    .map(|(&a, &b)| f64::from(a - b).powi(2))
                    .sum();
                loss_sum += weights[s] * sq;
                per_rate[s].push(rec);
            }
            n_segments += 1;
        }
        for (s, estimates) in per_rate.iter().enumerate() {
            let est = pipeline.assemble(estimates)?;
            nmse_sum[s] += nmse_sample(&ch.pilot, &est)?;
        }
    }
    let n = channels.len() as f64;
    Ok(EvalSummary {
        nmse_linear: nmse_sum.into_iter().map(|v| v / n).collect(),
        weighted_loss: loss_sum / n_segments as f64,
        samples: channels.len(),
    })
}

/// Prepares `truth` with `pipeline` and evaluates; wraps the result with
/// run metadata.
pub fn evaluate(
    model: &Scenet,
    params: &[f32],
    pipeline: &Pipeline,
    truth: &[CsiMatrix],
    weights: &[f64],
    scenario: &str,
) -> Result<NmseResult> {
    let prepared = truth
        .iter()
        .map(|h| pipeline.prepare(h))
        .collect::<Result<Vec<_>>>()?;
    let summary = evaluate_prepared(model, params, pipeline, &prepared, weights)?;
    let cfg = model.config();
    Ok(NmseResult {
        rates: summary
            .nmse_linear
            .iter()
            .enumerate()
            .map(|(i, &linear)| RateNmse {
                compression_ratio: cfg.compression_ratio(i + 1),
                linear,
                db: to_db(linear),
            })
            .collect(),
        samples: truth.len(),
        scenario: scenario.to_string(),
        k: pipeline.seg.k,
        n_a: pipeline.seg.n_a,
    })
}

/// Evaluates one model, unchanged, on pilot CSI sets of different array
/// sizes. `base` supplies the transform, window and training normalization;
/// each set gets its own segmentation with the model's base number `K`.
pub fn scalability_eval(
    model: &Scenet,
    params: &[f32],
    base: &Pipeline,
    sets: &[(usize, Vec<CsiMatrix>)],
    weights: &[f64],
    scenario: &str,
) -> Result<Vec<NmseResult>> {
    sets.iter()
        .map(|(n_a, truth)| {
            let pipeline = Pipeline {
                seg: SegmentationConfig::new(model.config().k, *n_a)?,
                ..base.clone()
            };
            evaluate(model, params, &pipeline, truth, weights, scenario)
        })
        .collect()
}

/// `F_V ⊗ F_H`, matching the vertical-major antenna order of the array.
pub fn beam_basis(geom: &ArrayGeometry) -> CsiMatrix {
    let fv = unitary_dft_matrix(geom.n_vertical);
    let fh = unitary_dft_matrix(geom.n_horizontal);
    let (nv, nh) = (geom.n_vertical, geom.n_horizontal);
    Array2::from_shape_fn((nv * nh, nv * nh), |(r, c)| {
        fv[[r / nh, c / nh]] * fh[[r % nh, c % nh]]
    })
}

/// Beams whose power is below this fraction of the strongest beam are
/// treated as absent: unit self-correlation, zero cross-correlation.
pub const BEAM_POWER_FLOOR: f64 = 1e-12;

/// `|E[b_m b_n*]| / √(E|b_m|² E|b_n|²)` over samples and delay taps, where
/// `b = Bᴴ h` is each delay column projected onto the orthogonal beam set.
pub fn beam_cross_correlation(delay_csi: &[CsiMatrix], geom: &ArrayGeometry) -> Result<Array2<f64>> {
    let n_a = geom.n_antennas();
    if delay_csi.is_empty() {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    if let Some(h) = delay_csi.iter().find(|h| h.nrows() != n_a) {
        return Err(Error::shape(format!("{} rows for a {n_a}-antenna array", h.nrows())));
    }
    let basis_h = beam_basis(geom).t().mapv(|c| c.conj());
    let mut cov = Array2::<Complex64>::zeros((n_a, n_a));
    for h in delay_csi {
        let b = basis_h.dot(h);
        cov = cov + b.dot(&b.t().mapv(|c| c.conj()));
    }
    let power: Vec<f64> = (0..n_a).map(|i| cov[[i, i]].re).collect();
    let max_power = power.iter().cloned().fold(0.0, f64::max);
    if !(max_power > 0.0 && max_power.is_finite()) {
        return Err(Error::Degenerate("every beam has zero power".into()));
    }
    let live = |i: usize| power[i] > BEAM_POWER_FLOOR * max_power;
    Ok(Array2::from_shape_fn((n_a, n_a), |(m, n)| {
        if m == n {
            1.0
        } else if live(m) && live(n) {
            (cov[[m, n]].norm() / (power[m] * power[n]).sqrt()).min(1.0)
        } else {
            0.0
        }
    }))
}

/// For each antenna, the autocorrelation over tap lag of the mean-removed
/// delay magnitude profile, normalized to 1 at lag 0 and averaged over
/// samples. Flat profiles carry no lag structure and are skipped.
/// Returns `N_a × n_taps`.
pub fn delay_tap_correlation(delay_csi: &[CsiMatrix]) -> Result<Array2<f64>> {
    let first = delay_csi
        .first()
        .ok_or_else(|| Error::Degenerate("empty dataset".into()))?;
    let (n_a, n_t) = first.dim();
    if let Some(h) = delay_csi.iter().find(|h| h.dim() != (n_a, n_t)) {
        return Err(Error::shape(format!("sample {:?} vs {:?}", h.dim(), (n_a, n_t))));
    }
    let mut sum = Array2::<f64>::zeros((n_a, n_t));
    let mut counts = vec![0usize; n_a];
    let mut profile = vec![0.0; n_t];
    for h in delay_csi {
        for a in 0..n_a {
            for (p, c) in profile.iter_mut().zip(h.row(a)) {
                *p = c.norm();
            }
            let mean = profile.iter().sum::<f64>() / n_t as f64;
            profile.iter_mut().for_each(|p| *p -= mean);
            let r0: f64 = profile.iter().map(|p| p * p).sum();
            if r0 <= 1e-30 {
                continue;
            }
            for lag in 0..n_t {
                let r: f64 = (0..n_t - lag).map(|t| profile[t] * profile[t + lag]).sum();
                sum[[a, lag]] += r / r0;
            }
            counts[a] += 1;
        }
    }
    for (a, &c) in counts.iter().enumerate() {
        if c > 0 {
            sum.row_mut(a).mapv_inplace(|v| v / c as f64);
        }
    }
    Ok(sum)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub beam: Array2<f64>,
    pub delay_curves: Array2<f64>,
}

impl CorrelationReport {
    pub fn compute(delay_csi: &[CsiMatrix], geom: &ArrayGeometry) -> Result<Self> {
        Ok(Self {
            beam: beam_cross_correlation(delay_csi, geom)?,
            delay_curves: delay_tap_correlation(delay_csi)?,
        })
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.beam.nrows();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = self.beam.sum() - self.beam.diag().sum();
        total / (n * (n - 1)) as f64
    }

    /// (min, mean) cosine similarity over all antenna pairs.
    pub fn curve_similarity(&self) -> (f64, f64) {
        let n = self.delay_curves.nrows();
        let mut min = 1.0f64;
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                let c = cosine_similarity(
                    self.delay_curves.row(i).as_slice().unwrap_or(&[]),
                    self.delay_curves.row(j).as_slice().unwrap_or(&[]),
                );
                min = min.min(c);
                sum += c;
                pairs += 1;
            }
        }
        (min, if pairs == 0 { 1.0 } else { sum / pairs as f64 })
    }

    /// Long-format CSV: `kind,row,col,value` with kind `beam` (row/col are
    /// beam indices) or `delay` (row = antenna, col = tap lag).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,row,col,value\n");
        for ((r, c), v) in self.beam.indexed_iter() {
            let _ = writeln!(s, "beam,{r},{c},{v:.9}");
        }
        for ((r, c), v) in self.delay_curves.indexed_iter() {
            let _ = writeln!(s, "delay,{r},{c},{v:.9}");
        }
        s
    }
}
