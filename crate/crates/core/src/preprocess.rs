//! Pilot sampling, delay-domain truncation, real/imaginary decomposition,
//! normalization and antenna-wise segmentation, plus the inverse maps used
//! when reconstructed segments are turned back into pilot-domain CSI.
//!
//! Delay transform convention: `F[j, k] = exp(+j·2π·j·k / M_f) / √M_f`, so a
//! path whose delay sits exactly on tap `d` of the pilot grid lands in column
//! `d` of `H̃·F`. `F` is unitary, so truncation statements are norm statements.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{CsiMatrix, Error, Result};

/// Real-valued matrix (antennas × delay taps).
pub type RealMatrix = Array2<f64>;

/// Uniform pilot placement over one subband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    pub n_f: usize,
    pub delta_f: f64,
    pub dr_f: usize,
    pub m_f: usize,
    /// Index of the first pilot subcarrier.
    pub offset: usize,
}

impl PilotConfig {
    /// Places pilots every `dr_f` subcarriers starting at subcarrier 0.
    pub fn new(n_f: usize, delta_f: f64, dr_f: usize) -> Result<Self> {
        Self::with_offset(n_f, delta_f, dr_f, 0)
    }

    pub fn with_offset(n_f: usize, delta_f: f64, dr_f: usize, offset: usize) -> Result<Self> {
        if dr_f == 0 || n_f == 0 || offset >= n_f {
            return Err(Error::config(format!(
                "pilot grid needs n_f > offset and dr_f > 0 (n_f={n_f}, dr_f={dr_f}, offset={offset})"
            )));
        }
        if !(delta_f > 0.0 && delta_f.is_finite()) {
            return Err(Error::config("subcarrier spacing must be positive"));
        }
        let m_f = (n_f - offset).div_ceil(dr_f);
        Ok(Self {
            n_f,
            delta_f,
            dr_f,
            m_f,
            offset,
        })
    }

    /// 1024 subcarriers at 15 kHz with a pilot every 12th subcarrier (86 pilots).
    pub fn standard() -> Self {
        Self::new(1024, 15e3, 12).expect("valid default pilot grid")
    }

    pub fn pilot_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m_f).map(move |j| self.offset + j * self.dr_f)
    }

    /// Width of one delay tap after the pilot-domain transform, in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m_f as f64 * self.dr_f as f64 * self.delta_f)
    }
}

/// Number of delay taps kept after the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationConfig {
    pub n_t: usize,
}

impl TruncationConfig {
    /// Checks `0 < n_t <= m_f` and that `n_t` survives `stages` halvings.
    pub fn validate(&self, m_f: usize, stages: usize) -> Result<()> {
        if self.n_t == 0 || self.n_t > m_f {
            return Err(Error::config(format!(
                "n_t={} must lie in 1..={m_f}",
                self.n_t
            )));
        }
        if stages >= usize::BITS as usize || !self.n_t.is_multiple_of(1usize << stages) {
            return Err(Error::config(format!(
                "n_t={} must be divisible by 2^{stages}",
                self.n_t
            )));
        }
        Ok(())
    }
}

/// Antenna counts allowed for a base number (3GPP port counts).
pub const VALID_BASE_NUMBERS: [usize; 6] = [1, 2, 4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub k: usize,
    pub n_a: usize,
}

impl SegmentationConfig {
    pub fn new(k: usize, n_a: usize) -> Result<Self> {
        if !VALID_BASE_NUMBERS.contains(&k) {
            return Err(Error::config(format!(
                "base number K={k} must be one of {VALID_BASE_NUMBERS:?}"
            )));
        }
        if n_a == 0 || !n_a.is_multiple_of(k) {
            return Err(Error::config(format!("K={k} does not divide N_a={n_a}")));
        }
        Ok(Self { k, n_a })
    }

    pub fn num_segments(&self) -> usize {
        self.n_a / self.k
    }
}

/// Unitary delay transform for one pilot count, with cached FFT plans.
#[derive(Clone)]
pub struct DelayTransform {
    m_f: usize,
    to_delay: Arc<dyn Fft<f64>>,
    to_freq: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for DelayTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayTransform").field("m_f", &self.m_f).finish()
    }
}

impl DelayTransform {
    pub fn new(m_f: usize) -> Self {
        let mut planner = FftPlanner::new();
        // rustfft's inverse uses exp(+j...), matching the delay convention above.
        let to_delay = planner.plan_fft_inverse(m_f);
        let to_freq = planner.plan_fft_forward(m_f);
        Self {
            m_f,
            to_delay,
            to_freq,
            scale: 1.0 / (m_f as f64).sqrt(),
        }
    }

    pub fn m_f(&self) -> usize {
        self.m_f
    }

    /// `(H̃·F)[:, 0..n_t]`.
    pub fn truncate(&self, h_pilot: &CsiMatrix, n_t: usize) -> Result<CsiMatrix> {
        if h_pilot.ncols() != self.m_f {
            return Err(Error::shape(format!(
                "pilot CSI has {} columns, transform expects {}",
                h_pilot.ncols(),
                self.m_f
            )));
        }
        if n_t == 0 || n_t > self.m_f {
            return Err(Error::config(format!(
                "n_t={n_t} must lie in 1..={}",
                self.m_f
            )));
        }
        let delay = self.full_delay(h_pilot);
        Ok(delay.slice(s![.., ..n_t]).to_owned())
    }

    /// `H̃·F` without truncation.
    pub fn full_delay(&self, h_pilot: &CsiMatrix) -> CsiMatrix {
        self.apply(h_pilot, &self.to_delay, self.m_f)
    }

    /// Zero-pads the delay taps to `m_f` columns and applies `Fᴴ`.
    pub fn to_pilot_freq(&self, h_hat: &CsiMatrix) -> Result<CsiMatrix> {
        if h_hat.ncols() > self.m_f {
            return Err(Error::shape(format!(
                "{} delay taps exceed pilot count {}",
                h_hat.ncols(),
                self.m_f
            )));
        }
        Ok(self.apply(h_hat, &self.to_freq, self.m_f))
    }

    fn apply(&self, input: &CsiMatrix, fft: &Arc<dyn Fft<f64>>, width: usize) -> CsiMatrix {
        let mut out = Array2::zeros((input.nrows(), width));
        let mut buf = vec![Complex64::new(0.0, 0.0); width];
        for (row_in, mut row_out) in input.outer_iter().zip(out.outer_iter_mut()) {
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (b, v) in buf.iter_mut().zip(row_in.iter()) {
                *b = *v;
            }
            fft.process(&mut buf);
            for (o, b) in row_out.iter_mut().zip(&buf) {
                *o = b * self.scale;
            }
        }
        out
    }
}

/// The unitary matrix `F` itself, `F[j, k] = exp(+j2πjk/m) / √m`.
pub fn unitary_dft_matrix(m: usize) -> CsiMatrix {
    let scale = 1.0 / (m as f64).sqrt();
    Array2::from_shape_fn((m, m), |(j, k)| {
        let phase = 2.0 * std::f64::consts::PI * ((j * k) % m) as f64 / m as f64;
        Complex64::from_polar(scale, phase)
    })
}

/// Keeps every `dr_f`-th subcarrier starting at the configured offset.
pub fn downsample_pilots(h_full: &CsiMatrix, cfg: &PilotConfig) -> Result<CsiMatrix> {
    if h_full.ncols() != cfg.n_f {
        return Err(Error::shape(format!(
            "full CSI has {} subcarriers, pilot grid expects {}",
            h_full.ncols(),
            cfg.n_f
        )));
    }
    let mut out = Array2::zeros((h_full.nrows(), cfg.m_f));
    for (j, sc) in cfg.pilot_indices().enumerate() {
        out.column_mut(j).assign(&h_full.column(sc));
    }
    Ok(out)
}

pub fn to_delay_truncated(h_pilot: &CsiMatrix, trunc: &TruncationConfig) -> Result<CsiMatrix> {
    DelayTransform::new(h_pilot.ncols()).truncate(h_pilot, trunc.n_t)
}

pub fn delay_to_pilot_freq(h_hat: &CsiMatrix, cfg: &PilotConfig) -> Result<CsiMatrix> {
    DelayTransform::new(cfg.m_f).to_pilot_freq(h_hat)
}

/// Fraction of `‖H̃F‖²` that falls in the first `n_t` delay taps.
pub fn delay_energy_fraction(transform: &DelayTransform, h_pilot: &CsiMatrix, n_t: usize) -> f64 {
    let delay = transform.full_delay(h_pilot);
    let total: f64 = delay.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return 1.0;
    }
    let kept: f64 = delay
        .slice(s![.., ..n_t.min(delay.ncols())])
        .iter()
        .map(|c| c.norm_sqr())
        .sum();
    kept / total
}

pub fn split_complex(h: &CsiMatrix) -> (RealMatrix, RealMatrix) {
    (h.mapv(|c| c.re), h.mapv(|c| c.im))
}

pub fn combine_complex(re: &RealMatrix, im: &RealMatrix) -> Result<CsiMatrix> {
    if re.dim() != im.dim() {
        return Err(Error::shape(format!(
            "real part {:?} vs imaginary part {:?}",
            re.dim(),
            im.dim()
        )));
    }
    let mut out = Array2::zeros(re.dim());
    ndarray::Zip::from(&mut out)
        .and(re)
        .and(im)
        .for_each(|o, &r, &i| *o = Complex64::new(r, i));
    Ok(out)
}

/// Splits rows into consecutive blocks of `K` antennas.
pub fn segment(h: &RealMatrix, cfg: &SegmentationConfig) -> Result<Vec<RealMatrix>> {
    if h.nrows() != cfg.n_a {
        return Err(Error::shape(format!(
            "matrix has {} rows, segmentation expects N_a={}",
            h.nrows(),
            cfg.n_a
        )));
    }
    if cfg.k == 0 || !cfg.n_a.is_multiple_of(cfg.k) {
        return Err(Error::config(format!(
            "K={} does not divide N_a={}",
            cfg.k, cfg.n_a
        )));
    }
    Ok(h.axis_chunks_iter(Axis(0), cfg.k)
        .map(|c| c.to_owned())
        .collect())
}

/// Stacks segments vertically in list order.
pub fn concatenate(parts: &[RealMatrix]) -> Result<RealMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("no segments to concatenate"))?;
    if let Some(bad) = parts.iter().find(|p| p.dim() != first.dim()) {
        return Err(Error::shape(format!(
            "segment {:?} does not match {:?}",
            bad.dim(),
            first.dim()
        )));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
}

/// Single global scale: the largest |real| or |imag| entry over a training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormScale {
    pub max_abs: f64,
}

impl NormScale {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a CsiMatrix>) -> Result<Self> {
        let mut max_abs = 0.0f64;
        let mut seen = false;
        for h in train {
            seen = true;
            for c in h.iter() {
                max_abs = max_abs.max(c.re.abs()).max(c.im.abs());
            }
        }
        if !seen {
            return Err(Error::Degenerate("empty training set".into()));
        }
        if !(max_abs > 0.0 && max_abs.is_finite()) {
            return Err(Error::Degenerate(
                "training set has no nonzero finite entries".into(),
            ));
        }
        Ok(Self { max_abs })
    }

    pub fn apply(&self, h: &CsiMatrix) -> CsiMatrix {
        h.mapv(|c| c / self.max_abs)
    }

    pub fn undo(&self, h: &CsiMatrix) -> CsiMatrix {
        h.mapv(|c| c * self.max_abs)
    }
}

/// One channel, ready for the network: the pilot-domain ground truth and the
/// normalized real segments followed by the normalized imaginary segments.
#[derive(Debug, Clone)]
pub struct PreparedChannel {
    pub pilot: CsiMatrix,
    pub segments: Vec<Vec<f32>>,
}

/// Shared preprocessing settings for turning pilot CSI into network inputs.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub transform: DelayTransform,
    pub n_t: usize,
    pub seg: SegmentationConfig,
    pub norm: NormScale,
}

impl Pipeline {
    pub fn prepare(&self, h_pilot: &CsiMatrix) -> Result<PreparedChannel> {
        let delay = self.transform.truncate(h_pilot, self.n_t)?;
        let normed = self.norm.apply(&delay);
        let (re, im) = split_complex(&normed);
        let mut segments = Vec::with_capacity(2 * self.seg.num_segments());
        for part in [re, im] {
            for seg in segment(&part, &self.seg)? {
                segments.push(seg.iter().map(|&v| v as f32).collect());
            }
        }
        Ok(PreparedChannel {
            pilot: h_pilot.clone(),
            segments,
        })
    }

    /// Inverse of [`Pipeline::prepare`]: segment estimates (real block then
    /// imaginary block) back to a pilot-domain CSI estimate.
    pub fn assemble(&self, estimates: &[Vec<f32>]) -> Result<CsiMatrix> {
        let n_seg = self.seg.num_segments();
        if estimates.len() != 2 * n_seg {
            return Err(Error::shape(format!(
                "expected {} segment estimates, got {}",
                2 * n_seg,
                estimates.len()
            )));
        }
        let to_matrix = |v: &Vec<f32>| -> Result<RealMatrix> {
            Array2::from_shape_vec(
                (self.seg.k, self.n_t),
                v.iter().map(|&x| f64::from(x)).collect(),
            )
            .map_err(|e| Error::shape(e.to_string()))
        };
        let re_parts = estimates[..n_seg]
            .iter()
            .map(to_matrix)
            .collect::<Result<Vec<_>>>()?;
        let im_parts = estimates[n_seg..]
            .iter()
            .map(to_matrix)
            .collect::<Result<Vec<_>>>()?;
        let delay = combine_complex(&concatenate(&re_parts)?, &concatenate(&im_parts)?)?;
        self.transform.to_pilot_freq(&self.norm.undo(&delay))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_csi(rows: usize, cols: usize, seed: u64) -> CsiMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn fro2(h: &CsiMatrix) -> f64 {
        h.iter().map(|c| c.norm_sqr()).sum()
    }

    #[test]
    fn default_pilot_grid() {
        let cfg = PilotConfig::standard();
        assert_eq!(cfg.m_f, 86);
        let idx: Vec<_> = cfg.pilot_indices().collect();
        assert_eq!(idx[0], 0);
        assert_eq!(idx[1], 12);
        assert_eq!(*idx.last().unwrap(), 1020);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_pilot_takes_column_zero() {
        let cfg = PilotConfig::new(12, 15e3, 12).unwrap();
        let h = random_csi(3, 12, 1);
        let p = downsample_pilots(&h, &cfg).unwrap();
        assert_eq!(p.dim(), (3, 1));
        assert_eq!(p.column(0), h.column(0));
    }

    #[test]
    fn downsampling_rejects_wrong_width() {
        let cfg = PilotConfig::new(24, 15e3, 12).unwrap();
        assert!(matches!(
            downsample_pilots(&random_csi(2, 12, 0), &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn flat_channel_stays_flat_and_lands_in_tap_zero() {
        let cfg = PilotConfig::standard();
        let h = Array2::from_elem((4, cfg.n_f), Complex64::new(1.0, 0.0));
        let p = downsample_pilots(&h, &cfg).unwrap();
        assert!(p.iter().all(|c| *c == Complex64::new(1.0, 0.0)));
        let d = to_delay_truncated(&p, &TruncationConfig { n_t: 32 }).unwrap();
        let total = fro2(&d);
        for row in d.outer_iter() {
            assert_relative_eq!(row[0].re, (cfg.m_f as f64).sqrt(), epsilon = 1e-9);
            for c in row.iter().skip(1) {
                assert!(c.norm_sqr() <= 1e-10 * total);
            }
        }
    }

    #[test]
    fn truncation_rejects_too_many_taps() {
        let p = random_csi(2, 8, 3);
        assert!(to_delay_truncated(&p, &TruncationConfig { n_t: 9 }).is_err());
    }

    #[test]
    fn dft_matrix_is_unitary() {
        for m in [4, 8, 86] {
            let f = unitary_dft_matrix(m);
            let fh = f.t().mapv(|c| c.conj());
            let prod = f.dot(&fh);
            for ((i, j), v) in prod.indexed_iter() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - Complex64::new(expect, 0.0)).norm() <= 1e-6);
            }
        }
    }

    #[test]
    fn fft_path_matches_matrix_product() {
        let m = 20;
        let h = random_csi(3, m, 9);
        let via_matrix = h.dot(&unitary_dft_matrix(m));
        let via_fft = DelayTransform::new(m).full_delay(&h);
        for (a, b) in via_matrix.iter().zip(via_fft.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_roundtrips_to_zero() {
        let cfg = PilotConfig::standard();
        let z = CsiMatrix::zeros((4, 32));
        let back = delay_to_pilot_freq(&z, &cfg).unwrap();
        assert_eq!(back.dim(), (4, 86));
        assert!(back.iter().all(|c| c.norm() == 0.0));
        let d = to_delay_truncated(&back, &TruncationConfig { n_t: 32 }).unwrap();
        assert!(d.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn segment_edge_cases() {
        let h = RealMatrix::from_shape_fn((32, 4), |(r, c)| (r * 4 + c) as f64);
        let whole = segment(&h, &SegmentationConfig::new(32, 32).unwrap()).unwrap();
        assert_eq!(whole, vec![h.clone()]);
        let rows = segment(&h, &SegmentationConfig::new(1, 32).unwrap()).unwrap();
        assert_eq!(rows.len(), 32);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.row(0), h.row(i));
        }
        assert!(SegmentationConfig::new(8, 12).is_err());
        assert!(SegmentationConfig::new(3, 9).is_err());
    }

    #[test]
    fn concatenate_stacks_in_order_and_checks_shapes() {
        let a = RealMatrix::from_elem((1, 3), 1.0);
        let b = RealMatrix::from_elem((1, 3), 2.0);
        let c = concatenate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.row(0), a.row(0));
        assert_eq!(c.row(1), b.row(0));
        assert!(concatenate(&[a, RealMatrix::zeros((2, 3))]).is_err());
        assert!(concatenate(&[]).is_err());
    }

    #[test]
    fn norm_scale_fit_apply_undo() {
        let mut h = random_csi(4, 6, 2).mapv(|c| c * 2.5);
        h[[1, 2]] = Complex64::new(-3.0, 0.5);
        let norm = NormScale::fit([&h]).unwrap();
        assert_eq!(norm.max_abs, 3.0);
        let n = norm.apply(&h);
        assert!(n.iter().all(|c| c.re.abs() <= 1.0 && c.im.abs() <= 1.0));
        let back = norm.undo(&n);
        for (a, b) in back.iter().zip(h.iter()) {
            assert!((a - b).norm() <= 1e-15);
        }
        assert!(NormScale::fit([&CsiMatrix::zeros((2, 2))]).is_err());
        assert!(NormScale::fit(std::iter::empty()).is_err());
    }

    #[test]
    fn pipeline_roundtrip_on_truncated_support() {
        let cfg = PilotConfig::standard();
        let transform = DelayTransform::new(cfg.m_f);
        // Build pilot CSI whose delay profile is confined to the first 16 taps.
        let delay = random_csi(8, 16, 5);
        let pilot = transform.to_pilot_freq(&delay).unwrap();
        let pipe = Pipeline {
            transform,
            n_t: 16,
            seg: SegmentationConfig::new(2, 8).unwrap(),
            norm: NormScale { max_abs: 1.3 },
        };
        let prepared = pipe.prepare(&pilot).unwrap();
        assert_eq!(prepared.segments.len(), 8);
        assert!(prepared.segments.iter().all(|s| s.len() == 32));
        let back = pipe.assemble(&prepared.segments).unwrap();
        let err: f64 = back
            .iter()
            .zip(pilot.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        // f32 storage of the segments bounds the roundtrip accuracy.
        assert!(err / fro2(&pilot) < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn segment_concatenate_is_identity(
                k_idx in 0usize..4,
                groups in 1usize..5,
                n_t in 1usize..10,
                seed in any::<u64>(),
            ) {
                let k = [1, 2, 4, 8][k_idx];
                let n_a = k * groups;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = RealMatrix::from_shape_fn((n_a, n_t), |_| rng.random::<f64>() - 0.5);
                let cfg = SegmentationConfig::new(k, n_a).unwrap();
                let parts = segment(&h, &cfg).unwrap();
                prop_assert_eq!(parts.len(), groups);
                prop_assert_eq!(concatenate(&parts).unwrap(), h);
            }

            #[test]
            fn split_combine_is_identity(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
                let h = random_csi(rows, cols, seed);
                let (re, im) = split_complex(&h);
                prop_assert_eq!(combine_complex(&re, &im).unwrap(), h);
            }

            #[test]
            fn truncation_roundtrip_and_norm(rows in 1usize..5, n_t in 1usize..20, seed in any::<u64>()) {
                let m_f = 20;
                let t = DelayTransform::new(m_f);
                let delay = random_csi(rows, n_t, seed);
                let pilot = t.to_pilot_freq(&delay).unwrap();
                let again = t.truncate(&pilot, n_t).unwrap();
                let err: f64 = again.iter().zip(delay.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
                prop_assert!(err.sqrt() <= 1e-5 * fro2(&delay).sqrt());

                // Truncating arbitrary pilot CSI never increases the norm.
                let any_pilot = random_csi(rows, m_f, seed ^ 0xabc);
                let cut = t.truncate(&any_pilot, n_t).unwrap();
                prop_assert!(fro2(&cut) <= fro2(&any_pilot) * (1.0 + 1e-12));
            }
        }
    }
}
