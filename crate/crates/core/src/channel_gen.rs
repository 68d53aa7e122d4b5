//! Geometric multipath channels for a uniform planar array, and the binary
//! dataset container they are stored in.
//!
//! Each realization is a sum of plane waves: one optional line-of-sight ray
//! plus a cluster of scattered rays around a random mean direction, with an
//! exponential power-delay profile. Path delays are placed on the delay grid of
//! the pilot transform so that every realization is exactly supported on the
//! retained delay window.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::preprocess::{downsample_pilots, DelayTransform, PilotConfig};
use crate::seed::{derive_seed, rng_for};
use crate::{CsiMatrix, Error, Result};

/// Uniform planar array, elements flattened row-major over (vertical, horizontal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_horizontal: usize,
    pub n_vertical: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(n_horizontal: usize, n_vertical: usize, spacing: f64) -> Result<Self> {
        if n_horizontal == 0 || n_vertical == 0 {
            return Err(Error::config("array needs at least one element per axis"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::config("element spacing must be positive"));
        }
        Ok(Self {
            n_horizontal,
            n_vertical,
            spacing,
        })
    }

    /// 8×4 half-wavelength UPA.
    pub fn upa_8x4() -> Self {
        Self {
            n_horizontal: 8,
            n_vertical: 4,
            spacing: 0.5,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.n_horizontal * self.n_vertical
    }

    /// The sub-array made of the first `rows` horizontal rows.
    pub fn first_rows(&self, rows: usize) -> Result<Self> {
        if rows == 0 || rows > self.n_vertical {
            return Err(Error::config(format!(
                "cannot take {rows} rows of a {}-row array",
                self.n_vertical
            )));
        }
        Ok(Self {
            n_vertical: rows,
            ..*self
        })
    }
}

/// Array response for a plane wave from (`azimuth`, `elevation`).
pub fn steering_vector(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> Vec<Complex64> {
    let vert = elevation.sin();
    let horiz = elevation.cos() * azimuth.sin();
    let mut out = Vec::with_capacity(geom.n_antennas());
    for m in 0..geom.n_vertical {
        for n in 0..geom.n_horizontal {
            let phase = 2.0 * PI * geom.spacing * (m as f64 * vert + n as f64 * horiz);
            out.push(Complex64::from_polar(1.0, phase));
        }
    }
    out
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

/// `H[a, f] = Σ_p g_p · a_p[a] · exp(−j2π·f·Δf·τ_p)` over `n_f` subcarriers.
pub fn channel_from_paths(
    geom: &ArrayGeometry,
    paths: &[PathComponent],
    n_f: usize,
    delta_f: f64,
) -> CsiMatrix {
    let n_a = geom.n_antennas();
    let mut h = CsiMatrix::zeros((n_a, n_f));
    let mut phasor = vec![Complex64::new(0.0, 0.0); n_f];
    for path in paths {
        for (f, p) in phasor.iter_mut().enumerate() {
            *p = Complex64::from_polar(1.0, -2.0 * PI * f as f64 * delta_f * path.delay);
        }
        let steer = steering_vector(geom, path.azimuth, path.elevation);
        for (mut row, s) in h.outer_iter_mut().zip(&steer) {
            let coeff = path.gain * s;
            for (x, p) in row.iter_mut().zip(&phasor) {
                *x += coeff * p;
            }
        }
    }
    h
}

/// Statistical description of a propagation environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub num_paths: usize,
    /// Largest scattered-path delay, seconds.
    pub max_delay: f64,
    /// Power-delay profile decay rate, 1/seconds.
    pub delay_decay: f64,
    pub azimuth_spread: f64,
    pub elevation_spread: f64,
    /// Salt mixed into per-sample seeds so presets draw different streams.
    pub carrier_offset_seed: u64,
    pub line_of_sight: bool,
}

impl ScenarioParams {
    /// Short delay spread, few paths, wide angular spread.
    pub fn indoor() -> Self {
        Self {
            num_paths: 8,
            max_delay: 0.4e-6,
            delay_decay: 5.0e6,
            azimuth_spread: 0.5,
            elevation_spread: 0.2,
            carrier_offset_seed: 51,
            line_of_sight: true,
        }
    }

    /// Long delay spread, many paths, narrow clusters.
    pub fn outdoor() -> Self {
        Self {
            num_paths: 20,
            max_delay: 1.9e-6,
            delay_decay: 1.5e6,
            azimuth_spread: 0.15,
            elevation_spread: 0.05,
            carrier_offset_seed: 53,
            line_of_sight: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Indoor,
    Outdoor,
}

impl Scenario {
    pub fn params(self) -> ScenarioParams {
        match self {
            Scenario::Indoor => ScenarioParams::indoor(),
            Scenario::Outdoor => ScenarioParams::outdoor(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Indoor => "indoor",
            Scenario::Outdoor => "outdoor",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indoor" => Ok(Scenario::Indoor),
            "outdoor" => Ok(Scenario::Outdoor),
            other => Err(Error::config(format!(
                "unknown scenario {other:?} (expected indoor|outdoor)"
            ))),
        }
    }
}

/// Validated generator: geometry, scenario and the pilot/delay grid the
/// channels must fit into.
#[derive(Debug, Clone)]
pub struct ChannelGenerator {
    pub geom: ArrayGeometry,
    pub scen: ScenarioParams,
    pub pilots: PilotConfig,
    pub n_t: usize,
}

impl ChannelGenerator {
    pub fn new(
        geom: ArrayGeometry,
        scen: ScenarioParams,
        pilots: PilotConfig,
        n_t: usize,
    ) -> Result<Self> {
        if scen.num_paths == 0 {
            return Err(Error::config("scenario needs at least one path"));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(scen.max_delay)
            && finite_nonneg(scen.delay_decay)
            && finite_nonneg(scen.azimuth_spread)
            && finite_nonneg(scen.elevation_spread))
        {
            return Err(Error::config(
                "scenario delays, decay and spreads must be finite and non-negative",
            ));
        }
        if n_t == 0 || n_t > pilots.m_f {
            return Err(Error::config(format!(
                "n_t={n_t} must lie in 1..={}",
                pilots.m_f
            )));
        }
        let gen = Self {
            geom,
            scen,
            pilots,
            n_t,
        };
        let last_tap = gen.max_tap();
        if last_tap >= n_t {
            return Err(Error::config(format!(
                "max_delay {:.3e}s reaches delay tap {last_tap}, outside the {n_t}-tap window",
                scen.max_delay
            )));
        }
        Ok(gen)
    }

    fn max_tap(&self) -> usize {
        (self.scen.max_delay / self.pilots.delay_resolution()).round() as usize
    }

    /// Draws the path set for one realization.
    pub fn draw_paths(&self, seed: u64) -> Vec<PathComponent> {
        let mut rng = rng_for(seed, "paths", self.scen.carrier_offset_seed);
        let res = self.pilots.delay_resolution();
        let center_az = rng.random_range(-PI / 2.0..PI / 2.0);
        let center_el = rng.random_range(-PI / 6.0..PI / 6.0);
        let normal = |rng: &mut rand_chacha::ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);

        let mut paths = Vec::with_capacity(self.scen.num_paths);
        for p in 0..self.scen.num_paths {
            if p == 0 && self.scen.line_of_sight {
                let phase = rng.random_range(0.0..2.0 * PI);
                paths.push(PathComponent {
                    gain: Complex64::from_polar(1.0, phase),
                    delay: 0.0,
                    azimuth: center_az,
                    elevation: center_el,
                });
                continue;
            }
            let raw_delay = rng.random_range(0.0..=self.scen.max_delay);
            let delay = (raw_delay / res).round() * res;
            let amp = (-self.scen.delay_decay * delay / 2.0).exp() / 2f64.sqrt();
            let gain = Complex64::new(normal(&mut rng), normal(&mut rng)) * amp;
            let azimuth = center_az + self.scen.azimuth_spread * normal(&mut rng);
            let elevation = center_el + self.scen.elevation_spread * normal(&mut rng);
            paths.push(PathComponent {
                gain,
                delay,
                azimuth,
                elevation,
            });
        }

        let power: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
        if power > 0.0 {
            let scale = power.sqrt().recip();
            for p in &mut paths {
                p.gain *= scale;
            }
        }
        paths
    }

    /// Full-band CSI (`N_a × N_f`) for one realization.
    pub fn generate_channel(&self, seed: u64) -> CsiMatrix {
        let paths = self.draw_paths(seed);
        channel_from_paths(&self.geom, &paths, self.pilots.n_f, self.pilots.delta_f)
    }

    /// Seed of sample `index` under master seed `seed`.
    pub fn sample_seed(&self, seed: u64, index: u64) -> u64 {
        derive_seed(seed, "sample", index)
    }
}

/// Which axis the dataset columns live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Columns are subcarriers.
    Frequency,
    /// Columns are truncated delay taps.
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Splits {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Splits {
    /// 4:2:1 train/validation/test split, remainder to test.
    pub fn four_two_one(count: usize) -> Self {
        let train = count * 4 / 7;
        let val = count * 2 / 7;
        Self {
            train,
            val,
            test: count - train - val,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

pub const DATASET_MAGIC: &[u8; 8] = b"CSIDCA01";
pub const DATASET_VERSION: u32 = 1;
const PRECISION_F32: u8 = 1;

/// A set of equally sized complex CSI matrices stored at 32-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub n_a: usize,
    pub width: usize,
    pub domain: Domain,
    pub splits: Splits,
    samples: Vec<Array2<Complex32>>,
}

impl ChannelDataset {
    pub fn new(
        n_a: usize,
        width: usize,
        domain: Domain,
        samples: Vec<Array2<Complex32>>,
    ) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| s.dim() != (n_a, width)) {
            return Err(Error::shape(format!(
                "sample {:?} in a {n_a}x{width} dataset",
                bad.dim()
            )));
        }
        let splits = Splits::four_two_one(samples.len());
        Ok(Self {
            n_a,
            width,
            domain,
            splits,
            samples,
        })
    }

    pub fn from_f64(n_a: usize, width: usize, domain: Domain, samples: &[CsiMatrix]) -> Result<Self> {
        Self::new(
            n_a,
            width,
            domain,
            samples
                .iter()
                .map(|h| h.mapv(|c| Complex32::new(c.re as f32, c.im as f32)))
                .collect(),
        )
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        if splits.total() != self.samples.len() {
            return Err(Error::config(format!(
                "splits sum to {}, dataset holds {}",
                splits.total(),
                self.samples.len()
            )));
        }
        self.splits = splits;
        Ok(self)
    }

    /// `count` full-band realizations with per-sample seeds derived from `seed`.
    pub fn generate(gen: &ChannelGenerator, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("dataset count must be positive"));
        }
        let samples: Vec<_> = (0..count as u64)
            .map(|i| {
                gen.generate_channel(gen.sample_seed(seed, i))
                    .mapv(|c| Complex32::new(c.re as f32, c.im as f32))
            })
            .collect();
        Self::new(gen.geom.n_antennas(), gen.pilots.n_f, Domain::Frequency, samples)
    }

    /// Like [`ChannelDataset::generate`] but keeps only the pilot subcarriers.
    pub fn generate_pilot(gen: &ChannelGenerator, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("dataset count must be positive"));
        }
        let samples = (0..count as u64)
            .map(|i| {
                let full = gen.generate_channel(gen.sample_seed(seed, i));
                Ok(downsample_pilots(&full, &gen.pilots)?
                    .mapv(|c| Complex32::new(c.re as f32, c.im as f32)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(gen.geom.n_antennas(), gen.pilots.m_f, Domain::Frequency, samples)
    }

    /// Every sample as pilot-domain CSI (`N_a × M_f`). Full-band samples are
    /// downsampled, pilot-width samples pass through and delay-domain samples
    /// are zero-padded and transformed back.
    pub fn pilot_csi(&self, pilots: &PilotConfig) -> Result<Vec<CsiMatrix>> {
        match self.domain {
            Domain::Frequency if self.width == pilots.n_f => {
                self.samples().map(|h| downsample_pilots(&h, pilots)).collect()
            }
            Domain::Frequency if self.width == pilots.m_f => Ok(self.samples().collect()),
            Domain::Delay if self.width <= pilots.m_f => {
                let t = DelayTransform::new(pilots.m_f);
                self.samples().map(|h| t.to_pilot_freq(&h)).collect()
            }
            _ => Err(Error::config(format!(
                "{:?}-domain dataset of width {} does not fit N_f={} / M_f={}",
                self.domain, self.width, pilots.n_f, pilots.m_f
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn raw(&self, index: usize) -> &Array2<Complex32> {
        &self.samples[index]
    }

    /// Sample `index` widened to 64-bit.
    pub fn sample(&self, index: usize) -> CsiMatrix {
        self.samples[index].mapv(|c| Complex64::new(f64::from(c.re), f64::from(c.im)))
    }

    pub fn samples(&self) -> impl Iterator<Item = CsiMatrix> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.splits.train
    }

    pub fn val_range(&self) -> std::ops::Range<usize> {
        self.splits.train..self.splits.train + self.splits.val
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.splits.train + self.splits.val..self.len()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&to_u32(self.n_a)?.to_le_bytes())?;
        w.write_all(&to_u32(self.width)?.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&[PRECISION_F32])?;
        w.write_all(&[match self.domain {
            Domain::Frequency => 0,
            Domain::Delay => 1,
        }])?;
        for part in [self.splits.train, self.splits.val, self.splits.test] {
            w.write_all(&(part as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.n_a * self.width * 8);
        for sample in &self.samples {
            buf.clear();
            for c in sample.iter() {
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a CSI dataset (bad magic)".into()));
        }
        let version = read_u32(&mut r, "version")?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "dataset version {version}, expected {DATASET_VERSION}"
            )));
        }
        let n_a = read_u32(&mut r, "N_a")? as usize;
        let width = read_u32(&mut r, "width")? as usize;
        let count = read_u64(&mut r, "count")? as usize;
        let mut tags = [0u8; 2];
        read_exact(&mut r, &mut tags, "precision/domain tags")?;
        if tags[0] != PRECISION_F32 {
            return Err(Error::Format(format!("unsupported precision tag {}", tags[0])));
        }
        let domain = match tags[1] {
            0 => Domain::Frequency,
            1 => Domain::Delay,
            t => return Err(Error::Format(format!("unknown domain tag {t}"))),
        };
        let splits = Splits {
            train: read_u64(&mut r, "train split")? as usize,
            val: read_u64(&mut r, "val split")? as usize,
            test: read_u64(&mut r, "test split")? as usize,
        };
        if splits.total() != count {
            return Err(Error::Format(format!(
                "splits sum to {} but header count is {count}",
                splits.total()
            )));
        }
        if n_a == 0 || width == 0 {
            return Err(Error::Format("zero-sized samples".into()));
        }

        let per_sample = n_a * width;
        let mut bytes = vec![0u8; per_sample * 8];
        let mut samples = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            read_exact(&mut r, &mut bytes, &format!("sample {i}"))?;
            let data: Vec<Complex32> = bytes
                .chunks_exact(8)
                .map(|c| {
                    Complex32::new(
                        f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                        f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                    )
                })
                .collect();
            samples.push(
                Array2::from_shape_vec((n_a, width), data)
                    .map_err(|e| Error::Format(e.to_string()))?,
            );
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after last sample".into()));
        }
        Ok(Self {
            n_a,
            width,
            domain,
            splits,
            samples,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}
