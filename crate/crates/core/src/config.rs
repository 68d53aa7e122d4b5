//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, unknown or repeated keys are
//! errors. [`RunConfig::canonical`] prints every key in a fixed order and
//! parses back to the same value; its hash tags every output of a run.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::channel_gen::{ArrayGeometry, ChannelGenerator, Scenario, Splits};
use crate::preprocess::PilotConfig;
use crate::scenet::ScenetConfig;
use crate::seed::{derive_seed, text_hash};
use crate::training::{default_rate_weights, LossKind, TrainConfig};
use crate::{Error, Result};

pub const KEYS: &[&str] = &[
    "seed",
    "scenario",
    "n_h",
    "n_v",
    "spacing",
    "n_f",
    "delta_f",
    "dr_f",
    "pilot_offset",
    "n_t",
    "k",
    "s",
    "dense",
    "refine_blocks",
    "slope",
    "epochs",
    "batch_size",
    "lr",
    "lr_after",
    "lr_switch_epoch",
    "weights",
    "loss",
    "count",
    "train",
    "val",
    "gradcheck_eps",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: Scenario,
    pub n_h: usize,
    pub n_v: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub n_f: usize,
    pub delta_f: f64,
    pub dr_f: usize,
    pub pilot_offset: usize,
    pub n_t: usize,
    pub k: usize,
    pub stages: usize,
    pub dense: bool,
    pub refine_blocks: usize,
    pub slope: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_after: f64,
    pub lr_switch_epoch: usize,
    pub weights: Vec<f64>,
    pub loss: LossKind,
    /// Samples generated by `gen`.
    pub count: usize,
    /// Training / validation sample counts; `None` means a 4:2:1 split.
    pub train: Option<usize>,
    pub val: Option<usize>,
    pub gradcheck_eps: f64,
}

impl Default for RunConfig {
    /// The full 8×4 array handled as a single `K = 32` segment, the standard pilot grid
    /// and the full-length training schedule.
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            scenario: Scenario::Indoor,
            n_h: 8,
            n_v: 4,
            spacing: 0.5,
            n_f: 1024,
            delta_f: 15e3,
            dr_f: 12,
            pilot_offset: 0,
            n_t: 32,
            k: 32,
            stages: 4,
            dense: false,
            refine_blocks: 5,
            slope: 0.3,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_after: t.lr_after,
            lr_switch_epoch: t.lr_switch_epoch,
            weights: default_rate_weights(),
            loss: t.loss,
            count: 7000,
            train: None,
            val: None,
            gradcheck_eps: 1e-4,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true|false, got {value:?}"))),
    }
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn show_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |n| n.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
            seen.push(key);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "scenario" => self.scenario = value.parse()?,
            "n_h" => self.n_h = parse_num(key, value)?,
            "n_v" => self.n_v = parse_num(key, value)?,
            "spacing" => self.spacing = parse_num(key, value)?,
            "n_f" => self.n_f = parse_num(key, value)?,
            "delta_f" => self.delta_f = parse_num(key, value)?,
            "dr_f" => self.dr_f = parse_num(key, value)?,
            "pilot_offset" => self.pilot_offset = parse_num(key, value)?,
            "n_t" => self.n_t = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "s" => self.stages = parse_num(key, value)?,
            "dense" => self.dense = parse_bool(key, value)?,
            "refine_blocks" => self.refine_blocks = parse_num(key, value)?,
            "slope" => self.slope = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "lr_after" => self.lr_after = parse_num(key, value)?,
            "lr_switch_epoch" => self.lr_switch_epoch = parse_num(key, value)?,
            "weights" => {
                self.weights = value
                    .split(',')
                    .map(|w| parse_weight(w.trim()))
                    .collect::<Result<_>>()?
            }
            "loss" => self.loss = value.parse()?,
            "count" => self.count = parse_num(key, value)?,
            "train" => self.train = parse_auto(key, value)?,
            "val" => self.val = parse_auto(key, value)?,
            "gradcheck_eps" => self.gradcheck_eps = parse_num(key, value)?,
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Every key in [`KEYS`] order; parses back to an equal config.
    pub fn canonical(&self) -> String {
        let weights: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        let values = [
            self.seed.to_string(),
            self.scenario.name().to_string(),
            self.n_h.to_string(),
            self.n_v.to_string(),
            self.spacing.to_string(),
            self.n_f.to_string(),
            self.delta_f.to_string(),
            self.dr_f.to_string(),
            self.pilot_offset.to_string(),
            self.n_t.to_string(),
            self.k.to_string(),
            self.stages.to_string(),
            self.dense.to_string(),
            self.refine_blocks.to_string(),
            self.slope.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.lr.to_string(),
            self.lr_after.to_string(),
            self.lr_switch_epoch.to_string(),
            weights.join(","),
            self.loss.name().to_string(),
            self.count.to_string(),
            show_auto(self.train),
            show_auto(self.val),
            self.gradcheck_eps.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn hash(&self) -> String {
        text_hash(&self.canonical())
    }

    /// Short form of [`RunConfig::hash`] used in report headers.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn n_antennas(&self) -> usize {
        self.n_h * self.n_v
    }

    /// Cross-field checks; run before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        let n_a = self.n_antennas();
        if n_a == 0 {
            return Err(Error::config("array needs at least one antenna"));
        }
        if self.k == 0 || !n_a.is_multiple_of(self.k) {
            return Err(Error::config(format!("K={} does not divide N_a={n_a}", self.k)));
        }
        self.scenet_config().validate()?;
        let pilots = self.pilots()?;
        if self.n_t > pilots.m_f {
            return Err(Error::config(format!(
                "N_t={} exceeds the {} pilot subcarriers",
                self.n_t, pilots.m_f
            )));
        }
        self.geometry()?;
        if self.weights.len() != self.stages {
            return Err(Error::config(format!(
                "{} rate weights for S={}",
                self.weights.len(),
                self.stages
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::config(format!(
                "rate weights must be non-negative and sum to 1 (sum {sum})"
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr_after > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.count == 0 {
            return Err(Error::config("count must be positive"));
        }
        if self.gradcheck_eps.is_nan() || self.gradcheck_eps <= 0.0 {
            return Err(Error::config("gradcheck_eps must be positive"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.n_h, self.n_v, self.spacing)
    }

    pub fn pilots(&self) -> Result<PilotConfig> {
        PilotConfig::with_offset(self.n_f, self.delta_f, self.dr_f, self.pilot_offset)
    }

    pub fn scenet_config(&self) -> ScenetConfig {
        ScenetConfig {
            stages: self.stages,
            k: self.k,
            n_t: self.n_t,
            dense: self.dense,
            refine_blocks: self.refine_blocks,
            slope: self.slope,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_after: self.lr_after,
            lr_switch_epoch: self.lr_switch_epoch,
            weights: self.weights.clone(),
            seed: self.seed,
            loss: self.loss,
        }
    }

    pub fn generator(&self) -> Result<ChannelGenerator> {
        ChannelGenerator::new(self.geometry()?, self.scenario.params(), self.pilots()?, self.n_t)
    }

    /// Seed the dataset draws from.
    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, "data", 0)
    }

    /// Split of a dataset of `total` samples.
    pub fn splits(&self, total: usize) -> Result<Splits> {
        let auto = Splits::four_two_one(total);
        let train = self.train.unwrap_or(auto.train);
        let val = self.val.unwrap_or(if self.train.is_some() {
            total.saturating_sub(train) / 2
        } else {
            auto.val
        });
        if train == 0 || val == 0 || train + val > total {
            return Err(Error::config(format!(
                "train={train} / val={val} do not fit {total} samples"
            )));
        }
        Ok(Splits {
            train,
            val,
            test: total - train - val,
        })
    }
}

fn parse_weight(w: &str) -> Result<f64> {
    match w.split_once('/') {
        Some((a, b)) => {
            let a: f64 = parse_num("weights", a.trim())?;
            let b: f64 = parse_num("weights", b.trim())?;
            Ok(a / b)
        }
        None => parse_num("weights", w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
        assert_eq!(c.scenet_config().k, 32);
        assert_eq!(c.pilots().unwrap().m_f, 86);
    }

    #[test]
    fn comments_blank_lines_and_fractions() {
        let c = RunConfig::parse(
            "# desk run\n\nk = 2 # base number\nn_v=1\nweights = 30/39, 6/39, 2/39, 1/39\n",
        )
        .unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.n_antennas(), 8);
        assert!((c.weights[0] - 30.0 / 39.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_duplicate_and_malformed_lines_fail() {
        for text in ["bogus = 1", "k = 2\nk = 4", "k 2", "k = two", "dense = maybe", "scenario = lab"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn validation_rejects_bad_divisibility() {
        let mut c = RunConfig { k: 3, ..RunConfig::default() };
        assert!(c.validate().is_err());
        c.k = 2;
        c.n_t = 24;
        assert!(c.validate().is_err());
        c.n_t = 32;
        c.weights = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        c.weights = default_rate_weights();
        c.validate().unwrap();
    }

    #[test]
    fn splits_default_and_explicit() {
        let c = RunConfig::default();
        assert_eq!(c.splits(7000).unwrap(), Splits { train: 4000, val: 2000, test: 1000 });
        let c = RunConfig { train: Some(2000), val: Some(500), ..RunConfig::default() };
        assert_eq!(c.splits(2500).unwrap(), Splits { train: 2000, val: 500, test: 0 });
        assert!(c.splits(2400).is_err());
    }

    #[test]
    fn hash_tracks_every_key() {
        let base = RunConfig::default();
        let mut other = base.clone();
        other.lr_switch_epoch += 1;
        assert_ne!(base.hash(), other.hash());
        assert_eq!(base.hash(), RunConfig::default().hash());
    }

    proptest! {
        #[test]
        fn canonical_roundtrip(
            seed in any::<u64>(),
            k in 1usize..64,
            s in 1usize..6,
            lr in 1e-6f64..1.0,
            slope in 0.01f64..0.99,
            dense in any::<bool>(),
            train in proptest::option::of(1usize..10_000),
        ) {
            let c = RunConfig { seed, k, stages: s, lr, slope, dense, train, ..RunConfig::default() };
            prop_assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
        }

        #[test]
        fn k_must_divide_antennas(n_h in 1usize..9, n_v in 1usize..5, k in 1usize..40) {
            let c = RunConfig { n_h, n_v, k, ..RunConfig::default() };
            let ok = c.validate().is_ok();
            prop_assert_eq!(ok, (n_h * n_v) % k == 0);
        }
    }
}
