//! Whole runs driven by a [`RunConfig`]: dataset generation, preparation,
//! training with checkpoints, evaluation and analysis.

use std::path::Path;

use rand::Rng;

use crate::channel_gen::ChannelDataset;
use crate::config::RunConfig;
use crate::eval::{self, CorrelationReport, NmseResult};
use crate::nn::{Checkpoint, GradCheckReport};
use crate::preprocess::{DelayTransform, NormScale, Pipeline, PreparedChannel, SegmentationConfig};
use crate::scenet::Scenet;
use crate::seed::rng_for;
use crate::training::{self, CheckpointDir, TrainReport, TrainState, Validation};
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// `cfg.count` channels for `cfg`'s scenario, pilot subcarriers only, with
/// `cfg`'s split.
pub fn generate(cfg: &RunConfig) -> Result<ChannelDataset> {
    cfg.validate()?;
    let gen = cfg.generator()?;
    ChannelDataset::generate_pilot(&gen, cfg.count, cfg.data_seed())?.with_splits(cfg.splits(cfg.count)?)
}

/// A dataset turned into network inputs. The normalization is fitted on the
/// training split only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub pipeline: Pipeline,
    pub train_segments: Vec<Vec<f32>>,
    pub val: Vec<PreparedChannel>,
    pub test: Vec<PreparedChannel>,
}

pub fn prepare(cfg: &RunConfig, ds: &ChannelDataset) -> Result<PreparedData> {
    cfg.validate()?;
    if ds.n_a != cfg.n_antennas() {
        return Err(Error::config(format!(
            "dataset has {} antennas, config expects {}",
            ds.n_a,
            cfg.n_antennas()
        )));
    }
    let pilots = cfg.pilots()?;
    let all = ds.pilot_csi(&pilots)?;
    let transform = DelayTransform::new(pilots.m_f);
    let train_delay = all[ds.train_range()]
        .iter()
        .map(|h| transform.truncate(h, cfg.n_t))
        .collect::<Result<Vec<_>>>()?;
    let pipeline = Pipeline {
        transform,
        n_t: cfg.n_t,
        seg: SegmentationConfig::new(cfg.k, ds.n_a)?,
        norm: NormScale::fit(train_delay.iter())?,
    };
    let prep = |range: std::ops::Range<usize>| {
        all[range]
            .iter()
            .map(|h| pipeline.prepare(h))
            .collect::<Result<Vec<_>>>()
    };
    let train_segments = prep(ds.train_range())?
        .into_iter()
        .flat_map(|c| c.segments)
        .collect();
    let val = prep(ds.val_range())?;
    let test = prep(ds.test_range())?;
    Ok(PreparedData {
        pipeline,
        train_segments,
        val,
        test,
    })
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Scenet,
    pub state: TrainState,
    pub report: TrainReport,
    pub data: PreparedData,
}

/// Trains on `ds`. With `out`, writes `best.ckpt`, `last.ckpt`, the
/// canonical config and `report.csv` there; `resume` continues from
/// `out/last.ckpt`, keeping the report rows already written.
pub fn train(cfg: &RunConfig, ds: &ChannelDataset, out: Option<&Path>, resume: bool) -> Result<TrainOutcome> {
    let data = prepare(cfg, ds)?;
    let model = Scenet::new(cfg.scenet_config())?;
    let tcfg = cfg.train_config();
    tcfg.validate(cfg.stages, data.train_segments.len())?;
    let arch = model.config().canonical();
    let norm = data.pipeline.norm.max_abs;

    let mut earlier_rows = Vec::new();
    let mut state = match (out, resume) {
        (Some(dir), true) => {
            let (state, saved_norm) = training::resume_from_dir(dir, &arch)?;
            if saved_norm != norm {
                return Err(Error::config("checkpoint was trained on a different dataset"));
            }
            if let Ok(text) = std::fs::read_to_string(dir.join(REPORT_FILE)) {
                earlier_rows = report_rows(&text, state.epoch);
            }
            state
        }
        (None, true) => return Err(Error::config("resuming needs an output directory")),
        _ => TrainState::fresh(&model, &tcfg),
    };
    let checkpoints = out.map(|dir| CheckpointDir {
        dir: dir.to_path_buf(),
        norm_scale: norm,
    });
    let report = training::train(
        &model,
        &mut state,
        &data.train_segments,
        &Validation {
            channels: &data.val,
            pipeline: &data.pipeline,
        },
        &tcfg,
        checkpoints.as_ref(),
    )?;
    if let Some(dir) = out {
        std::fs::write(dir.join(CONFIG_FILE), cfg.canonical())?;
        let csv = report.to_csv(&cfg.short_hash(), cfg.stages);
        let mut lines = csv.lines();
        let mut text = String::new();
        for line in lines.by_ref().take(2) {
            text.push_str(line);
            text.push('\n');
        }
        for line in earlier_rows.iter().map(String::as_str).chain(lines) {
            text.push_str(line);
            text.push('\n');
        }
        std::fs::write(dir.join(REPORT_FILE), text)?;
    }
    Ok(TrainOutcome {
        model,
        state,
        report,
        data,
    })
}

/// Data rows of an existing report for epochs `1..=upto`.
fn report_rows(text: &str, upto: usize) -> Vec<String> {
    text.lines()
        .skip(2)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|e| e.parse::<usize>().ok())
                .is_some_and(|e| e <= upto)
        })
        .map(str::to_string)
        .collect()
}

/// Loads a checkpoint for `cfg`'s architecture and scores every sample of
/// `ds` at every rate.
pub fn evaluate_checkpoint(cfg: &RunConfig, ckpt: &Path, ds: &ChannelDataset) -> Result<NmseResult> {
    cfg.validate()?;
    let model = Scenet::new(cfg.scenet_config())?;
    let ck = Checkpoint::load(ckpt, Some(&model.config().canonical()))?;
    evaluate_params(cfg, &model, &ck.params, ck.norm_scale, ds)
}

/// Scores `params` on every sample of `ds`; `K` must divide the dataset's
/// antenna count, which may differ from the training array.
pub fn evaluate_params(
    cfg: &RunConfig,
    model: &Scenet,
    params: &[f32],
    norm_scale: f64,
    ds: &ChannelDataset,
) -> Result<NmseResult> {
    let pilots = cfg.pilots()?;
    let pipeline = Pipeline {
        transform: DelayTransform::new(pilots.m_f),
        n_t: cfg.n_t,
        seg: SegmentationConfig::new(cfg.k, ds.n_a)?,
        norm: NormScale { max_abs: norm_scale },
    };
    let truth = ds.pilot_csi(&pilots)?;
    eval::evaluate(model, params, &pipeline, &truth, &cfg.weights, cfg.scenario.name())
}

/// Beam and delay-lag statistics of every sample in `ds`.
pub fn analyze(cfg: &RunConfig, ds: &ChannelDataset) -> Result<CorrelationReport> {
    cfg.validate()?;
    if ds.n_a != cfg.n_antennas() {
        return Err(Error::config(format!(
            "dataset has {} antennas, config geometry has {}",
            ds.n_a,
            cfg.n_antennas()
        )));
    }
    let pilots = cfg.pilots()?;
    let transform = DelayTransform::new(pilots.m_f);
    let delay = ds
        .pilot_csi(&pilots)?
        .iter()
        .map(|h| transform.truncate(h, cfg.n_t))
        .collect::<Result<Vec<_>>>()?;
    CorrelationReport::compute(&delay, &cfg.geometry()?)
}

/// End-to-end gradient check of `cfg`'s model at seeded parameters (biases
/// made nonzero) on one seeded segment.
pub fn gradcheck(cfg: &RunConfig) -> Result<GradCheckReport> {
    cfg.validate()?;
    let model = Scenet::new(cfg.scenet_config())?;
    let mut params = model.init_params(cfg.seed);
    let mut rng = rng_for(cfg.seed, "gradcheck", 0);
    for p in params.iter_mut().filter(|p| **p == 0.0) {
        *p = rng.random_range(-0.1..0.1);
    }
    let segment: Vec<f32> = (0..model.config().segment_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    training::grad_check_model(&model, &params, &segment, &cfg.weights, cfg.gradcheck_eps)
}
