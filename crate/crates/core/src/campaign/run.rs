use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CampaignConfig, Method};
use super::stats::{correlation_analysis, summarize, BinningSettings, MethodCorrelation, MethodSummary};
use super::trials::{write_trials, TrialRecord, Verdict};
use crate::error::{Error, Result};
use crate::gradcam::{self, Grid};
use crate::model_io::{load_model, load_seed_set, Exclusion, SeedFailure, SeedImage};
use crate::network::Model;
use crate::rng::StreamKey;
use crate::sensitivity::{enumerate_rectangles, fuse, threshold_map, Fusion, RectRegion};
use crate::tensor::Tensor;
use crate::transforms::{apply_transform, random_rectangles, TransformSpec};

/// Class predicted for a follow-up and the resulting verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Judgement {
    pub pred_after: usize,
    pub verdict: Verdict,
}

/// Label-invariance check: positive iff the follow-up keeps the seed's class.
pub fn judge(model: &Model, seed: &SeedImage, follow_up: &Tensor) -> Result<Judgement> {
    let pred_after = model.classify(follow_up)?;
    Ok(Judgement {
        pred_after,
        verdict: if pred_after == seed.true_class {
            Verdict::Positive
        } else {
            Verdict::Negative
        },
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    /// Stage sums are CPU time across worker threads.
    pub gradcam_ms: f64,
    pub selection_ms: f64,
    pub trials_ms: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub accepted: usize,
    pub excluded: Vec<Exclusion>,
    pub load_failures: Vec<SeedFailure>,
    pub run_failures: Vec<SeedFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub engine_version: String,
    pub config: CampaignConfig,
    pub seeds: SeedSummary,
    pub total_trials: u64,
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_fdr: Option<f64>,
    pub binning: BinningSettings,
    pub correlation: Vec<MethodCorrelation>,
    pub timings: Timings,
}

impl CampaignReport {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn correlation_for(&self, method: Method) -> Option<&MethodCorrelation> {
        self.correlation.iter().find(|c| c.method == method)
    }

    /// Methods whose FDR exceeds the configured fail threshold.
    pub fn gate_violations(&self) -> Vec<Method> {
        let Some(limit) = self.config.fail_threshold else {
            return Vec::new();
        };
        self.methods
            .iter()
            .filter(|m| m.fdr.is_some_and(|f| f > limit))
            .map(|m| m.method)
            .collect()
    }
}

pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub records: Vec<TrialRecord>,
}

#[derive(Default)]
struct StageTimes {
    gradcam: Duration,
    selection: Duration,
    trials: Duration,
}

fn center_value(map: &Grid, rect: &RectRegion) -> f32 {
    let (r, c) = rect.center();
    map.get(r, c)
}

fn run_seed(model: &Model, seed: &SeedImage, cfg: &CampaignConfig) -> Result<(Vec<TrialRecord>, StageTimes)> {
    let mut times = StageTimes::default();
    let t0 = Instant::now();
    let fusions = cfg.fusions_needed();
    let needs_all = fusions.iter().any(|&f| f != Fusion::Best);
    let (prediction, heatmaps) = if needs_all {
        gradcam::heatmaps_with_prediction(model, &seed.pixels)?
    } else {
        let (p, h) = gradcam::best_class_heatmap(model, &seed.pixels)?;
        (p, vec![h])
    };
    times.gradcam = t0.elapsed();

    let t1 = Instant::now();
    let maps: Vec<(Fusion, Grid)> = fusions
        .iter()
        .map(|&f| Ok((f, fuse(&heatmaps, f, prediction.best_class)?)))
        .collect::<Result<_>>()?;
    let map_for = |f: Fusion| &maps.iter().find(|(g, _)| *g == f).expect("fusion computed").1;
    let [_, h, w] = model.input_shape();
    let mut candidates: Vec<(Method, Option<Vec<RectRegion>>)> = Vec::new();
    for &method in &cfg.methods {
        let rects = match method.fusion() {
            Some(f) => {
                let mask = threshold_map(map_for(f), cfg.threshold, f)?;
                let mut rects = enumerate_rectangles(&mask, cfg.rect_width, cfg.rect_height, cfg.stride)?;
                if let Some(cap) = cfg.max_candidates {
                    rects.truncate(cap);
                }
                Some(rects)
            }
            None => None,
        };
        candidates.push((method, rects));
    }
    times.selection = t1.elapsed();

    let t2 = Instant::now();
    let pred_before = prediction.best_class;
    let mut records = Vec::new();
    for (method, rects) in &candidates {
        let gradient_map = map_for(cfg.gradient_source(*method));
        for &kind in &cfg.transforms {
            let key = StreamKey::new(cfg.master_seed)
                .with_str(&seed.id)
                .with_str(method.as_str())
                .with_str(kind.as_str());
            let drawn;
            let rects = match rects {
                Some(r) => r,
                None => {
                    let mut rng = key.clone().with_str("regions").rng();
                    drawn = random_rectangles(h, w, cfg.rect_width, cfg.rect_height, cfg.baseline_samples, &mut rng)?;
                    &drawn
                }
            };
            let spec = TransformSpec {
                kind,
                params: cfg.transform_params.clone(),
            };
            for (idx, rect) in rects.iter().enumerate() {
                let mut rng = key.clone().with_u64(idx as u64).rng();
                let follow_up = apply_transform(&seed.pixels, rect, &spec, &mut rng)?;
                let j = judge(model, seed, &follow_up)?;
                records.push(TrialRecord {
                    seed_id: seed.id.clone(),
                    method: *method,
                    transform: kind,
                    rect: *rect,
                    center_gradient: center_value(gradient_map, rect),
                    pred_before,
                    pred_after: j.pred_after,
                    verdict: j.verdict,
                });
            }
        }
    }
    times.trials = t2.elapsed();
    Ok((records, times))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs every configured method on every accepted seed. `jobs` bounds the
/// worker threads (all available processors when `None`); the trial stream
/// is identical for any value.
pub fn run_campaign(cfg: &CampaignConfig, jobs: Option<usize>) -> Result<CampaignOutcome> {
    cfg.validate()?;
    let wall = Instant::now();
    let model = load_model(&cfg.model)?;
    let [_, h, w] = model.input_shape();
    if cfg.rect_width > w || cfg.rect_height > h {
        return Err(Error::Config(format!(
            "{}×{} rectangles do not fit {h}×{w} images",
            cfg.rect_height, cfg.rect_width
        )));
    }
    let seed_set = load_seed_set(&model, &cfg.seeds)?;
    let load_ms = ms(wall.elapsed());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let per_seed: Vec<(&SeedImage, Result<(Vec<TrialRecord>, StageTimes)>)> = pool.install(|| {
        seed_set
            .seeds
            .par_iter()
            .map(|s| (s, run_seed(&model, s, cfg)))
            .collect()
    });

    let mut records = Vec::new();
    let mut run_failures = Vec::new();
    let mut stage = StageTimes::default();
    for (seed, result) in per_seed {
        match result {
            Ok((mut recs, t)) => {
                records.append(&mut recs);
                stage.gradcam += t.gradcam;
                stage.selection += t.selection;
                stage.trials += t.trials;
            }
            Err(e) => {
                log::error!("seed {} failed: {e}", seed.id);
                run_failures.push(SeedFailure {
                    id: seed.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    let mut report = build_report(cfg, &records)?;
    report.seeds = SeedSummary {
        accepted: seed_set.seeds.len(),
        excluded: seed_set.excluded,
        load_failures: seed_set.failures,
        run_failures,
    };
    report.timings = Timings {
        load_ms,
        gradcam_ms: ms(stage.gradcam),
        selection_ms: ms(stage.selection),
        trials_ms: ms(stage.trials),
        wall_ms: ms(wall.elapsed()),
    };
    Ok(CampaignOutcome { report, records })
}

/// Aggregates a trial stream into a report. Seed bookkeeping and timings
/// are left empty.
pub fn build_report(cfg: &CampaignConfig, records: &[TrialRecord]) -> Result<CampaignReport> {
    let binning = BinningSettings {
        num_bins: cfg.num_bins,
        min_trials: cfg.min_bin_trials,
    };
    let methods = summarize(records, &cfg.methods, &cfg.transforms);
    let baseline_fdr = methods
        .iter()
        .find(|m| m.method == Method::BaselineRandom)
        .and_then(|m| m.fdr);
    Ok(CampaignReport {
        engine_version: crate::VERSION.to_string(),
        config: cfg.clone(),
        seeds: SeedSummary {
            accepted: 0,
            excluded: Vec::new(),
            load_failures: Vec::new(),
            run_failures: Vec::new(),
        },
        total_trials: records.len() as u64,
        methods,
        baseline_fdr,
        binning,
        correlation: correlation_analysis(records, &cfg.methods, binning)?,
        timings: Timings::default(),
    })
}

/// Checks that the report's aggregates are exactly what its trial stream
/// implies. Returns a description of every mismatch.
pub fn audit(report: &CampaignReport, records: &[TrialRecord]) -> Result<Vec<String>> {
    let recomputed = build_report(&report.config, records)?;
    let mut problems = Vec::new();
    if recomputed.total_trials != report.total_trials {
        problems.push(format!(
            "total_trials: report {} vs stream {}",
            report.total_trials, recomputed.total_trials
        ));
    }
    if recomputed.methods != report.methods {
        problems.push("per-method aggregates differ from the trial stream".into());
    }
    if recomputed.baseline_fdr != report.baseline_fdr {
        problems.push("baseline FDR differs from the trial stream".into());
    }
    if recomputed.correlation != report.correlation {
        problems.push("correlation section differs from the trial stream".into());
    }
    Ok(problems)
}

fn tmp_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!(".{name}.tmp"))
}

/// Writes `(name, bytes)` pairs into `dir` so that either all of them appear
/// or none does: everything is staged under temporary names, then renamed.
pub fn write_atomically(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (tmp_path(dir, name), dir.join(name)))
        .collect();
    let cleanup = || {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for ((name, bytes), (tmp, _)) in files.iter().zip(&staged) {
        if let Err(e) = fs::write(tmp, bytes) {
            cleanup();
            return Err(Error::io(dir.join(name), e));
        }
    }
    for (tmp, dst) in &staged {
        if let Err(e) = fs::rename(tmp, dst) {
            cleanup();
            return Err(Error::io(dst, e));
        }
    }
    Ok(())
}

pub fn bins_csv(report: &CampaignReport) -> Vec<u8> {
    let mut out = String::from("method,lo,hi,trials,negatives,fdr\n");
    for c in &report.correlation {
        for b in &c.bins {
            let fdr = b.fdr.map(|f| f.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", c.method, b.lo, b.hi, b.trials, b.negatives, fdr));
        }
    }
    out.into_bytes()
}

/// Persists `report.json`, `trials.csv` and `bins.csv` into `dir`.
pub fn write_outputs(outcome: &CampaignOutcome, dir: &Path) -> Result<()> {
    let mut trials = Vec::new();
    write_trials(&mut trials, &outcome.records)?;
    let mut report = serde_json::to_vec_pretty(&outcome.report).expect("report serializes");
    report.push(b'\n');
    write_atomically(
        dir,
        &[
            ("trials.csv", trials),
            ("bins.csv", bins_csv(&outcome.report)),
            ("report.json", report),
        ],
    )
}
