//! Seeded Monte-Carlo sweeps over the joint pipeline
//! channel → RIS search → cascade → PMI selection → rate.
//!
//! Each trial draws its own channel from `derive(seed, [trial])`, so results
//! do not depend on how trials are scheduled across threads. Aggregation runs
//! in trial order. Nothing here touches the filesystem; callers persist the
//! strings produced by [`render_csv`], [`render_rows_json`] and
//! [`render_traces_jsonl`].

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{band_average, cascade_all, generate_channels, path_loss, ChannelDims, ChannelParams, CascadeBasis, PathLossParams};
use crate::codebook::{build_beam_grid, BeamGrid, MAX_LAYERS};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::link::link_metrics;
use crate::ris::{MAX_BITS, MIN_BITS};
use crate::risopt::{mca_optimize_with_basis, McaParams, OpKind, TraceRecord, MAX_CROSSED_ELEMENTS};
use crate::seed;
use crate::selector::{select_conventional, select_proposed, CophaseSource, Counters, CsiReport, SelectionOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Proposed,
    Conventional,
}

impl SelectorKind {
    pub fn label(self) -> &'static str {
        match self {
            SelectorKind::Proposed => "proposed",
            SelectorKind::Conventional => "conventional",
        }
    }
}

/// Selector set run by a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorChoice {
    Proposed,
    Conventional,
    #[default]
    Both,
}

impl SelectorChoice {
    pub fn kinds(self) -> Vec<SelectorKind> {
        match self {
            SelectorChoice::Proposed => vec![SelectorKind::Proposed],
            SelectorChoice::Conventional => vec![SelectorKind::Conventional],
            SelectorChoice::Both => vec![SelectorKind::Proposed, SelectorKind::Conventional],
        }
    }
}

/// OP set run by a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Lambda,
    Effrank,
    #[default]
    Both,
}

impl MetricChoice {
    pub fn kinds(self) -> Vec<OpKind> {
        match self {
            MetricChoice::Lambda => vec![OpKind::LambdaBased],
            MetricChoice::Effrank => vec![OpKind::EffectiveRank],
            MetricChoice::Both => vec![OpKind::LambdaBased, OpKind::EffectiveRank],
        }
    }
}

/// How the rate of a trial is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateEvaluation {
    /// Mean over subbands of the rate on `F_t` with that subband's precoder.
    #[default]
    SubbandAverage,
    /// Mean over subband precoders of the rate on the wideband `F`.
    Wideband,
}

/// Meaning of the values in `snr_grid_db`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// Average receive SNR `ρ̄` after path loss.
    #[default]
    Average,
    /// Transmit SNR `P_T/σ²`; `ρ̄` then follows from the path-loss geometry.
    Transmit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub n_t: usize,
    pub n_r: usize,
    pub n1: usize,
    pub n2: usize,
    pub o1: usize,
    pub o2: usize,
    pub n_ris_x: usize,
    pub n_ris_y: usize,
    pub bits: u8,
    pub amplitude: f64,
    pub layer: usize,
    pub n3: usize,
    pub snr_grid_db: Vec<f64>,
    pub snr_reference: SnrReference,
    pub trials: usize,
    pub t_random: usize,
    pub n_ris_new: usize,
    pub metric_kind: MetricChoice,
    pub selector_kind: SelectorChoice,
    pub cophase_source: CophaseSource,
    pub rate_evaluation: RateEvaluation,
    /// Scale the cascade by `1/√N_RIS` so a random-phase surface has unit
    /// average power per entry.
    pub normalize_cascade: bool,
    pub channel: ChannelParams,
    /// Defaults to the reference geometry for this RIS size.
    pub path_loss: Option<PathLossParams>,
    pub record_traces: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::mimo_4x4(64)
    }
}

impl ExperimentConfig {
    /// 4×4, four layers, 4-bit RIS with `n_ris` elements on a square grid.
    pub fn mimo_4x4(n_ris: usize) -> Self {
        let side = (n_ris as f64).sqrt().round() as usize;
        ExperimentConfig {
            name: format!("4x4-nris{n_ris}"),
            n_t: 4,
            n_r: 4,
            n1: 2,
            n2: 1,
            o1: 4,
            o2: 1,
            n_ris_x: side,
            n_ris_y: n_ris / side.max(1),
            bits: 4,
            amplitude: 1.0,
            layer: 4,
            n3: 8,
            snr_grid_db: (0..9).map(|i| -10.0 + 5.0 * i as f64).collect(),
            snr_reference: SnrReference::Average,
            trials: 200,
            t_random: 200,
            n_ris_new: 6,
            metric_kind: MetricChoice::Both,
            selector_kind: SelectorChoice::Both,
            cophase_source: CophaseSource::PerSubband,
            rate_evaluation: RateEvaluation::SubbandAverage,
            normalize_cascade: true,
            channel: ChannelParams::default(),
            path_loss: None,
            record_traces: false,
            seed: 2025,
        }
    }

    /// 2×2, two layers, 16-element RIS.
    pub fn mimo_2x2() -> Self {
        ExperimentConfig {
            name: "2x2-nris16".into(),
            n_t: 2,
            n_r: 2,
            n1: 1,
            n2: 1,
            o1: 1,
            o2: 1,
            n_ris_x: 4,
            n_ris_y: 4,
            layer: 2,
            ..ExperimentConfig::mimo_4x4(16)
        }
    }

    pub fn n_ris(&self) -> usize {
        self.n_ris_x * self.n_ris_y
    }

    pub fn dims(&self) -> ChannelDims {
        ChannelDims { n_ris_x: self.n_ris_x, n_ris_y: self.n_ris_y, n1: self.n1, n2: self.n2, n_r: self.n_r, n3: self.n3 }
    }

    pub fn path_loss_params(&self) -> PathLossParams {
        self.path_loss.clone().unwrap_or_else(|| PathLossParams::reference(self.n_ris()))
    }

    pub fn mca_params(&self) -> McaParams {
        McaParams {
            t_random: self.t_random,
            n_ris_new: self.n_ris_new,
            bits: self.bits,
            amplitude: self.amplitude,
            record_trace: self.record_traces,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let sizes = [self.n_t, self.n_r, self.n1, self.n2, self.o1, self.o2, self.n_ris_x, self.n_ris_y, self.n3];
        if sizes.contains(&0) {
            return bad("antenna, codebook, RIS and subband sizes must all be ≥ 1".into());
        }
        if self.n_t != 2 * self.n1 * self.n2 {
            return bad(format!("n_t = {} must equal 2·n1·n2 = {}", self.n_t, 2 * self.n1 * self.n2));
        }
        let max_layer = MAX_LAYERS.min(self.n_t).min(self.n_r);
        if self.layer == 0 || self.layer > max_layer {
            return bad(format!("layer {} outside 1..={max_layer}", self.layer));
        }
        if !(MIN_BITS..=MAX_BITS).contains(&self.bits) {
            return bad(format!("bits {} outside {MIN_BITS}..={MAX_BITS}", self.bits));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return bad(format!("amplitude {} outside (0, 1]", self.amplitude));
        }
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        if self.t_random < 2 {
            return bad(format!("t_random must be ≥ 2, got {}", self.t_random));
        }
        if self.n_ris_new > self.n_ris().min(MAX_CROSSED_ELEMENTS) {
            return bad(format!(
                "n_ris_new {} exceeds min(N_RIS = {}, {MAX_CROSSED_ELEMENTS})",
                self.n_ris_new,
                self.n_ris()
            ));
        }
        if let Some(x) = self.snr_grid_db.iter().find(|x| !x.is_finite()) {
            return bad(format!("non-finite SNR grid value {x}"));
        }
        self.channel.validate()?;
        let pl = self.path_loss_params();
        pl.validate()?;
        if pl.n_ris != self.n_ris() {
            return bad(format!("path_loss.n_ris = {} but the RIS has {} elements", pl.n_ris, self.n_ris()));
        }
        Ok(())
    }

    /// Linear `ρ̄` for a grid value.
    pub fn average_snr(&self, snr_db: f64) -> Result<f64> {
        let lin = 10f64.powf(snr_db / 10.0);
        match self.snr_reference {
            SnrReference::Average => Ok(lin),
            SnrReference::Transmit => Ok(lin / (self.n_t as f64 * path_loss(&self.path_loss_params())?)),
        }
    }
}

/// Per-trial measurement for one (metric, selector, SNR) point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSample {
    pub rate: f64,
    /// Mean over subbands; `None` when ZF was undefined on some subband.
    pub layer_snr: Option<Vec<f64>>,
    pub counters: Counters,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricOutcome {
    pub kind: OpKind,
    /// OP of the configuration the search settled on.
    pub op: f64,
    pub ris_indices: Vec<u32>,
    pub trace: Vec<TraceRecord>,
    /// Indexed `[selector][snr]` in the order of [`SweepPlan`].
    pub samples: Vec<Vec<PointSample>>,
    pub reports: Vec<CsiReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub metrics: Vec<MetricOutcome>,
}

/// Grid of (metric, selector, SNR) points covered by a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub metrics: Vec<OpKind>,
    pub selectors: Vec<SelectorKind>,
    pub snr_db: Vec<f64>,
    pub avg_snr: Vec<f64>,
}

impl SweepPlan {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(SweepPlan {
            metrics: cfg.metric_kind.kinds(),
            selectors: cfg.selector_kind.kinds(),
            snr_db: cfg.snr_grid_db.clone(),
            avg_snr: cfg.snr_grid_db.iter().map(|&s| cfg.average_snr(s)).collect::<Result<_>>()?,
        })
    }
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    seed::derive(master, &[trial as u64])
}

fn measure(
    cfg: &ExperimentConfig,
    grid: &BeamGrid,
    report: &CsiReport,
    wideband: &ComplexMatrix,
    subbands: &[ComplexMatrix],
    avg_snr: f64,
) -> Result<PointSample> {
    let precoders = report.precoders(grid)?;
    let n = subbands.len() as f64;
    let mut rate = 0.0;
    let mut layer_snr = Some(vec![0.0; report.rank]);
    for (f_t, w) in subbands.iter().zip(&precoders) {
        let f_eval = match cfg.rate_evaluation {
            RateEvaluation::SubbandAverage => f_t,
            RateEvaluation::Wideband => wideband,
        };
        let m = link_metrics(f_eval, &w.matrix, avg_snr)?;
        rate += m.rate_bps_hz / n;
        layer_snr = match (layer_snr, m.per_layer_snr) {
            (Some(mut acc), Some(s)) => {
                acc.iter_mut().zip(&s).for_each(|(a, v)| *a += v / n);
                Some(acc)
            }
            _ => None,
        };
    }
    Ok(PointSample { rate, layer_snr, counters: report.counters })
}

/// Runs one channel realization through every point of `plan`.
pub fn run_trial(cfg: &ExperimentConfig, plan: &SweepPlan, trial: usize) -> Result<TrialOutcome> {
    let seed = trial_seed(cfg.seed, trial);
    let channels = generate_channels(&cfg.dims(), &cfg.channel, seed::derive(seed, &[seed::stream::CHANNEL]))?;
    let basis = CascadeBasis::new(&channels)?;
    let grid = build_beam_grid(cfg.n1, cfg.n2, cfg.o1, cfg.o2)?;
    let scale = if cfg.normalize_cascade { 1.0 / (cfg.n_ris() as f64).sqrt() } else { 1.0 };
    // every metric searches from the same population
    let mca_seed = seed::derive(seed, &[seed::stream::MCA]);

    let mut metrics = Vec::with_capacity(plan.metrics.len());
    for &kind in &plan.metrics {
        let outcome = mca_optimize_with_basis(&basis, &cfg.mca_params(), kind, cfg.layer, mca_seed)?;
        let subbands: Vec<ComplexMatrix> =
            cascade_all(&channels, &outcome.config)?.into_iter().map(|f| f.scale_real(scale)).collect();
        let wideband = band_average(&subbands);
        let opts = SelectionOptions { cophase_source: cfg.cophase_source, op_kind: kind };

        let mut samples = Vec::with_capacity(plan.selectors.len());
        let mut reports = Vec::new();
        for &sel in &plan.selectors {
            let mut row = Vec::with_capacity(plan.avg_snr.len());
            match sel {
                SelectorKind::Proposed => {
                    let report = select_proposed(&wideband, &grid, cfg.n3, cfg.layer, &subbands, &opts)?;
                    for &rho in &plan.avg_snr {
                        row.push(measure(cfg, &grid, &report, &wideband, &subbands, rho)?);
                    }
                    reports.push(report);
                }
                SelectorKind::Conventional => {
                    for &rho in &plan.avg_snr {
                        let report = select_conventional(&wideband, &grid, cfg.n3, cfg.layer, &subbands, rho, &opts)?;
                        row.push(measure(cfg, &grid, &report, &wideband, &subbands, rho)?);
                        reports.push(report);
                    }
                }
            }
            samples.push(row);
        }
        metrics.push(MetricOutcome {
            kind,
            op: outcome.metric.value,
            ris_indices: outcome.config.indices().to_vec(),
            trace: outcome.state.trace,
            samples,
            reports,
        });
    }
    Ok(TrialOutcome { trial, seed, metrics })
}

/// Aggregate over trials for one (SNR, selector, metric) point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub snr_db: f64,
    pub selector: SelectorKind,
    pub metric: OpKind,
    pub n_ris: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub layer: usize,
    pub mean_rate: f64,
    /// Sample standard deviation over `√trials`.
    pub stderr: f64,
    /// Mean per-layer post-ZF SNR (linear) over trials where ZF was defined.
    pub mean_layer_snr: Vec<f64>,
    pub mean_op: f64,
    pub counters: Counters,
    pub trials: usize,
    pub failures: usize,
}

/// One line of the optimization trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub trial: usize,
    pub metric: OpKind,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceLine>,
    pub failures: usize,
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs all trials in parallel and reduces them in trial order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let plan = SweepPlan::new(cfg)?;
    if plan.snr_db.is_empty() {
        warn!("empty SNR grid, nothing to simulate");
        return Ok(SweepResult { rows: Vec::new(), traces: Vec::new(), failures: 0 });
    }

    let results: Vec<Result<TrialOutcome>> = (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, &plan, i)).collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_error = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                warn!("trial {i} failed: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    let failures = cfg.trials - outcomes.len();
    if outcomes.is_empty() {
        return Err(first_error.expect("at least one trial ran"));
    }
    if failures > 0 {
        warn!("{failures} of {} trials failed and were excluded", cfg.trials);
    }

    let mut rows = Vec::new();
    for (mi, &metric) in plan.metrics.iter().enumerate() {
        let ops: Vec<f64> = outcomes.iter().map(|o| o.metrics[mi].op).collect();
        let mean_op = mean_and_stderr(&ops).0;
        for (si, &selector) in plan.selectors.iter().enumerate() {
            for (pi, &snr_db) in plan.snr_db.iter().enumerate() {
                let samples: Vec<&PointSample> = outcomes.iter().map(|o| &o.metrics[mi].samples[si][pi]).collect();
                let rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
                let (mean_rate, stderr) = mean_and_stderr(&rates);
                let snrs: Vec<&Vec<f64>> = samples.iter().filter_map(|s| s.layer_snr.as_ref()).collect();
                let mean_layer_snr = if snrs.is_empty() {
                    Vec::new()
                } else {
                    (0..cfg.layer).map(|r| snrs.iter().map(|s| s[r]).sum::<f64>() / snrs.len() as f64).collect()
                };
                let counters = samples.iter().fold(Counters::default(), |acc, s| acc + s.counters);
                rows.push(ResultRow {
                    scenario: cfg.name.clone(),
                    snr_db,
                    selector,
                    metric,
                    n_ris: cfg.n_ris(),
                    n_t: cfg.n_t,
                    n_r: cfg.n_r,
                    layer: cfg.layer,
                    mean_rate,
                    stderr,
                    mean_layer_snr,
                    mean_op,
                    counters,
                    trials: outcomes.len(),
                    failures,
                });
            }
        }
    }

    let traces = outcomes
        .iter()
        .flat_map(|o| {
            o.metrics.iter().flat_map(move |m| {
                m.trace.iter().map(move |r| TraceLine { trial: o.trial, metric: m.kind, record: r.clone() })
            })
        })
        .collect();

    Ok(SweepResult { rows, traces, failures })
}

/// Fixed-precision float formatting used for CSV output (12 significant digits).
pub fn format_float(v: f64) -> String {
    format!("{v:.11e}")
}

pub const CSV_HEADER: [&str; 8] = ["snr_db", "selector", "metric", "n_ris", "n_t", "n_r", "mean_rate", "stderr"];

pub fn render_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format_float(r.snr_db),
            r.selector.label().to_string(),
            r.metric.label().to_string(),
            r.n_ris.to_string(),
            r.n_t.to_string(),
            r.n_r.to_string(),
            format_float(r.mean_rate),
            format_float(r.stderr),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_rows_json(rows: &[ResultRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

pub fn render_traces_jsonl(traces: &[TraceLine]) -> Result<String> {
    let mut out = String::new();
    for t in traces {
        out += &serde_json::to_string(t)?;
        out.push('\n');
    }
    Ok(out)
}

pub fn render_config_json(cfg: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(cfg)?)
}

/// Finds the row for a point, if present.
pub fn find_row(rows: &[ResultRow], snr_db: f64, selector: SelectorKind, metric: OpKind) -> Option<&ResultRow> {
    rows.iter().find(|r| r.snr_db == snr_db && r.selector == selector && r.metric == metric)
}
