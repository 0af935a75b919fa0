//! Convergence experiments: benchmark x sampler x N x replicate grids,
//! results tables, summaries and weight exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::activation::{ActivationSpec, PsiTable};
use crate::benchmarks::{generate_dataset, make_benchmark, Benchmark, Sampling, Splits};
use crate::error::{Error, Result};
use crate::geometry::{cell_stream_id, Neuron, RngStream};
use crate::regression::{cross_validate, default_alpha_grid, eval_model, rmse, FitReport, RidgeModel};
use crate::samplers::{sample, sample_residual, write_weights, SamplerSpec};

fn default_k() -> usize {
    1000
}

fn default_replicates() -> usize {
    20
}

fn default_true() -> bool {
    true
}

fn default_s() -> u8 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Activation order and width; the width defaults by dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationConfig {
    #[serde(default = "default_s")]
    pub s: u8,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl Default for ActivationConfig {
    fn default() -> Self {
        ActivationConfig { s: 1, delta: None }
    }
}

/// One experiment: a benchmark, a list of samplers and an N-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    pub d: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Defaults to the benchmark's own placement.
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    pub samplers: Vec<SamplerSpec>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub activation: ActivationConfig,
    /// Nonlocal width; `2 delta` when absent.
    #[serde(default)]
    pub delta_w: Option<f64>,
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub poly: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Wall time is written as 0 unless enabled, so reruns are byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// Minimal config with paper defaults for everything else.
    pub fn new(benchmark: &str, d: usize, samplers: Vec<SamplerSpec>, n_grid: Vec<usize>) -> Self {
        ExperimentConfig {
            benchmark: benchmark.to_string(),
            d,
            k: default_k(),
            sampling: None,
            noise_sigma: None,
            samplers,
            n_grid,
            replicates: default_replicates(),
            activation: ActivationConfig::default(),
            delta_w: None,
            alpha_grid: None,
            poly: true,
            seed: 0,
            output_dir: default_output(),
            record_wall_time: false,
        }
    }

    /// Reads JSON and applies `dotted.name=value` overrides.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, overrides)
    }

    pub fn from_value(mut value: Value, overrides: &[(String, String)]) -> Result<Self> {
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn delta(&self) -> f64 {
        self.activation.delta.unwrap_or(if self.d == 1 { 1.0 / 80.0 } else { 1.0 / 40.0 })
    }

    pub fn activation_spec(&self) -> Result<ActivationSpec> {
        ActivationSpec::new(self.activation.s, self.delta()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn delta_w(&self) -> f64 {
        self.delta_w.unwrap_or(2.0 * self.delta())
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        self.alpha_grid.clone().unwrap_or_else(default_alpha_grid)
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        let b = make_benchmark(&self.benchmark, self.d)?;
        match self.noise_sigma {
            Some(s) => b.with_noise(s),
            None => Ok(b),
        }
    }

    /// Samplers with the config-level `delta_w` filled in.
    pub fn resolved_samplers(&self) -> Vec<SamplerSpec> {
        let w = self.delta_w();
        fn fill(spec: &SamplerSpec, w: f64) -> SamplerSpec {
            match spec {
                SamplerSpec::NonlocalGradient { delta_w } => {
                    SamplerSpec::NonlocalGradient { delta_w: Some(delta_w.unwrap_or(w)) }
                }
                SamplerSpec::NonlocalHessian { delta_w } => {
                    SamplerSpec::NonlocalHessian { delta_w: Some(delta_w.unwrap_or(w)) }
                }
                SamplerSpec::Residual { base, kappa, n0 } => {
                    SamplerSpec::Residual { base: Box::new(fill(base, w)), kappa: *kappa, n0: *n0 }
                }
                other => other.clone(),
            }
        }
        self.samplers.iter().map(|s| fill(s, w)).collect()
    }

    /// Column labels: the sampler kind, suffixed by position when a kind repeats.
    pub fn sampler_names(&self) -> Vec<String> {
        let labels: Vec<&str> = self.samplers.iter().map(SamplerSpec::label).collect();
        labels
            .iter()
            .enumerate()
            .map(
                |(i, l)| if labels.iter().filter(|m| *m == l).count() > 1 { format!("{l}_{i}") } else { l.to_string() },
            )
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.samplers.is_empty() {
            return bad("at least one sampler is required");
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be nonempty, positive and strictly ascending");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.k < 10 {
            return bad("k must be at least 10");
        }
        if matches!(self.delta_w, Some(w) if !(w > 0.0)) {
            return bad("delta_w must be positive");
        }
        if let Some(g) = &self.alpha_grid {
            if g.is_empty() || g.windows(2).any(|w| !(w[0] > w[1])) || g.iter().any(|a| !(*a > 0.0)) {
                return bad("alpha_grid must be positive and strictly descending");
            }
        }
        self.activation_spec()?;
        for s in &self.resolved_samplers() {
            s.validate().map_err(|e| Error::Config(format!("sampler {}: {e}", s.label())))?;
        }
        self.benchmark().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Sets `key` (dot separated, array indices allowed) to `raw`, parsed as
/// JSON when possible and as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize =
                    part.parse().map_err(|_| Error::Config(format!("`{part}` in `{key}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{key}`")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{key}` descends into a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub benchmark: String,
    pub d: usize,
    pub sampler: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub replicate: usize,
    pub alpha: Option<f64>,
    pub train_rmse: Option<f64>,
    pub val_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub accept_rate: Option<f64>,
    pub wall_ms: u64,
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything a cell needs besides its indices.
struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    activation: ActivationSpec,
    samplers: Vec<SamplerSpec>,
    names: Vec<String>,
    alpha_grid: Vec<f64>,
    psi: Option<PsiTable>,
    /// Status for psi-dependent cells when the table could not be built.
    psi_failure: &'static str,
    datasets: Vec<Result<Splits>>,
}

/// Fits one neuron set: cross-validation on train and validation data.
fn fit(
    ctx_splits: &Splits,
    neurons: &[Neuron],
    act: &ActivationSpec,
    grid: &[f64],
    poly: bool,
) -> Result<(RidgeModel, FitReport)> {
    cross_validate(&ctx_splits.train, &ctx_splits.val, neurons, act, grid, poly)
}

/// Neurons and their fitted model for one sampler draw.
pub struct CellFit {
    pub neurons: Vec<Neuron>,
    pub model: RidgeModel,
    pub report: FitReport,
    pub accept_rate: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn sample_and_fit(
    spec: &SamplerSpec,
    splits: &Splits,
    n: usize,
    act: &ActivationSpec,
    psi: Option<&PsiTable>,
    grid: &[f64],
    poly: bool,
    rng: &mut RngStream,
) -> Result<CellFit> {
    match spec {
        SamplerSpec::Residual { base, kappa, n0 } => {
            let out =
                sample_residual(&splits.train, base, n, *kappa, *n0, act, |ns| fit(splits, ns, act, grid, poly), rng)?;
            Ok(CellFit { neurons: out.neurons, model: out.model, report: out.report, accept_rate: None })
        }
        _ => {
            let s = sample(spec, &splits.train, n, act, psi, rng)?;
            let (model, report) = fit(splits, &s.neurons, act, grid, poly)?;
            Ok(CellFit { neurons: s.neurons, model, report, accept_rate: s.accept_rate })
        }
    }
}

fn psi_for(samplers: &[SamplerSpec], act: &ActivationSpec, d: usize) -> Result<Option<PsiTable>> {
    if !samplers.iter().any(SamplerSpec::needs_psi) {
        return Ok(None);
    }
    if !(act.delta > 0.0) {
        return Err(Error::DeltaZero);
    }
    // a . x + b ranges over [-2R, 2R].
    PsiTable::for_radius(act.s as usize - 1, d, act.delta, 2.0 * crate::benchmarks::DATA_RADIUS).map(Some)
}

fn dataset_stream(cfg: &ExperimentConfig, replicate: usize) -> RngStream {
    RngStream::new(cfg.seed, cell_stream_id(&cfg.benchmark, "dataset", cfg.k, replicate))
}

fn generate_for(cfg: &ExperimentConfig, bench: &Benchmark, replicate: usize) -> Result<Splits> {
    let sampling = cfg.sampling.unwrap_or_else(|| bench.default_sampling());
    generate_dataset(bench, cfg.k, sampling, bench.noise_sigma(), &mut dataset_stream(cfg, replicate))
}

fn run_cell(ctx: &RunContext, sampler: usize, n: usize, replicate: usize) -> ResultRow {
    let cfg = ctx.cfg;
    let name = &ctx.names[sampler];
    let mut row = ResultRow {
        benchmark: cfg.benchmark.clone(),
        d: cfg.d,
        sampler: name.clone(),
        n,
        replicate,
        alpha: None,
        train_rmse: None,
        val_rmse: None,
        test_rmse: None,
        accept_rate: None,
        wall_ms: 0,
        status: "ok".into(),
    };
    if ctx.samplers[sampler].needs_psi() && ctx.psi.is_none() {
        row.status = ctx.psi_failure.to_string();
        return row;
    }
    let start = Instant::now();
    let result = match &ctx.datasets[replicate] {
        Err(e) => Err(Error::Config(format!("dataset: {e}"))),
        Ok(splits) => {
            let mut rng = RngStream::new(cfg.seed, cell_stream_id(&cfg.benchmark, name, n, replicate));
            let spec = &ctx.samplers[sampler];
            let psi = if spec.needs_psi() { ctx.psi.as_ref() } else { None };
            sample_and_fit(spec, splits, n, &ctx.activation, psi, &ctx.alpha_grid, cfg.poly, &mut rng).map(|fit| {
                (fit.report.clone(), fit.accept_rate, rmse(&eval_model(&fit.model, splits.test.x()), splits.test.y()))
            })
        }
    };
    if cfg.record_wall_time {
        row.wall_ms = start.elapsed().as_millis() as u64;
    }
    match result {
        Ok((report, accept, test)) => {
            row.alpha = Some(report.alpha);
            row.train_rmse = Some(report.chosen_train_rmse());
            row.val_rmse = Some(report.chosen_val_rmse());
            row.test_rmse = Some(test);
            row.accept_rate = accept;
        }
        Err(e) => {
            warn!("{} N={n} replicate={replicate}: {e}", name);
            row.status = e.tag().to_string();
        }
    }
    row
}

/// Results of a run in sampler, N, replicate order.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
}

impl ExperimentOutcome {
    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Runs every cell of the grid in parallel. Each replicate's dataset is
/// shared by all samplers and N values.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let bench = cfg.benchmark()?;
    let activation = cfg.activation_spec()?;
    let samplers = cfg.resolved_samplers();
    let (psi, psi_failure) = match psi_for(&samplers, &activation, cfg.d) {
        Ok(p) => (p, "ok"),
        Err(e) => {
            warn!("psi table unavailable: {e}");
            (None, e.tag())
        }
    };
    let datasets: Vec<Result<Splits>> =
        (0..cfg.replicates).into_par_iter().map(|r| generate_for(cfg, &bench, r)).collect();
    let ctx = RunContext {
        cfg,
        activation,
        names: cfg.sampler_names(),
        samplers,
        alpha_grid: cfg.alpha_grid(),
        psi,
        psi_failure,
        datasets,
    };
    let mut cells = Vec::new();
    for s in 0..ctx.samplers.len() {
        for &n in &cfg.n_grid {
            for r in 0..cfg.replicates {
                cells.push((s, n, r));
            }
        }
    }
    info!("running {} cells for {} (d={})", cells.len(), cfg.benchmark, cfg.d);
    let rows: Vec<ResultRow> = cells.par_iter().map(|&(s, n, r)| run_cell(&ctx, s, n, r)).collect();
    Ok(ExperimentOutcome { rows })
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULT_COLUMNS: &[&str] = &[
    "benchmark",
    "d",
    "sampler",
    "N",
    "replicate",
    "alpha",
    "train_rmse",
    "val_rmse",
    "test_rmse",
    "accept_rate",
    "wall_ms",
    "status",
];

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(RESULT_COLUMNS.iter().copied()) {
        return Err(Error::Config(format!("{}: unexpected columns", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs the experiment and writes `results.csv` and `config.json` into the
/// output directory.
pub fn run_to_dir(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = run_experiment(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_results(fs::File::create(cfg.output_dir.join("results.csv"))?, &outcome.rows)?;
    let json = serde_json::to_string_pretty(cfg)?;
    fs::write(cfg.output_dir.join("config.json"), json + "\n")?;
    Ok(outcome)
}

/// Quartiles of the test error for one (sampler, N) cell group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub benchmark: String,
    pub d: usize,
    pub sampler: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Groups by benchmark, dimension, sampler and N; samplers keep their first
/// appearance order and N ascends.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, usize, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.benchmark.clone(), r.d, r.sampler.clone());
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        let entry = groups.entry((idx, r.n)).or_default();
        match r.test_rmse {
            Some(e) if r.is_ok() => entry.0.push(e),
            _ => entry.1 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((idx, n), (mut errs, failed))| {
            errs.sort_by(f64::total_cmp);
            let (benchmark, d, sampler) = order[idx].clone();
            SummaryRow {
                benchmark,
                d,
                sampler,
                n,
                n_ok: errs.len(),
                n_failed: failed,
                median: quantile(&errs, 0.5),
                q1: quantile(&errs, 0.25),
                q3: quantile(&errs, 0.75),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Median test RMSE of a sampler at `n`, if present.
pub fn median_of(summary: &[SummaryRow], sampler: &str, n: usize) -> Option<f64> {
    summary.iter().find(|r| r.sampler == sampler && r.n == n).and_then(|r| r.median)
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Log-log chart of median test error against N with quartile bars.
pub fn render_svg(summary: &[SummaryRow]) -> String {
    let (w, h, m) = (640.0, 440.0, 60.0);
    let pts: Vec<&SummaryRow> = summary.iter().filter(|r| r.median.is_some_and(|v| v > 0.0)).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let lx = |v: f64| v.log10();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &pts {
        x0 = x0.min(lx(r.n as f64));
        x1 = x1.max(lx(r.n as f64));
        for v in [r.q1, r.median, r.q3].into_iter().flatten().filter(|v| *v > 0.0) {
            y0 = y0.min(lx(v));
            y1 = y1.max(lx(v));
        }
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |v: f64| m + (lx(v) - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |v: f64| h - m - (lx(v) - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = writeln!(
        svg,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for e in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, h - m + 18.0);
    }
    for e in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#, m - 6.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">N</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">test RMSE</text>"#,
        h / 2.0,
        h / 2.0
    );
    if let Some(first) = pts.first() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="30" text-anchor="middle">{} (d={})</text>"#,
            w / 2.0,
            first.benchmark,
            first.d
        );
    }
    let mut names: Vec<&str> = Vec::new();
    for r in &pts {
        if !names.contains(&r.sampler.as_str()) {
            names.push(&r.sampler);
        }
    }
    for (i, name) in names.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let series: Vec<&&SummaryRow> = pts.iter().filter(|r| r.sampler == *name).collect();
        let path: Vec<String> =
            series.iter().map(|r| format!("{:.1},{:.1}", px(r.n as f64), py(r.median.unwrap_or(1.0)))).collect();
        let _ =
            writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for r in &series {
            if let (Some(a), Some(b)) = (r.q1.filter(|v| *v > 0.0), r.q3.filter(|v| *v > 0.0)) {
                let x = px(r.n as f64);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    py(a),
                    py(b)
                );
            }
        }
        let ly = m + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            w - m - 150.0,
            w - m - 130.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, w - m - 125.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `summary.csv` and one SVG per benchmark next to `results`.
pub fn summarize_file(results: &Path) -> Result<Vec<SummaryRow>> {
    let rows = read_results(results)?;
    let summary = summarize(&rows);
    let dir = results.parent().unwrap_or(Path::new("."));
    write_summary(fs::File::create(dir.join("summary.csv"))?, &summary)?;
    let mut by_bench: BTreeMap<(String, usize), Vec<SummaryRow>> = BTreeMap::new();
    for r in &summary {
        by_bench.entry((r.benchmark.clone(), r.d)).or_default().push(r.clone());
    }
    for ((bench, d), rows) in by_bench {
        fs::write(dir.join(format!("convergence_{bench}_d{d}.svg")), render_svg(&rows))?;
    }
    Ok(summary)
}

/// Samples `n` neurons with `sampler` on the replicate-0 training data of
/// `cfg` (master seed replaced by `seed`) and writes them in the weight format.
pub fn export_weights<W: Write>(
    cfg: &ExperimentConfig,
    sampler: &SamplerSpec,
    n: usize,
    seed: u64,
    out: W,
) -> Result<usize> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    cfg.samplers = vec![sampler.clone()];
    if n == 0 {
        return Err(Error::invalid("export needs at least one neuron"));
    }
    cfg.validate()?;
    let bench = cfg.benchmark()?;
    let act = cfg.activation_spec()?;
    let spec = cfg.resolved_samplers().remove(0);
    let splits = generate_for(&cfg, &bench, 0)?;
    let psi = psi_for(std::slice::from_ref(&spec), &act, cfg.d)?;
    let mut rng = RngStream::new(seed, cell_stream_id(&cfg.benchmark, spec.label(), n, 0));
    let neurons = match &spec {
        SamplerSpec::Residual { .. } => {
            sample_and_fit(&spec, &splits, n, &act, psi.as_ref(), &cfg.alpha_grid(), cfg.poly, &mut rng)?.neurons
        }
        _ => sample(&spec, &splits.train, n, &act, psi.as_ref(), &mut rng)?.neurons,
    };
    write_weights(out, &neurons)?;
    Ok(neurons.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            "gauss1d",
            1,
            vec![SamplerSpec::Uniform, SamplerSpec::LocalGradient],
            vec![5, 10, 20],
        );
        cfg.k = 100;
        cfg.replicates = 5;
        cfg
    }

    #[test]
    fn grid_product_row_count() {
        let out = run_experiment(&small_config()).unwrap();
        assert_eq!(out.rows.len(), 30);
        assert_eq!(out.n_failed(), 0);
        assert_eq!(summarize(&out.rows).len(), 6);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = small_config();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_results(&mut a, &run_experiment(&cfg).unwrap().rows).unwrap();
        write_results(&mut b, &run_experiment(&cfg).unwrap().rows).unwrap();
        assert_eq!(a, b);
        let header = String::from_utf8(a).unwrap();
        assert_eq!(header.lines().next().unwrap(), RESULT_COLUMNS.join(","));
    }

    #[test]
    fn defaults_follow_dimension() {
        let cfg = ExperimentConfig::new("planar_wave", 2, vec![SamplerSpec::Uniform], vec![10]);
        assert_eq!(cfg.delta(), 1.0 / 40.0);
        assert_eq!(cfg.delta_w(), 1.0 / 20.0);
        assert_eq!(cfg.replicates, 20);
        assert_eq!(small_config().delta(), 1.0 / 80.0);
        let specs =
            ExperimentConfig::new("planar_wave", 2, vec![SamplerSpec::NonlocalGradient { delta_w: None }], vec![10])
                .resolved_samplers();
        assert_eq!(specs[0], SamplerSpec::NonlocalGradient { delta_w: Some(0.05) });
    }

    #[test]
    fn dotted_overrides() {
        let base = json!({
            "benchmark": "gauss1d", "d": 1,
            "samplers": [{"kind": "uniform"}, {"kind": "nonlocal_gradient"}],
            "n_grid": [10, 20]
        });
        let overrides = vec![
            ("activation.delta".to_string(), "0.05".to_string()),
            ("samplers.1.delta_w".to_string(), "0.2".to_string()),
            ("replicates".to_string(), "3".to_string()),
            ("output_dir".to_string(), "out/x".to_string()),
        ];
        let cfg = ExperimentConfig::from_value(base.clone(), &overrides).unwrap();
        assert_eq!(cfg.delta(), 0.05);
        assert_eq!(cfg.samplers[1], SamplerSpec::NonlocalGradient { delta_w: Some(0.2) });
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.output_dir, PathBuf::from("out/x"));
        assert!(ExperimentConfig::from_value(base.clone(), &[("n_grid".into(), "[20, 10]".into())]).is_err());
        assert!(ExperimentConfig::from_value(base.clone(), &[("bogus".into(), "1".into())]).is_err());
        assert!(ExperimentConfig::from_value(base, &[("samplers.7.kind".into(), "uniform".into())]).is_err());
    }

    #[test]
    fn failed_cells_are_recorded() {
        let mut cfg = small_config();
        cfg.activation.s = 2;
        cfg.samplers = vec![SamplerSpec::NonlocalHessian { delta_w: None }, SamplerSpec::Uniform];
        cfg.benchmark = "corner_max".into();
        cfg.d = 2;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.rows.iter().filter(|r| r.sampler == "nonlocal_hessian").all(|r| r.status == "zero-trace"));
        assert!(out.rows.iter().filter(|r| r.sampler == "uniform").all(ResultRow::is_ok));
    }

    #[test]
    fn quantiles_and_medians() {
        assert_eq!(quantile(&[3.0], 0.5), Some(3.0));
        assert_eq!(quantile(&[1.0, 2.0, 7.0], 0.5), Some(2.0));
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn svg_has_one_series_per_sampler() {
        let out = run_experiment(&small_config()).unwrap();
        let svg = render_svg(&summarize(&out.rows));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn results_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.output_dir = dir.path().to_path_buf();
        let out = run_to_dir(&cfg).unwrap();
        let back = read_results(&dir.path().join("results.csv")).unwrap();
        assert_eq!(back, out.rows);
        let summary = summarize_file(&dir.path().join("results.csv")).unwrap();
        assert_eq!(summary.len(), 6);
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("convergence_gauss1d_d1.svg").exists());
    }

    #[test]
    fn export_writes_one_line_per_neuron() {
        let cfg = ExperimentConfig::new("planar_wave", 2, vec![SamplerSpec::Uniform], vec![10]);
        let mut buf = Vec::new();
        assert_eq!(export_weights(&cfg, &SamplerSpec::LocalGradient, 1000, 3, &mut buf).unwrap(), 1000);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1000);
        let dir = [1.0 / 3f64.sqrt(), -(2.0 / 3.0f64).sqrt()];
        for line in text.lines() {
            let v: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
            assert!(((v[0] * dir[0] + v[1] * dir[1]).abs() - 1.0).abs() <= 1e-12);
        }
    }
}
