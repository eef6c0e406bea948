//! Subcommand implementations. Each returns the text it would print so that
//! tests can call them directly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lhe_core::analysis::{
    deletion_stats, distance_stats, recommend_gamma, spectrum, spectrum_report, DeletionStats, DistanceAggregation,
    DistanceStats,
};
use lhe_core::graph::{LabelScope, Split};
use lhe_core::io::{read_dataset, write_dataset};
use lhe_core::pipeline::{run_experiment, RunReport};
use lhe_core::rng::{stream, Stream};
use lhe_core::synth::{generate_sbm, TRAIN_FRACTION, VAL_FRACTION};
use lhe_core::Graph;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{io_error, CliError, CliResult};

pub const CONFIG_ECHO: &str = "config.txt";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TEXT: &str = "summary.txt";

pub fn run_file_name(run: usize) -> String {
    format!("run_{run}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    /// Mask files shipped with the dataset.
    Files,
    /// Generated per run from the run seed.
    Stratified,
}

pub struct LoadedData {
    pub graph: Graph,
    pub splits: Vec<Split>,
    pub split_source: SplitSource,
}

fn stratified_splits(graph: &Graph, config: &ExperimentConfig) -> Vec<Split> {
    (0..config.runs)
        .map(|k| {
            let mut rng = stream(config.run_seed(k), Stream::Split);
            Split::stratified(graph.labels(), graph.num_classes(), TRAIN_FRACTION, VAL_FRACTION, &mut rng)
        })
        .collect()
}

/// The configured graph and one split per run.
pub fn load_data(config: &ExperimentConfig) -> CliResult<LoadedData> {
    let (graph, files) = match &config.data {
        DataSource::Synthetic(spec) => (generate_sbm(spec)?, Vec::new()),
        DataSource::Dir(dir) => {
            let d = read_dataset(dir).map_err(|e| CliError::Data(e.to_string()))?;
            if d.self_loops_stripped > 0 {
                log::warn!("{}: removed {} self-loops", dir.display(), d.self_loops_stripped);
            }
            (d.graph, d.splits)
        }
    };
    if files.is_empty() {
        let splits = stratified_splits(&graph, config);
        return Ok(LoadedData { graph, splits, split_source: SplitSource::Stratified });
    }
    if files.len() < config.runs {
        return Err(CliError::Data(format!("{} runs requested but only {} mask files found", config.runs, files.len())));
    }
    let splits = files.into_iter().take(config.runs).collect();
    Ok(LoadedData { graph, splits, split_source: SplitSource::Files })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Writes the synthetic dataset of `config` with one mask file per run.
pub fn generate(config: &ExperimentConfig, out_dir: &Path) -> CliResult<String> {
    if !matches!(config.data, DataSource::Synthetic(_)) {
        return Err(CliError::Usage("generate needs sbm.* keys, not data_dir".into()));
    }
    let data = load_data(config)?;
    write_dataset(out_dir, &data.graph, &data.splits).map_err(|e| CliError::Data(e.to_string()))?;
    let h = data.graph.homophily_ratio(LabelScope::All)?;
    Ok(format!(
        "wrote {} nodes, {} edges, {} splits to {} (homophily {h:.4})\n",
        data.graph.node_count(),
        data.graph.edge_count(),
        data.splits.len(),
        out_dir.display()
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub epochs_run: usize,
    pub fell_back_to_base: bool,
    pub total_deletion_ratio: Option<f64>,
    pub heterophilious_deletion_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mode: String,
    pub model: String,
    pub split_source: SplitSource,
    pub runs: Vec<RunEntry>,
    pub test_accuracy_mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub test_accuracy_std: f64,
    pub total_deletion_ratio_mean: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(config: &ExperimentConfig, source: SplitSource, reports: &[(usize, RunReport)]) -> Summary {
    let runs: Vec<RunEntry> = reports
        .iter()
        .map(|(k, r)| RunEntry {
            run: *k,
            seed: config.run_seed(*k),
            test_accuracy: r.test_accuracy,
            best_val_accuracy: r.best_val_accuracy,
            epochs_run: r.epochs_run,
            fell_back_to_base: r.fell_back_to_base,
            total_deletion_ratio: r.deletion.as_ref().map(|d| d.total_deletion_ratio),
            heterophilious_deletion_ratio: r.deletion.as_ref().and_then(|d| d.heterophilious_deletion_ratio),
        })
        .collect();
    let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = mean_std(&acc);
    let ratios: Option<Vec<f64>> = runs.iter().map(|r| r.total_deletion_ratio).collect();
    Summary {
        mode: config.train.mode.to_string(),
        model: config.train.model.to_string(),
        split_source: source,
        runs,
        test_accuracy_mean: mean,
        test_accuracy_std: std,
        total_deletion_ratio_mean: ratios.map(|r| mean_std(&r).0),
    }
}

fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

/// Runs every split (or only `only_run`) and writes the config echo, one
/// report per run and, for full runs, the summary.
pub fn train(config: &ExperimentConfig, only_run: Option<usize>) -> CliResult<String> {
    if let Some(k) = only_run {
        if k >= config.runs {
            return Err(CliError::Usage(format!("run {k} out of range for {} runs", config.runs)));
        }
    }
    let data = load_data(config)?;
    create_dir(&config.out_dir)?;
    write(&config.out_dir.join(CONFIG_ECHO), &config.echo())?;

    let selected: Vec<usize> = match only_run {
        Some(k) => vec![k],
        None => (0..config.runs).collect(),
    };
    let results: Vec<CliResult<(usize, RunReport)>> = thread_pool(config.workers)?.install(|| {
        selected
            .par_iter()
            .map(|&k| {
                let seed = config.run_seed(k);
                let wrap = |source| CliError::Run { run: k, seed, source };
                let graph = data.graph.with_split(data.splits[k].clone()).map_err(wrap)?;
                let tc = lhe_core::pipeline::TrainConfig { seed, ..config.train.clone() };
                let report = run_experiment(&graph, &tc).map_err(wrap)?;
                info!("run {k}: test accuracy {:.4} in {:.1}s", report.test_accuracy, report.wall_clock_secs);
                write(&config.out_dir.join(run_file_name(k)), &report.to_json())?;
                Ok((k, report))
            })
            .collect()
    });
    let reports = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    if only_run.is_some() {
        let (k, r) = &reports[0];
        return Ok(format!("run {k}: test accuracy {:.2}\n", 100.0 * r.test_accuracy));
    }
    let summary = summarize(config, data.split_source, &reports);
    write(&config.out_dir.join(SUMMARY_JSON), &to_json(&summary))?;
    let mut text = format!(
        "{} {}: test accuracy {:.2} ± {:.2} over {} runs ({:?} splits)\n",
        summary.mode,
        summary.model,
        100.0 * summary.test_accuracy_mean,
        100.0 * summary.test_accuracy_std,
        summary.runs.len(),
        summary.split_source,
    );
    if let Some(r) = summary.total_deletion_ratio_mean {
        writeln!(text, "mean total deletion ratio {:.4}", r).unwrap();
    }
    write(&config.out_dir.join(SUMMARY_TEXT), &text)?;
    Ok(text)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub bins: usize,
    pub dense_limit: usize,
    /// Pooled standard deviations separating the distance means before
    /// squared difference is recommended.
    pub tau: f64,
    pub aggregation: DistanceAggregation,
    pub spectrum: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            bins: lhe_core::analysis::DEFAULT_BINS,
            dense_limit: lhe_core::analysis::DEFAULT_DENSE_LIMIT,
            tau: 1.0,
            aggregation: DistanceAggregation::PairMeans,
            spectrum: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunAnalysis {
    pub run: usize,
    /// `None` when some node is unlabeled.
    pub deletion: Option<DeletionStats>,
    pub distances_before: DistanceStats,
    pub distances_after: DistanceStats,
    /// γ suggested by the input graph's distances.
    pub recommended_gamma: Option<u8>,
    pub spectrum_bin_edges: Option<Vec<f64>>,
    pub spectrum_counts_before: Option<Vec<usize>>,
    pub spectrum_counts_after: Option<Vec<usize>>,
    pub unit_eigenvalues_before: Option<usize>,
    pub unit_eigenvalues_after: Option<usize>,
}

pub fn analysis_file_name(run: usize) -> String {
    format!("analysis_{run}.json")
}

pub fn spectrum_file_name(run: usize) -> String {
    format!("spectrum_{run}.csv")
}

pub fn distances_file_name(run: usize) -> String {
    format!("distances_{run}.csv")
}

/// `(index, path)` of every run report in `dir`, by index.
pub fn run_reports(dir: &Path) -> CliResult<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if let Some(k) = name.strip_prefix("run_").and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse().ok()) {
            found.push((k, path));
        }
    }
    found.sort();
    Ok(found)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| io_error(path, e))
}

fn write_distances(path: &Path, before: &DistanceStats, after: &DistanceStats) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| io_error(path, e);
    w.write_record(["structure", "class_a", "class_b", "edges", "mean", "variance"]).map_err(err)?;
    for (label, stats) in [("before", before), ("after", after)] {
        for p in &stats.pairs {
            w.serialize((label, p.classes.0, p.classes.1, p.edges, p.mean, p.variance)).map_err(err)?;
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Per-run deletion, distance and spectrum statistics for a directory
/// written by [`train`].
pub fn analyze(run_dir: &Path, config: &ExperimentConfig, options: &AnalyzeOptions) -> CliResult<String> {
    let reports = run_reports(run_dir)?;
    if reports.is_empty() {
        return Err(CliError::Data(format!("{}: no run reports", run_dir.display())));
    }
    let graph = load_data(config)?.graph;
    let before = distance_stats(&graph, options.aggregation);
    let gamma = recommend_gamma(&before, options.tau).map(|g| g.gamma());

    let analyses: Vec<CliResult<RunAnalysis>> = thread_pool(config.workers)?.install(|| {
        reports
            .par_iter()
            .map(|(k, path)| {
                let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                let report = RunReport::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                if report.keep_mask.len() != graph.edge_count() {
                    return Err(CliError::Data(format!(
                        "{}: keep mask has {} entries for {} edges",
                        path.display(),
                        report.keep_mask.len(),
                        graph.edge_count()
                    )));
                }
                let after = graph.apply_deletion(&report.keep_mask)?;
                let mut a = RunAnalysis {
                    run: *k,
                    deletion: deletion_stats(&graph, &report.keep_mask).ok(),
                    distances_before: before.clone(),
                    distances_after: distance_stats(&after, options.aggregation),
                    recommended_gamma: gamma,
                    spectrum_bin_edges: None,
                    spectrum_counts_before: None,
                    spectrum_counts_after: None,
                    unit_eigenvalues_before: None,
                    unit_eigenvalues_after: None,
                };
                write_distances(&run_dir.join(distances_file_name(*k)), &a.distances_before, &a.distances_after)?;
                if options.spectrum {
                    let s = spectrum_report(&graph, &after, options.bins, options.dense_limit)?;
                    let path = run_dir.join(spectrum_file_name(*k));
                    let mut w = csv_writer(&path)?;
                    let err = |e: csv::Error| io_error(&path, e);
                    w.write_record(["index", "before", "after"]).map_err(err)?;
                    for (i, (b, a)) in s.before.eigenvalues.iter().zip(&s.after.eigenvalues).enumerate() {
                        w.serialize((i, b, a)).map_err(err)?;
                    }
                    w.flush().map_err(|e| io_error(&path, e))?;
                    a.spectrum_bin_edges = Some(s.bin_edges);
                    a.unit_eigenvalues_before = Some(s.before.unit_count);
                    a.unit_eigenvalues_after = Some(s.after.unit_count);
                    a.spectrum_counts_before = Some(s.before.counts);
                    a.spectrum_counts_after = Some(s.after.counts);
                }
                write(&run_dir.join(analysis_file_name(*k)), &to_json(&a))?;
                Ok(a)
            })
            .collect()
    });
    let analyses = analyses.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut text = String::new();
    for a in &analyses {
        match &a.deletion {
            Some(d) => writeln!(
                text,
                "run {}: deleted {}/{} edges ({:.4}), heterophilious share {}",
                a.run,
                d.deleted,
                d.total_edges,
                d.total_deletion_ratio,
                d.heterophilious_deletion_ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"))
            ),
            None => writeln!(text, "run {}: deletion stats need every node labeled", a.run),
        }
        .unwrap();
    }
    if let Some(g) = gamma {
        writeln!(text, "recommended gamma: {g}").unwrap();
    }
    Ok(text)
}

/// Eigenvalues of `S_sym` for the configured graph, optionally after
/// applying the keep mask of a run report.
pub fn eigen(config: &ExperimentConfig, report: Option<&Path>, options: &AnalyzeOptions, out_dir: &Path) -> CliResult<String> {
    let mut graph = load_data(config)?.graph;
    if let Some(path) = report {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let r = RunReport::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        graph = graph.apply_deletion(&r.keep_mask)?;
    }
    if options.bins == 0 {
        return Err(CliError::Usage("bins must be positive".into()));
    }
    let s = spectrum(&graph, options.bins, options.dense_limit)?;
    create_dir(out_dir)?;

    let path = out_dir.join("eigenvalues.csv");
    let mut w = csv_writer(&path)?;
    let err = |e: csv::Error| io_error(&path, e);
    w.write_record(["index", "eigenvalue"]).map_err(err)?;
    for (i, v) in s.eigenvalues.iter().enumerate() {
        w.serialize((i, v)).map_err(err)?;
    }
    w.flush().map_err(|e| io_error(&path, e))?;

    let (edges, _) = lhe_core::analysis::histogram(&[], options.bins);
    let path = out_dir.join("histogram.csv");
    let mut w = csv_writer(&path)?;
    let err = |e: csv::Error| io_error(&path, e);
    w.write_record(["low", "high", "count"]).map_err(err)?;
    for (b, c) in s.counts.iter().enumerate() {
        w.serialize((edges[b], edges[b + 1], c)).map_err(err)?;
    }
    w.flush().map_err(|e| io_error(&path, e))?;

    let (lo, hi) = (s.eigenvalues.first().copied().unwrap_or(f64::NAN), s.eigenvalues.last().copied().unwrap_or(f64::NAN));
    Ok(format!("{} eigenvalues in [{lo:.6}, {hi:.6}], {} equal to 1\n", s.eigenvalues.len(), s.unit_count))
}

/// Dataset statistics.
pub fn info(config: &ExperimentConfig) -> CliResult<String> {
    let data = load_data(config)?;
    let g = &data.graph;
    let mut s = String::new();
    writeln!(s, "nodes: {}", g.node_count()).unwrap();
    writeln!(s, "edges: {}", g.edge_count()).unwrap();
    writeln!(s, "features: {}", g.feature_dim()).unwrap();
    writeln!(s, "classes: {}", g.num_classes()).unwrap();
    let mut sizes = vec![0usize; g.num_classes()];
    let mut unlabeled = 0;
    for l in g.labels() {
        match l {
            Some(c) => sizes[*c] += 1,
            None => unlabeled += 1,
        }
    }
    writeln!(s, "class sizes: {sizes:?}").unwrap();
    writeln!(s, "unlabeled: {unlabeled}").unwrap();
    match g.homophily_ratio(LabelScope::All) {
        Ok(h) => writeln!(s, "homophily ratio: {h:.4}").unwrap(),
        Err(_) => writeln!(s, "homophily ratio: n/a").unwrap(),
    }
    writeln!(s, "splits: {} ({:?})", data.splits.len(), data.split_source).unwrap();
    let d = distance_stats(g, DistanceAggregation::PairMeans);
    if let (Some(w), Some(b)) = (d.in_class, d.between_class) {
        writeln!(s, "in-class distance: {:.4} ± {:.4}", w.mean, w.variance.sqrt()).unwrap();
        writeln!(s, "between-class distance: {:.4} ± {:.4}", b.mean, b.variance.sqrt()).unwrap();
    }
    if let Some(gamma) = recommend_gamma(&d, AnalyzeOptions::default().tau) {
        writeln!(s, "recommended gamma: {}", gamma.gamma()).unwrap();
    }
    Ok(s)
}
