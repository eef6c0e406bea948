//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. [`ExperimentConfig::echo`] writes every key, so an echoed
//! file reproduces the run without relying on defaults.

use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lhe_core::models::EdgeRepr;
use lhe_core::pipeline::TrainConfig;
use lhe_core::synth::{FeatureRegime, SbmSpec};

use crate::error::{io_error, CliError, CliResult};

pub const DEFAULT_RUNS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Directory with edges.txt, features.csv, labels.txt and optional
    /// masks_<k>.txt files.
    Dir(PathBuf),
    Synthetic(SbmSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub train: TrainConfig,
    /// Number of splits; run `k` uses split `k` and seed `train.seed + k`.
    pub runs: usize,
    pub out_dir: PathBuf,
    /// Worker threads for parallel runs; 0 picks one per core.
    pub workers: usize,
}

const TRAIN_KEYS: [&str; 18] = [
    "mode",
    "model",
    "epochs",
    "patience",
    "pretrain_epochs",
    "pretrain_patience",
    "lr",
    "pretrain_lr",
    "weight_decay",
    "dropout",
    "hidden",
    "edge_dim",
    "k",
    "gamma",
    "drop_rate",
    "ground_truth_policy",
    "class_weighted",
    "seed",
];

const SBM_KEYS: [&str; 9] = [
    "sbm.n",
    "sbm.classes",
    "sbm.homophily",
    "sbm.mean_degree",
    "sbm.features",
    "sbm.separation",
    "sbm.noise",
    "sbm.seed",
    "sbm.regime",
];

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| CliError::Usage(format!("{key} = {value}: {e}")))
}

fn parse_gamma(value: &str) -> CliResult<EdgeRepr> {
    value
        .parse::<u8>()
        .ok()
        .and_then(EdgeRepr::from_gamma)
        .ok_or_else(|| CliError::Usage(format!("gamma = {value}: expected 0 or 1")))
}

fn parse_regime(value: &str) -> CliResult<FeatureRegime> {
    match value {
        "separated" => Ok(FeatureRegime::Separated),
        "overlapping" => Ok(FeatureRegime::Overlapping),
        _ => Err(CliError::Usage(format!("sbm.regime = {value}: expected separated or overlapping"))),
    }
}

/// Splits a document into `(line number, key, value)` entries.
pub fn entries(text: &str) -> CliResult<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
        Self::from_entries(entries(text)?.into_iter().map(|(_, k, v)| (k, v)))
    }

    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Builds a config from key/value pairs; later pairs may not repeat a key.
    pub fn from_entries(pairs: impl IntoIterator<Item = (String, String)>) -> CliResult<ExperimentConfig> {
        let mut seen = std::collections::HashSet::new();
        let mut train = TrainConfig::default();
        let mut sbm: Option<SbmSpec> = None;
        let mut regime = None;
        let mut data_dir = None;
        let mut runs = DEFAULT_RUNS;
        let mut out_dir = PathBuf::from("runs");
        let mut workers = 0;
        for (key, value) in pairs {
            if !seen.insert(key.clone()) {
                return Err(CliError::Usage(format!("key `{key}` given twice")));
            }
            let v = value.as_str();
            if SBM_KEYS.contains(&key.as_str()) {
                let s = sbm.get_or_insert_with(SbmSpec::default);
                match key.as_str() {
                    "sbm.n" => s.n = parse(&key, v)?,
                    "sbm.classes" => s.classes = parse(&key, v)?,
                    "sbm.homophily" => s.homophily = parse(&key, v)?,
                    "sbm.mean_degree" => s.mean_degree = parse(&key, v)?,
                    "sbm.features" => s.features = parse(&key, v)?,
                    "sbm.separation" => s.separation = parse(&key, v)?,
                    "sbm.noise" => s.noise = parse(&key, v)?,
                    "sbm.seed" => s.seed = parse(&key, v)?,
                    _ => regime = Some(parse_regime(v)?),
                }
                continue;
            }
            match key.as_str() {
                "data_dir" => data_dir = Some(PathBuf::from(v)),
                "runs" => runs = parse(&key, v)?,
                "out_dir" => out_dir = PathBuf::from(v),
                "workers" => workers = parse(&key, v)?,
                "mode" => train.mode = parse(&key, v)?,
                "model" => train.model = parse(&key, v)?,
                "epochs" => train.epochs = parse(&key, v)?,
                "patience" => train.patience = parse(&key, v)?,
                "pretrain_epochs" => train.pretrain_epochs = parse(&key, v)?,
                "pretrain_patience" => train.pretrain_patience = parse(&key, v)?,
                "lr" => train.lr = parse(&key, v)?,
                "pretrain_lr" => train.pretrain_lr = parse(&key, v)?,
                "weight_decay" => train.weight_decay = parse(&key, v)?,
                "dropout" => train.dropout = parse(&key, v)?,
                "hidden" => train.hidden = parse(&key, v)?,
                "edge_dim" => train.edge_dim = parse(&key, v)?,
                "k" => train.k = parse(&key, v)?,
                "gamma" => train.gamma = parse_gamma(v)?,
                "drop_rate" => train.drop_rate = parse(&key, v)?,
                "ground_truth_policy" => train.ground_truth_policy = parse(&key, v)?,
                "class_weighted" => train.class_weighted = parse(&key, v)?,
                "seed" => train.seed = parse(&key, v)?,
                _ => return Err(CliError::Usage(format!("unknown key `{key}`"))),
            }
        }
        // the regime is relative to the noise, whichever order the keys came in
        if let (Some(s), Some(r)) = (sbm.as_mut(), regime) {
            if seen.contains("sbm.separation") {
                return Err(CliError::Usage("give sbm.regime or sbm.separation, not both".into()));
            }
            *s = s.clone().with_regime(r);
        }
        let data = match (data_dir, sbm) {
            (Some(d), None) => DataSource::Dir(d),
            (None, Some(s)) => DataSource::Synthetic(s),
            (Some(_), Some(_)) => return Err(CliError::Usage("give data_dir or sbm.* keys, not both".into())),
            (None, None) => return Err(CliError::Usage("no data source: set data_dir or sbm.* keys".into())),
        };
        if runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        train.validate()?;
        Ok(ExperimentConfig { data, train, runs, out_dir, workers })
    }

    /// Every key with its value; `parse(echo())` returns `self`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn Display| writeln!(s, "{k} = {v}").unwrap();
        match &self.data {
            DataSource::Dir(d) => put("data_dir", &d.display()),
            DataSource::Synthetic(spec) => {
                put("sbm.n", &spec.n);
                put("sbm.classes", &spec.classes);
                put("sbm.homophily", &spec.homophily);
                put("sbm.mean_degree", &spec.mean_degree);
                put("sbm.features", &spec.features);
                put("sbm.separation", &spec.separation);
                put("sbm.noise", &spec.noise);
                put("sbm.seed", &spec.seed);
            }
        }
        let t = &self.train;
        let values: [&dyn Display; 18] = [
            &t.mode,
            &t.model,
            &t.epochs,
            &t.patience,
            &t.pretrain_epochs,
            &t.pretrain_patience,
            &t.lr,
            &t.pretrain_lr,
            &t.weight_decay,
            &t.dropout,
            &t.hidden,
            &t.edge_dim,
            &t.k,
            &t.gamma.gamma(),
            &t.drop_rate,
            &t.ground_truth_policy,
            &t.class_weighted,
            &t.seed,
        ];
        for (k, v) in TRAIN_KEYS.iter().zip(values) {
            put(k, v);
        }
        put("runs", &self.runs);
        put("out_dir", &self.out_dir.display());
        put("workers", &self.workers);
        s
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.train.seed.wrapping_add(run as u64)
    }
}

/// Parses `key=value` overrides given on the command line.
pub fn overrides(pairs: &[String]) -> CliResult<Vec<(String, String)>> {
    pairs
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("override `{p}` is not key=value")))
        })
        .collect()
}

/// Config file entries with command-line overrides applied on top.
pub fn load_with_overrides(path: Option<&Path>, set: &[String]) -> CliResult<ExperimentConfig> {
    let mut pairs: Vec<(String, String)> = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            entries(&text)?.into_iter().map(|(_, k, v)| (k, v)).collect()
        }
        None => Vec::new(),
    };
    for (k, v) in overrides(set)? {
        // switching data source on the command line replaces the file's choice
        if k == "data_dir" {
            pairs.retain(|(key, _)| !key.starts_with("sbm."));
        } else if k.starts_with("sbm.") {
            pairs.retain(|(key, _)| key != "data_dir");
        }
        if k == "sbm.regime" {
            pairs.retain(|(key, _)| key != "sbm.separation");
        }
        match pairs.iter_mut().find(|(key, _)| *key == k) {
            Some(slot) => slot.1 = v,
            None => pairs.push((k, v)),
        }
    }
    ExperimentConfig::from_entries(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lhe_core::pipeline::Mode;

    #[test]
    fn defaults_match_setup() {
        let c = ExperimentConfig::parse("sbm.n = 100").unwrap();
        assert_eq!(c.runs, 10);
        assert_eq!((c.train.lr, c.train.pretrain_lr, c.train.weight_decay), (0.01, 0.005, 0.0005));
        assert_eq!((c.train.hidden, c.train.dropout), (64, 0.6));
    }

    #[test]
    fn echo_round_trips() {
        let text = "# comment\nsbm.n = 300\nsbm.regime = overlapping\nmode = end_to_end\nlr = 0.1\ngamma = 0\nseed = 7\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.train.mode, Mode::EndToEnd);
        assert!((match &c.data {
            DataSource::Synthetic(s) => s.separation,
            _ => unreachable!(),
        } - 0.3)
            .abs()
            < 1e-15);
        let echoed = c.echo();
        let again = ExperimentConfig::parse(&echoed).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.echo(), echoed);
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            "",
            "sbm.n = 10\ndata_dir = x",
            "sbm.n = 10\nsbm.n = 11",
            "sbm.n = 10\nfoo = 1",
            "sbm.n = ten",
            "data_dir = x\ngamma = 2",
            "data_dir = x\nruns = 0",
            "data_dir = x\ndropout = 1.0",
            "data_dir = x\nno equals sign",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Usage(_))), "{text:?}");
        }
    }

    #[test]
    fn overrides_replace_file_values() {
        let dir = std::env::temp_dir().join(format!("lhe-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.txt");
        std::fs::write(&path, "sbm.n = 100\nlr = 0.5\n").unwrap();
        let c = load_with_overrides(Some(&path), &["lr=0.2".into(), "runs = 3".into()]).unwrap();
        assert_eq!((c.train.lr, c.runs), (0.2, 3));
        let c = load_with_overrides(Some(&path), &["data_dir=somewhere".into()]).unwrap();
        assert_eq!(c.data, DataSource::Dir("somewhere".into()));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
