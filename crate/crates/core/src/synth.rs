//! Stochastic block model graphs with a target edge homophily ratio and
//! Gaussian class-conditional features.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Split};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor2;
use crate::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.48;
pub const VAL_FRACTION: f64 = 0.32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n: usize,
    pub classes: usize,
    /// Expected fraction of same-class edges.
    pub homophily: f64,
    pub mean_degree: f64,
    pub features: usize,
    /// Distance between any two class centers.
    pub separation: f64,
    /// Noise scale: each coordinate gets `N(0, noise²/features)`, so the
    /// expected squared norm of a node's noise vector is `noise²`.
    pub noise: f64,
    pub seed: u64,
    /// Optional symmetric weights for choosing the class pair of a
    /// cross-class edge; uniform over pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_weights: Option<Vec<Vec<f64>>>,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            n: 1000,
            classes: 5,
            homophily: 0.2,
            mean_degree: 10.0,
            features: 32,
            separation: 5.0,
            noise: 1.0,
            seed: 0,
            cross_weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureRegime {
    /// Class centers far apart relative to the noise.
    Separated,
    /// Centers closer than the noise scale.
    Overlapping,
}

impl SbmSpec {
    /// Sets `separation` relative to `noise`: 5σ when separated, 0.3σ when
    /// overlapping.
    pub fn with_regime(mut self, regime: FeatureRegime) -> Self {
        self.separation = match regime {
            FeatureRegime::Separated => 5.0 * self.noise,
            FeatureRegime::Overlapping => 0.3 * self.noise,
        };
        self
    }

    pub fn edge_target(&self) -> usize {
        (self.n as f64 * self.mean_degree / 2.0).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.classes == 0 || self.n < self.classes {
            return bad(format!("need n ≥ classes ≥ 1, got n={} classes={}", self.n, self.classes));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return bad(format!("homophily {} outside [0, 1]", self.homophily));
        }
        if !(self.mean_degree >= 1.0) {
            return bad(format!("mean degree {} below 1", self.mean_degree));
        }
        if self.features < self.classes {
            return bad(format!("{} features cannot hold {} one-hot centers", self.features, self.classes));
        }
        if !(self.separation >= 0.0) || !(self.noise >= 0.0) {
            return bad("separation and noise must be non-negative".into());
        }
        if self.classes == 1 && self.homophily < 1.0 {
            return bad("a single class admits no cross-class edges".into());
        }
        if let Some(w) = &self.cross_weights {
            if w.len() != self.classes || w.iter().any(|r| r.len() != self.classes) {
                return bad("cross_weights must be classes × classes".into());
            }
            if w.iter().flatten().any(|v| !(*v >= 0.0)) {
                return bad("cross_weights must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// Node `i` belongs to class `i mod c`, so class sizes differ by at most 1.
pub fn class_of(node: usize, classes: usize) -> usize {
    node % classes
}

fn class_members(n: usize, classes: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); classes];
    for i in 0..n {
        members[class_of(i, classes)].push(i);
    }
    members
}

fn pick_pair<R: Rng>(members: &[Vec<usize>], a: usize, b: usize, rng: &mut R) -> (usize, usize) {
    let u = members[a][rng.random_range(0..members[a].len())];
    let v = members[b][rng.random_range(0..members[b].len())];
    (u.min(v), u.max(v))
}

/// Draws an SBM graph: each of the `round(n·d/2)` distinct edges is
/// same-class with probability `homophily`, otherwise cross-class; duplicates
/// and self-loops are redrawn. Splits are stratified 48/32/20 per class.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let (n, c) = (spec.n, spec.classes);
    let members = class_members(n, c);
    let m = spec.edge_target();

    let same_capacity: usize = members.iter().map(|g| g.len() * (g.len() - 1) / 2).sum();
    let total_capacity = n * (n - 1) / 2;
    let cross_capacity = total_capacity - same_capacity;
    if m > total_capacity
        || (spec.homophily == 1.0 && m > same_capacity)
        || (spec.homophily == 0.0 && m > cross_capacity)
    {
        return Err(Error::Infeasible(format!(
            "{m} edges requested; capacity {same_capacity} same-class / {cross_capacity} cross-class"
        )));
    }

    let mut cross_pairs = Vec::new();
    let mut cross_cumulative = Vec::new();
    let mut acc = 0.0;
    for a in 0..c {
        for b in a + 1..c {
            let w = spec.cross_weights.as_ref().map_or(1.0, |w| w[a][b]);
            if w > 0.0 {
                acc += w;
                cross_pairs.push((a, b));
                cross_cumulative.push(acc);
            }
        }
    }
    if spec.homophily < 1.0 && cross_pairs.is_empty() {
        return Err(Error::InvalidSpec("no class pair has positive cross weight".into()));
    }

    let mut rng = stream(spec.seed, Stream::Graph);
    let mut seen = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    let max_draws = 100 * m + 10_000;
    let mut draws = 0;
    while edges.len() < m {
        draws += 1;
        if draws > max_draws {
            return Err(Error::Infeasible(format!(
                "only {} of {m} distinct edges found after {max_draws} draws",
                edges.len()
            )));
        }
        let same = rng.random::<f64>() < spec.homophily;
        let (u, v) = if same {
            let class = rng.random_range(0..c);
            if members[class].len() < 2 {
                continue;
            }
            pick_pair(&members, class, class, &mut rng)
        } else {
            let r = rng.random::<f64>() * acc;
            let k = cross_cumulative.partition_point(|&cum| cum <= r).min(cross_pairs.len() - 1);
            let (a, b) = cross_pairs[k];
            pick_pair(&members, a, b, &mut rng)
        };
        if u != v && seen.insert((u, v)) {
            edges.push((u, v));
        }
    }

    let mut frng = stream(spec.seed, Stream::Features);
    let per_coord = spec.noise / (spec.features as f64).sqrt();
    let normal = Normal::new(0.0, per_coord).expect("finite noise scale");
    let corner = spec.separation / std::f64::consts::SQRT_2;
    let mut features = Tensor2::zeros(n, spec.features);
    for i in 0..n {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            *v = if per_coord > 0.0 { normal.sample(&mut frng) } else { 0.0 };
        }
        if c > 1 {
            row[class_of(i, c)] += corner;
        }
    }

    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(class_of(i, c))).collect();
    let split = Split::stratified(&labels, c, TRAIN_FRACTION, VAL_FRACTION, &mut stream(spec.seed, Stream::Split));
    let (graph, _) = Graph::build_with_classes(&edges, features, labels, split, c)?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabelScope;

    fn small(h: f64, c: usize) -> SbmSpec {
        SbmSpec { n: 200, classes: c, homophily: h, mean_degree: 6.0, features: 8, ..SbmSpec::default() }
    }

    #[test]
    fn extreme_homophily_is_exact() {
        let g = generate_sbm(&small(1.0, 4)).unwrap();
        assert_eq!(g.homophily_ratio(LabelScope::All).unwrap(), 1.0);
        let g = generate_sbm(&small(0.0, 2)).unwrap();
        assert_eq!(g.homophily_ratio(LabelScope::All).unwrap(), 0.0);
    }

    #[test]
    fn edge_count_and_balance() {
        let spec = small(0.5, 3);
        let g = generate_sbm(&spec).unwrap();
        assert_eq!(g.edge_count(), spec.edge_target());
        let mut sizes = vec![0; 3];
        for l in g.labels().iter().flatten() {
            sizes[*l] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn infeasible_requests_error() {
        let spec = SbmSpec { n: 10, classes: 2, mean_degree: 20.0, features: 2, ..SbmSpec::default() };
        assert!(matches!(generate_sbm(&spec), Err(Error::Infeasible(_))));
        let spec = SbmSpec { n: 10, classes: 5, homophily: 1.0, mean_degree: 3.0, features: 5, ..SbmSpec::default() };
        assert!(matches!(generate_sbm(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn invalid_specs_error() {
        let spec = SbmSpec { features: 2, classes: 3, ..small(0.5, 3) };
        assert!(matches!(generate_sbm(&spec), Err(Error::InvalidSpec(_))));
        let spec = SbmSpec { homophily: 1.5, ..small(0.5, 3) };
        assert!(matches!(generate_sbm(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn zero_noise_gives_identical_in_class_features() {
        let spec = SbmSpec { noise: 0.0, separation: 2.0, ..small(0.5, 3) };
        let g = generate_sbm(&spec).unwrap();
        assert_eq!(g.features().row(0), g.features().row(3));
        assert_ne!(g.features().row(0), g.features().row(1));
        let d: f64 = g.features().row(0).iter().zip(g.features().row(1)).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((d.sqrt() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate_sbm(&small(0.3, 3)).unwrap();
        let b = generate_sbm(&small(0.3, 3)).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
        assert_eq!(a.split(), b.split());
    }
}
