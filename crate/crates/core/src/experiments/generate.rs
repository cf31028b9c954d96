use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::model::Instance;
use crate::seeding;

/// How user-type probabilities are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistKind {
    /// `r_j ~ Uniform(0, 1]`, normalized.
    RandomNormalization,
    /// `r_j = 1/n + ε` with `ε ~ Normal(0, (1/(6n))²)`, resampled while
    /// `r_j ≤ 0`, normalized.
    GaussPerturbation,
}

/// How the `n·d` targeting edges are placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeMode {
    /// Every user type targets exactly `d` distinct campaigns.
    ExactPerType,
    /// `n·d` distinct edges drawn uniformly from all campaign/type pairs.
    UniformEdges,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub m: usize,
    pub n: usize,
    pub avg_degree: usize,
    /// Inclusive range of campaign demands.
    pub demand_range: (u64, u64),
    pub dist_kind: DistKind,
    pub degree_mode: DegreeMode,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Desk-scale defaults: 50 campaigns, 100 types, degree 5, demands in
    /// `[50, 100]`.
    pub fn desk(seed: u64) -> Self {
        Self {
            m: 50,
            n: 100,
            avg_degree: 5,
            demand_range: (50, 100),
            dist_kind: DistKind::RandomNormalization,
            degree_mode: DegreeMode::ExactPerType,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if self.m == 0 || self.n == 0 {
            return fail("m and n must be positive".into());
        }
        if self.avg_degree < 1 || self.avg_degree > self.m {
            return fail(format!("degree {} must lie in [1, m = {}]", self.avg_degree, self.m));
        }
        let (lo, hi) = self.demand_range;
        if lo < 1 || lo > hi {
            return fail(format!("demand range [{lo}, {hi}] must satisfy 1 <= lo <= hi"));
        }
        Ok(())
    }
}

/// A generated instance with the number of campaigns that had no edge and
/// were attached to a random user type.
#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub instance: Instance,
    pub repairs: usize,
}

pub fn generate_instance(config: &GeneratorConfig) -> Result<GeneratedInstance, ConfigError> {
    config.check()?;
    let (m, n, d) = (config.m, config.n, config.avg_degree);
    let mut rng = seeding::stream(config.seed, "instance-gen", &[]);

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * d + m);
    match config.degree_mode {
        DegreeMode::ExactPerType => {
            for j in 0..n {
                let mut picked = index::sample(&mut rng, m, d).into_vec();
                picked.sort_unstable();
                edges.extend(picked.into_iter().map(|i| (i, j)));
            }
        }
        DegreeMode::UniformEdges => {
            let mut picked = index::sample(&mut rng, m * n, n * d).into_vec();
            picked.sort_unstable();
            edges.extend(picked.into_iter().map(|k| (k / n, k % n)));
        }
    }
    let mut degree = vec![0usize; m];
    for &(i, _) in &edges {
        degree[i] += 1;
    }
    let mut repairs = 0;
    for (i, &deg) in degree.iter().enumerate() {
        if deg == 0 {
            edges.push((i, rng.random_range(0..n)));
            repairs += 1;
        }
    }

    let (lo, hi) = config.demand_range;
    let demands: Vec<u64> = (0..m).map(|_| rng.random_range(lo..=hi)).collect();

    let raw: Vec<f64> = match config.dist_kind {
        DistKind::RandomNormalization => (0..n).map(|_| 1.0 - rng.random::<f64>()).collect(),
        DistKind::GaussPerturbation => {
            let mean = 1.0 / n as f64;
            let normal = Normal::new(mean, mean / 6.0).expect("positive standard deviation");
            (0..n)
                .map(|_| loop {
                    let r = normal.sample(&mut rng);
                    if r > 0.0 {
                        break r;
                    }
                })
                .collect()
        }
    };
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|r| r / total).collect();

    let instance = Instance::new(demands, probs, edges)
        .map_err(|e| ConfigError(format!("generated instance is invalid: {e}")))?;
    Ok(GeneratedInstance { instance, repairs })
}
