//! Damping sensitivity identification from windowed measurements.
//!
//! Consecutive 1 Hz samples are differenced into `dzeta = dX * psi + noise` and
//! `psi` is fitted by weighted ridge regression. The noise-assisted ensemble
//! repeats the fit on copies of `dX` jittered with Gaussian noise and takes the
//! entrywise median.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::feature::Feature;
use crate::grid::NetworkCase;
use crate::modal::Mode;

/// Regression samples collected since the last dispatch completed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    feature_ids: Vec<String>,
    dx: Vec<Vec<f64>>,
    dzeta: Vec<f64>,
    times: Vec<f64>,
    boundary: f64,
    last_level: Option<(f64, Vec<f64>, f64)>,
}

impl SampleWindow {
    pub fn new(feature_ids: Vec<String>) -> Self {
        Self {
            feature_ids,
            dx: Vec::new(),
            dzeta: Vec::new(),
            times: Vec::new(),
            boundary: f64::NEG_INFINITY,
            last_level: None,
        }
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    /// Appends one differenced sample. Samples stamped before the window start are
    /// evicted.
    pub fn push(&mut self, dx: &[f64], dzeta: f64, t: f64) -> Result<()> {
        if dx.len() != self.feature_ids.len() {
            return Err(Error::InvalidInput(format!(
                "sample has {} features, window has {}",
                dx.len(),
                self.feature_ids.len()
            )));
        }
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Ordering { last, got: t });
            }
        }
        self.evict();
        self.dx.push(dx.to_vec());
        self.dzeta.push(dzeta);
        self.times.push(t);
        Ok(())
    }

    /// Records a raw measurement; once a previous measurement inside the window
    /// exists, their difference is pushed as a sample.
    pub fn push_level(&mut self, x: &[f64], zeta: f64, t: f64) -> Result<()> {
        if let Some((t0, x0, z0)) = &self.last_level {
            if !(t > *t0) {
                return Err(Error::Ordering { last: *t0, got: t });
            }
            if *t0 >= self.boundary {
                let dx: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
                let dz = zeta - z0;
                self.push(&dx, dz, t)?;
            }
        }
        self.last_level = Some((t, x.to_vec(), zeta));
        Ok(())
    }

    /// Moves the window start; older samples go on the next push.
    pub fn set_boundary(&mut self, t: f64) {
        self.boundary = t;
    }

    /// Drops every sample, e.g. after a topology change.
    pub fn clear(&mut self) {
        self.dx.clear();
        self.dzeta.clear();
        self.times.clear();
        self.last_level = None;
    }

    fn evict(&mut self) {
        let keep = self.times.iter().position(|&t| t >= self.boundary).unwrap_or(self.times.len());
        if keep > 0 {
            self.dx.drain(..keep);
            self.dzeta.drain(..keep);
            self.times.drain(..keep);
        }
    }

    /// Design matrix and response over the samples inside the window.
    pub fn design(&self) -> (DMatrix<f64>, DVector<f64>) {
        let start = self.times.iter().position(|&t| t >= self.boundary).unwrap_or(self.times.len());
        let rows = &self.dx[start..];
        let m = self.feature_ids.len();
        let x = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        let y = DVector::from_column_slice(&self.dzeta[start..]);
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub ridge_k: f64,
    /// Exponential forgetting factor in (0, 1].
    pub forgetting: f64,
    pub ensemble: usize,
    /// Jitter std as a fraction of each column's std.
    pub noise_fraction: f64,
    pub seed: u64,
    /// Estimates whose normal matrix is worse conditioned than this are flagged.
    pub condition_cap: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ridge_k: 0.0,
            forgetting: 0.99,
            ensemble: 100,
            noise_fraction: 0.1,
            seed: 0,
            condition_cap: 1e8,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_k >= 0.0) {
            return Err(Error::InvalidInput("ridge coefficient must be non-negative".into()));
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::InvalidInput("forgetting factor must lie in (0, 1]".into()));
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidInput("ensemble size must be at least 1".into()));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(Error::InvalidInput("ensemble noise fraction must be non-negative".into()));
        }
        Ok(())
    }

    /// Weights `lambda^(N - i)` for samples `i = 1..N`.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![1.0; n];
        for i in (0..n.saturating_sub(1)).rev() {
            w[i] = w[i + 1] * self.forgetting;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEstimate {
    pub psi: Vec<f64>,
    pub feature_ids: Vec<String>,
    pub samples: usize,
    /// Condition number of the unperturbed normal matrix.
    pub condition: f64,
    /// Per-feature std across ensemble replicates.
    pub spread: Vec<f64>,
    /// Replicates that produced a usable fit.
    pub replicates: usize,
    pub seed: u64,
    /// Set when the data are too poorly conditioned to act on.
    pub flagged: bool,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, e| a.min(e.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimizer of `|X psi - y|_W^2 + k |psi|^2`; returns `(psi, condition)`.
pub fn weighted_ridge(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], k: f64) -> Result<(DVector<f64>, f64)> {
    let (n, m) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidInput(format!(
            "design has {n} rows but response {} and weights {}",
            y.len(),
            w.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidInput("design matrix has no columns".into()));
    }
    let wx = DMatrix::from_fn(n, m, |i, j| w[i] * x[(i, j)]);
    let mut normal = x.transpose() * &wx;
    for i in 0..m {
        normal[(i, i)] += k;
    }
    let rhs = wx.transpose() * y;
    let condition = condition_number(&normal);
    if !(condition < 1e15) {
        return Err(Error::Singular { condition });
    }
    let psi = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => normal.lu().solve(&rhs).ok_or(Error::Singular { condition })?,
    };
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { condition });
    }
    Ok((psi, condition))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn column_std(x: &DMatrix<f64>, j: usize) -> f64 {
    let n = x.nrows();
    if n == 0 {
        return 0.0;
    }
    let col = x.column(j);
    let mean = col.sum() / n as f64;
    libm::sqrt(col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64)
}

/// Noise-assisted ensemble regression over the window.
pub fn naer_estimate(window: &SampleWindow, cfg: &EstimatorConfig) -> Result<SensitivityEstimate> {
    cfg.validate()?;
    let (x, y) = window.design();
    let (n, m) = x.shape();
    if n == 0 {
        return Err(Error::Estimation("sample window is empty".into()));
    }
    if n < m && cfg.ridge_k == 0.0 {
        return Err(Error::Estimation(format!("{n} samples cannot identify {m} features without ridge")));
    }
    let w = cfg.weights(n);
    let condition = match weighted_ridge(&x, &y, &w, cfg.ridge_k) {
        Ok((_, c)) => c,
        Err(Error::Singular { condition }) => condition,
        Err(e) => return Err(e),
    };

    let std: Vec<f64> = (0..m).map(|j| cfg.noise_fraction * column_std(&x, j)).collect();
    let mut fits: Vec<Vec<f64>> = (0..m).map(|_| Vec::with_capacity(cfg.ensemble)).collect();
    let mut replicates = 0;
    for r in 0..cfg.ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let mut xr = x.clone();
        for j in 0..m {
            if std[j] > 0.0 {
                let noise = Normal::new(0.0, std[j]).map_err(|e| Error::Estimation(format!("{e}")))?;
                for i in 0..n {
                    xr[(i, j)] += noise.sample(&mut rng);
                }
            }
        }
        if let Ok((psi, _)) = weighted_ridge(&xr, &y, &w, cfg.ridge_k) {
            replicates += 1;
            for j in 0..m {
                fits[j].push(psi[j]);
            }
        }
    }
    if replicates == 0 {
        return Err(Error::Estimation("every ensemble replicate was singular".into()));
    }
    let mut psi = Vec::with_capacity(m);
    let mut spread = Vec::with_capacity(m);
    for f in &mut fits {
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        spread.push(libm::sqrt(f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f.len() as f64));
        psi.push(median(f));
    }
    Ok(SensitivityEstimate {
        psi,
        feature_ids: window.feature_ids().to_vec(),
        samples: n,
        condition,
        spread,
        replicates,
        seed: cfg.seed,
        flagged: !(condition <= cfg.condition_cap),
    })
}

/// Narrows the regression inputs to at most `budget` features.
///
/// Non-dispatchable machines and the slack machine are dropped, generators sharing
/// a station become one feature, and the features with the largest rotor-speed
/// participation in `mode` are kept. The result keeps case order.
pub fn reduce_features(case: &NetworkCase, mode: &Mode, budget: usize) -> Result<Vec<Feature>> {
    if budget < 2 {
        return Err(Error::FeatureReduction("feature budget must be at least 2".into()));
    }
    if mode.participation.len() != case.generators.len() {
        return Err(Error::FeatureReduction("mode does not belong to this case".into()));
    }
    let slack = case.slack_generator();
    let mut stations: BTreeMap<&str, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, g) in case.generators.iter().enumerate() {
        if !g.dispatchable || Some(i) == slack {
            continue;
        }
        match stations.get(g.station.as_str()) {
            Some(&s) => groups[s].push(i),
            None => {
                stations.insert(g.station.as_str(), groups.len());
                groups.push(alloc::vec![i]);
            }
        }
    }
    if groups.len() < 2 {
        return Err(Error::FeatureReduction(format!(
            "only {} dispatchable feature(s) available",
            groups.len()
        )));
    }
    let score = |members: &[usize]| members.iter().map(|&g| mode.participation[g]).sum::<f64>();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| score(&groups[b]).total_cmp(&score(&groups[a])).then(a.cmp(&b)));
    order.truncate(budget);
    order.sort_unstable();
    Ok(order
        .into_iter()
        .map(|s| {
            let members = &groups[s];
            let id = if members.len() == 1 {
                NetworkCase::generator_label(members[0])
            } else {
                case.generators[members[0]].station.clone()
            };
            Feature {
                id,
                generators: members.clone(),
            }
        })
        .collect())
}
