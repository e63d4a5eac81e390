use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::NetworkCase;

/// One regression / re-dispatch variable: a single generator or a whole station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub id: String,
    /// Member generator indices into `NetworkCase::generators`.
    pub generators: Vec<usize>,
}

impl Feature {
    pub fn single(id: impl Into<String>, generator: usize) -> Self {
        Self {
            id: id.into(),
            generators: vec![generator],
        }
    }

    /// Aggregate active power of the members.
    pub fn value(&self, gen_p: &[f64]) -> f64 {
        self.generators.iter().map(|&g| gen_p[g]).sum()
    }

    pub fn capacity(&self, case: &NetworkCase) -> f64 {
        self.generators.iter().map(|&g| case.generators[g].p_max).sum()
    }

    /// Splits a feature-level increment across members by capacity share.
    pub fn spread(&self, case: &NetworkCase, amount: f64, gen_p: &mut [f64]) {
        let cap = self.capacity(case);
        for &g in &self.generators {
            gen_p[g] += amount * case.generators[g].p_max / cap;
        }
    }
}

/// Every dispatchable, non-slack generator as its own feature.
pub fn generator_features(case: &NetworkCase) -> Vec<Feature> {
    let slack = case.slack_generator();
    case.generators
        .iter()
        .enumerate()
        .filter(|(i, g)| g.dispatchable && Some(*i) != slack)
        .map(|(i, _)| Feature::single(NetworkCase::generator_label(i), i))
        .collect()
}
