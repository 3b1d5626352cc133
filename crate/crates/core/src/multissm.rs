//! Coupling structure of a multi-dataset model.
//!
//! Parameters live in one global vector of length `K`. Dataset `l` uses the
//! sorted index set `I[l]`; its local parameter vector lists those entries in
//! ascending global order. Indices are zero-based throughout.

use serde::{Deserialize, Serialize};

use crate::conjugacy::{ConjugateFamily, HyperParams, StatIncrement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSsmSpec {
    index_sets: Vec<Vec<usize>>,
    families: Vec<ConjugateFamily>,
    priors: Vec<HyperParams>,
    names: Vec<String>,
    model_refs: Vec<String>,
}

impl MultiSsmSpec {
    /// Index sets may be given in any order; duplicates and out-of-range
    /// indices are rejected.
    pub fn new(
        index_sets: Vec<Vec<usize>>,
        families: Vec<ConjugateFamily>,
        priors: Vec<HyperParams>,
        names: Vec<String>,
        model_refs: Vec<String>,
    ) -> Result<Self> {
        let k = families.len();
        if priors.len() != k {
            return Err(Error::Dimension { expected: k, got: priors.len() });
        }
        if names.len() != k {
            return Err(Error::Dimension { expected: k, got: names.len() });
        }
        if model_refs.len() != index_sets.len() {
            return Err(Error::Dimension { expected: index_sets.len(), got: model_refs.len() });
        }
        if index_sets.is_empty() {
            return Err(Error::Config("a model needs at least one dataset".into()));
        }
        for h in &priors {
            HyperParams::new(h.alpha, h.beta)?;
        }
        let mut sorted_sets = Vec::with_capacity(index_sets.len());
        for (l, set) in index_sets.into_iter().enumerate() {
            let mut s = set;
            s.sort_unstable();
            let before = s.len();
            s.dedup();
            if s.is_empty() {
                return Err(Error::Config(format!("dataset {l} uses no parameters")));
            }
            if s.len() != before {
                return Err(Error::Config(format!("dataset {l} lists a parameter twice")));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= k) {
                return Err(Error::Config(format!("dataset {l} references parameter {bad}, only {k} exist")));
            }
            sorted_sets.push(s);
        }
        let spec = MultiSsmSpec {
            index_sets: sorted_sets,
            families,
            priors,
            names,
            model_refs,
        };
        for l in spec.disconnected_datasets() {
            log::warn!("dataset {l} shares no parameter with any other dataset");
        }
        Ok(spec)
    }

    pub fn dataset_count(&self) -> usize {
        self.index_sets.len()
    }

    pub fn param_count(&self) -> usize {
        self.families.len()
    }

    pub fn index_set(&self, l: usize) -> &[usize] {
        &self.index_sets[l]
    }

    pub fn local_dim(&self, l: usize) -> usize {
        self.index_sets[l].len()
    }

    pub fn families(&self) -> &[ConjugateFamily] {
        &self.families
    }

    pub fn priors(&self) -> &[HyperParams] {
        &self.priors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn model_ref(&self, l: usize) -> &str {
        &self.model_refs[l]
    }

    pub fn uses(&self, l: usize, k: usize) -> bool {
        self.index_sets[l].binary_search(&k).is_ok()
    }

    /// Global indices used by both datasets.
    pub fn shared(&self, j: usize, l: usize) -> Vec<usize> {
        self.index_sets[j].iter().copied().filter(|&k| self.uses(l, k)).collect()
    }

    /// Datasets that share no parameter with any other dataset. Empty for a
    /// single-dataset model.
    pub fn disconnected_datasets(&self) -> Vec<usize> {
        let n = self.dataset_count();
        if n < 2 {
            return Vec::new();
        }
        (0..n)
            .filter(|&l| (0..n).all(|j| j == l || self.shared(j, l).is_empty()))
            .collect()
    }

    fn check_dataset(&self, l: usize) -> Result<()> {
        if l < self.dataset_count() {
            Ok(())
        } else {
            Err(Error::invalid(format!("dataset {l} out of range")))
        }
    }

    /// Local vector to global vector, zero outside the dataset's index set.
    pub fn expand<T: Copy + Default>(&self, l: usize, v: &[T]) -> Result<Vec<T>> {
        self.check_dataset(l)?;
        let set = &self.index_sets[l];
        if v.len() != set.len() {
            return Err(Error::Dimension { expected: set.len(), got: v.len() });
        }
        let mut out = vec![T::default(); self.param_count()];
        for (&k, &x) in set.iter().zip(v) {
            out[k] = x;
        }
        Ok(out)
    }

    /// Global vector to the dataset's local vector.
    pub fn reduce<T: Copy>(&self, l: usize, v: &[T]) -> Result<Vec<T>> {
        self.check_dataset(l)?;
        if v.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: v.len() });
        }
        Ok(self.index_sets[l].iter().map(|&k| v[k]).collect())
    }

    /// `reduce(l, expand(j, v))`.
    pub fn map_between<T: Copy + Default>(&self, j: usize, l: usize, v: &[T]) -> Result<Vec<T>> {
        let g = self.expand(j, v)?;
        self.reduce(l, &g)
    }

    /// Prior plus the statistics of every other dataset, in global indexing.
    /// Entries outside the dataset's index set hold the raw prior.
    pub fn informed_prior_global(&self, l: usize, others: &[&DatasetStats]) -> Result<Vec<HyperParams>> {
        self.check_dataset(l)?;
        if let Some(s) = others.iter().find(|s| s.dataset == l) {
            return Err(Error::invalid(format!("statistics of dataset {} passed as another dataset", s.dataset)));
        }
        // Sum in ascending dataset order so the result does not depend on the
        // order of `others`.
        let mut sorted: Vec<&DatasetStats> = others.to_vec();
        sorted.sort_by_key(|s| s.dataset);
        let mut hyper = self.priors.clone();
        for s in sorted {
            for &k in &self.index_sets[l] {
                hyper[k] = hyper[k] + s.stats[k];
            }
        }
        Ok(hyper)
    }

    /// Local view of [`MultiSsmSpec::informed_prior_global`].
    pub fn informed_prior(&self, l: usize, others: &[&DatasetStats]) -> Result<Vec<HyperParams>> {
        let g = self.informed_prior_global(l, others)?;
        self.reduce(l, &g)
    }

    /// Prior plus the statistics of all datasets, for a full parameter draw.
    pub fn posterior_hyper(&self, stats: &[DatasetStats]) -> Vec<HyperParams> {
        let mut hyper = self.priors.clone();
        for s in stats {
            for (h, inc) in hyper.iter_mut().zip(&s.stats) {
                *h = *h + *inc;
            }
        }
        hyper
    }
}

/// Total statistics of one dataset in global indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub dataset: usize,
    stats: Vec<StatIncrement>,
}

impl DatasetStats {
    pub fn zero(spec: &MultiSsmSpec, dataset: usize) -> Self {
        DatasetStats {
            dataset,
            stats: vec![StatIncrement::ZERO; spec.param_count()],
        }
    }

    /// Fails when an entry outside the dataset's index set is nonzero.
    pub fn new(spec: &MultiSsmSpec, dataset: usize, stats: Vec<StatIncrement>) -> Result<Self> {
        spec.check_dataset(dataset)?;
        if stats.len() != spec.param_count() {
            return Err(Error::Dimension { expected: spec.param_count(), got: stats.len() });
        }
        if let Some(k) = (0..stats.len()).find(|&k| !spec.uses(dataset, k) && !stats[k].is_zero()) {
            return Err(Error::invalid(format!("dataset {dataset} has statistics for unused parameter {k}")));
        }
        Ok(DatasetStats { dataset, stats })
    }

    pub fn stats(&self) -> &[StatIncrement] {
        &self.stats
    }
}
