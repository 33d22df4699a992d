//! Data sources that hand out fresh batches to the iterative stages.

use rand::seq::index;

use crate::error::{MlrError, Result};
use crate::model::{sample_dataset, Dataset, MixtureModel};
use crate::rng::{seeded, MlrRng};

pub trait BatchSource {
    fn dim(&self) -> usize;

    /// A batch of exactly `m` rows with no hidden component ids attached.
    fn next_batch(&mut self, m: usize) -> Result<Dataset>;

    /// Total rows handed out so far.
    fn rows_drawn(&self) -> usize;
}

fn exhausted(stage: &'static str, reason: String) -> MlrError {
    MlrError::Exhausted {
        stage,
        reason,
        partial: None,
    }
}

/// Draws each batch uniformly without replacement from a fixed dataset.
/// Distinct calls may reuse rows.
#[derive(Debug, Clone)]
pub struct SubsampleSource<'a> {
    data: &'a Dataset,
    rng: MlrRng,
    budget: Option<usize>,
    drawn: usize,
}

impl<'a> SubsampleSource<'a> {
    pub fn new(data: &'a Dataset, seed: u64) -> Result<Self> {
        if data.has_hidden() {
            return Err(MlrError::HiddenLabels);
        }
        Ok(SubsampleSource {
            data,
            rng: seeded(seed),
            budget: None,
            drawn: 0,
        })
    }

    /// Cap the total number of rows this source will hand out.
    pub fn with_budget(mut self, rows: usize) -> Self {
        self.budget = Some(rows);
        self
    }

    pub fn available(&self) -> usize {
        self.data.len()
    }
}

impl BatchSource for SubsampleSource<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn next_batch(&mut self, m: usize) -> Result<Dataset> {
        if m == 0 {
            return Err(MlrError::param("batch size must be at least 1"));
        }
        if m > self.data.len() {
            return Err(exhausted(
                "subsample",
                format!("batch of {m} requested from {} rows", self.data.len()),
            ));
        }
        if let Some(b) = self.budget {
            if self.drawn + m > b {
                return Err(exhausted("subsample", format!("row budget {b} spent")));
            }
        }
        let mut picks = index::sample(&mut self.rng, self.data.len(), m).into_vec();
        picks.sort_unstable();
        self.drawn += m;
        Ok(self.data.select(&picks))
    }

    fn rows_drawn(&self) -> usize {
        self.drawn
    }
}

/// Fresh i.i.d. rows straight from a generative model.
#[derive(Debug, Clone)]
pub struct ModelSource<'a> {
    model: &'a MixtureModel,
    rng: MlrRng,
    budget: Option<usize>,
    drawn: usize,
}

impl<'a> ModelSource<'a> {
    pub fn new(model: &'a MixtureModel, seed: u64) -> Self {
        ModelSource {
            model,
            rng: seeded(seed),
            budget: None,
            drawn: 0,
        }
    }

    pub fn with_budget(mut self, rows: usize) -> Self {
        self.budget = Some(rows);
        self
    }
}

impl BatchSource for ModelSource<'_> {
    fn dim(&self) -> usize {
        self.model.d()
    }

    fn next_batch(&mut self, m: usize) -> Result<Dataset> {
        if let Some(b) = self.budget {
            if self.drawn + m > b {
                return Err(exhausted("model sampler", format!("row budget {b} spent")));
            }
        }
        let data = sample_dataset(self.model, m, &mut self.rng)?;
        self.drawn += m;
        Ok(data.strip_hidden().0)
    }

    fn rows_drawn(&self) -> usize {
        self.drawn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBounds;
    use nalgebra::DVector;

    fn model() -> MixtureModel {
        MixtureModel::isotropic(vec![1.0], vec![DVector::from_vec(vec![1.0, 0.0])], ModelBounds::default()).unwrap()
    }

    #[test]
    fn rejects_labeled_data() {
        let m = model();
        let data = sample_dataset(&m, 10, &mut seeded(0)).unwrap();
        assert!(matches!(SubsampleSource::new(&data, 0), Err(MlrError::HiddenLabels)));
    }

    #[test]
    fn subsample_draws_distinct_rows_and_respects_budget() {
        let m = model();
        let data = sample_dataset(&m, 50, &mut seeded(0)).unwrap().strip_hidden().0;
        let mut src = SubsampleSource::new(&data, 1).unwrap().with_budget(60);
        let batch = src.next_batch(40).unwrap();
        assert_eq!(batch.len(), 40);
        let mut firsts: Vec<u64> = batch.rows().map(|(x, _)| x[0].to_bits()).collect();
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), 40);
        assert!(src.next_batch(40).unwrap_err().is_exhausted());
        assert!(src.next_batch(51).unwrap_err().is_exhausted());
        assert_eq!(src.rows_drawn(), 40);
    }

    #[test]
    fn model_source_strips_labels() {
        let m = model();
        let mut src = ModelSource::new(&m, 3).with_budget(100);
        assert!(!src.next_batch(100).unwrap().has_hidden());
        assert!(src.next_batch(1).unwrap_err().is_exhausted());
    }
}
