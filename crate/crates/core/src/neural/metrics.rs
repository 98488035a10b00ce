use super::{argmax, Mode, Network, NnError};

/// Classification report over a labelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl Metrics {
    pub fn from_pairs(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (truth, pred) in pairs {
            confusion[truth][pred] += 1;
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let precision = (0..n_classes)
            .map(|c| {
                let predicted: usize = (0..n_classes).map(|t| confusion[t][c]).sum();
                if predicted == 0 {
                    0.0
                } else {
                    confusion[c][c] as f64 / predicted as f64
                }
            })
            .collect();
        let recall = (0..n_classes)
            .map(|c| {
                let actual: usize = confusion[c].iter().sum();
                if actual == 0 {
                    0.0
                } else {
                    confusion[c][c] as f64 / actual as f64
                }
            })
            .collect();
        Self {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            confusion,
            precision,
            recall,
        }
    }
}

pub fn evaluate<N: Network>(model: &N, data: &[(N::Input, usize)]) -> Result<Metrics, NnError> {
    let n = model.n_classes();
    let mut pairs = Vec::with_capacity(data.len());
    for (x, label) in data {
        if *label >= n {
            return Err(NnError::LabelOutOfRange {
                label: *label,
                classes: n,
            });
        }
        pairs.push((*label, argmax(&model.forward(x, Mode::Infer)?)));
    }
    Ok(Metrics::from_pairs(n, pairs))
}
