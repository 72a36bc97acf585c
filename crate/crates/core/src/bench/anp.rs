use serde::{Deserialize, Serialize};

use super::BenchError;

/// Raw scores indexed `[metric][dataset][model]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTensor {
    pub metrics: Vec<String>,
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    values: Vec<f64>,
}

impl PerformanceTensor {
    pub fn new(metrics: Vec<String>, datasets: Vec<String>, models: Vec<String>, values: Vec<f64>) -> Result<Self, BenchError> {
        if values.len() != metrics.len() * datasets.len() * models.len() {
            return Err(BenchError::ShapeMismatch("performance tensor"));
        }
        let t = PerformanceTensor {
            metrics,
            datasets,
            models,
            values,
        };
        for m in 0..t.metrics.len() {
            for d in 0..t.datasets.len() {
                for k in 0..t.models.len() {
                    if !t.get(m, d, k).is_finite() {
                        return Err(BenchError::NonFinite((m, d, k)));
                    }
                }
            }
        }
        Ok(t)
    }

    pub fn get(&self, metric: usize, dataset: usize, model: usize) -> f64 {
        self.values[(metric * self.datasets.len() + dataset) * self.models.len() + model]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.metrics.len(), self.datasets.len(), self.models.len()]
    }
}

/// Accumulated normalized performance: every `(metric, dataset)` slice is
/// min-max normalized across models and the normalized scores are summed
/// per model. A slice whose scores are all equal contributes 0.
pub fn anp(p: &PerformanceTensor) -> Result<Vec<f64>, BenchError> {
    let [nm, nd, nk] = p.shape();
    if nk < 2 {
        return Err(BenchError::TooFewModels(nk));
    }
    let mut total = vec![0.0; nk];
    for m in 0..nm {
        for d in 0..nd {
            let slice: Vec<f64> = (0..nk).map(|k| p.get(m, d, k)).collect();
            let lo = slice.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                continue;
            }
            for (t, v) in total.iter_mut().zip(&slice) {
                *t += (v - lo) / (hi - lo);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_slice(values: Vec<f64>) -> PerformanceTensor {
        let models = (0..values.len()).map(|i| format!("m{i}")).collect();
        PerformanceTensor::new(vec!["mcc".into()], vec!["d".into()], models, values).unwrap()
    }

    #[test]
    fn two_point_slice() {
        assert_eq!(anp(&one_slice(vec![0.2, 0.6])).unwrap(), vec![0.0, 1.0]);
        assert_eq!(anp(&one_slice(vec![0.4, 0.4])).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(anp(&one_slice(vec![0.4])), Err(BenchError::TooFewModels(1))));
        assert!(PerformanceTensor::new(vec!["a".into()], vec!["b".into()], vec!["c".into()], vec![f64::NAN]).is_err());
    }
}
