use tch::Tensor;

use crate::data::ImageBatch;
use crate::error::{Error, Result};

/// Anything that maps an image batch to predicted class indices.
pub trait Predictor {
    fn predict(&self, batch: &ImageBatch) -> Result<Vec<i64>>;
}

/// Correct predictions over total.
pub fn accuracy(predictions: &[i64], labels: &[i64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptySplit("cannot score an empty split".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Row-wise argmax of a `(N, C)` score tensor.
pub fn argmax_rows(scores: &Tensor) -> Result<Vec<i64>> {
    Ok(Vec::<i64>::try_from(&scores.argmax(-1, false))?)
}

/// Accuracy of `model` over pre-built batches whose labels are set.
pub fn evaluate(model: &dyn Predictor, batches: &[ImageBatch]) -> Result<f64> {
    let (mut predictions, mut labels) = (Vec::new(), Vec::new());
    for batch in batches {
        let Some(l) = &batch.labels else {
            return Err(Error::InvalidArgument("evaluation batches need labels".into()));
        };
        predictions.extend(model.predict(batch)?);
        labels.extend_from_slice(l);
    }
    accuracy(&predictions, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_ratio() {
        assert_eq!(accuracy(&[0, 1, 2, 0, 1, 2, 0, 1], &[0, 1, 2, 0, 1, 0, 1, 2]).unwrap(), 0.625);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn argmax_picks_largest_column() {
        let s = Tensor::from_slice(&[0.1f32, 0.7, 0.2, 0.9, 0.05, 0.05]).view([2, 3]);
        assert_eq!(argmax_rows(&s).unwrap(), vec![1, 0]);
    }
}
