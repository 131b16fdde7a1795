//! Dormant-neuron scoring and the network dormant ratio.
//!
//! A neuron's score is its batch-mean absolute activation divided by the
//! layer average of that quantity. Neurons scoring at or below `tau` are
//! dormant; the ratio pools dormant counts over every counted layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ForwardTrace;

pub const DEFAULT_TAU: f64 = 0.025;
pub const DEFAULT_EMA_DECAY: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDormancy {
    pub layer_index: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub neuron_scores: Vec<f64>,
    pub dormant_count: usize,
    pub neuron_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DormantReport {
    pub per_layer: Vec<LayerDormancy>,
    pub ratio: f64,
    pub tau: f64,
}

impl DormantReport {
    pub fn dormant_count(&self) -> usize {
        self.per_layer.iter().map(|l| l.dormant_count).sum()
    }

    pub fn neuron_count(&self) -> usize {
        self.per_layer.iter().map(|l| l.neuron_count).sum()
    }

    /// Drops the per-neuron scores, keeping counts. Used for metrics records.
    pub fn without_scores(mut self) -> Self {
        for l in &mut self.per_layer {
            l.neuron_scores.clear();
        }
        self
    }
}

/// Scores every layer selected by `counted_layers` and aggregates the ratio.
///
/// A layer whose mean absolute activation is exactly zero has all of its
/// neurons declared dormant with score 0.
pub fn compute_dormant_report(
    trace: &ForwardTrace,
    counted_layers: &[bool],
    tau: f64,
) -> Result<DormantReport> {
    if !(tau >= 0.0) {
        return Err(Error::usage(format!("tau must be non-negative, got {tau}")));
    }
    if counted_layers.len() != trace.outputs.len() {
        return Err(Error::shape(format!(
            "layer mask has {} entries, trace has {} layers",
            counted_layers.len(),
            trace.outputs.len()
        )));
    }
    let batch = trace.batch_size();
    if batch == 0 {
        return Err(Error::usage("dormant ratio needs a non-empty batch"));
    }

    let mut per_layer = Vec::new();
    for (layer_index, out) in trace.outputs.iter().enumerate() {
        if !counted_layers[layer_index] {
            continue;
        }
        let width = out.cols();
        let mut mean_abs = vec![0.0f64; width];
        for r in 0..batch {
            for (acc, v) in mean_abs.iter_mut().zip(out.row(r)) {
                *acc += v.abs();
            }
        }
        mean_abs.iter_mut().for_each(|m| *m /= batch as f64);
        let layer_mean = mean_abs.iter().sum::<f64>() / width as f64;

        let (neuron_scores, dormant_count) = if layer_mean == 0.0 {
            (vec![0.0; width], width)
        } else {
            let scores: Vec<f64> = mean_abs.iter().map(|m| m / layer_mean).collect();
            let dormant = scores.iter().filter(|s| **s <= tau).count();
            (scores, dormant)
        };
        per_layer.push(LayerDormancy {
            layer_index,
            neuron_scores,
            dormant_count,
            neuron_count: width,
        });
    }

    let total: usize = per_layer.iter().map(|l| l.neuron_count).sum();
    let dormant: usize = per_layer.iter().map(|l| l.dormant_count).sum();
    let ratio = if total == 0 {
        0.0
    } else {
        dormant as f64 / total as f64
    };
    Ok(DormantReport {
        per_layer,
        ratio,
        tau,
    })
}

/// Exponential moving average of the dormant ratio; the first sample seeds it.
pub fn update_dormant_ema(prev_ema: Option<f64>, new_ratio: f64, decay: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::usage(format!("EMA decay {decay} outside [0, 1)")));
    }
    if !(0.0..=1.0).contains(&new_ratio) {
        return Err(Error::usage(format!(
            "dormant ratio {new_ratio} outside [0, 1]"
        )));
    }
    match prev_ema {
        None => Ok(new_ratio),
        Some(prev) if (0.0..=1.0).contains(&prev) => Ok(decay * prev + (1.0 - decay) * new_ratio),
        Some(prev) => Err(Error::usage(format!("previous EMA {prev} outside [0, 1]"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor2;

    fn trace_of(layers: Vec<Tensor2>) -> ForwardTrace {
        let batch = layers[0].rows();
        ForwardTrace {
            input: Tensor2::zeros(batch, 1),
            outputs: layers,
        }
    }

    #[test]
    fn hand_evaluated_single_layer() {
        // Batch of two whose mean |h| is [0, 1, 1, 1].
        let h = Tensor2::from_rows(&[[0.0, 1.0, -2.0, 0.5], [0.0, -1.0, 0.0, 1.5]]).unwrap();
        let report = compute_dormant_report(&trace_of(vec![h]), &[true], 0.025).unwrap();
        let scores = &report.per_layer[0].neuron_scores;
        assert_eq!(scores[0], 0.0);
        for s in &scores[1..] {
            assert!((s - 4.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(report.per_layer[0].dormant_count, 1);
        assert_eq!(report.ratio, 0.25);
    }

    #[test]
    fn uniform_activation_is_never_dormant() {
        let h = Tensor2::from_rows(&[[0.5, -0.5, 0.5], [0.5, 0.5, -0.5]]).unwrap();
        let report = compute_dormant_report(&trace_of(vec![h]), &[true], 0.99).unwrap();
        assert!(report.per_layer[0].neuron_scores.iter().all(|s| *s == 1.0));
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn silent_layer_counts_fully_dormant() {
        let silent = Tensor2::zeros(3, 4);
        let uniform = Tensor2::from_vec(3, 4, vec![0.5; 12]).unwrap();
        let report =
            compute_dormant_report(&trace_of(vec![silent, uniform]), &[true, true], 0.025).unwrap();
        assert_eq!(report.per_layer[0].dormant_count, 4);
        assert_eq!(report.per_layer[1].dormant_count, 0);
        assert_eq!(report.ratio, 0.5);
    }

    #[test]
    fn uncounted_layers_are_skipped() {
        let silent = Tensor2::zeros(2, 4);
        let uniform = Tensor2::from_vec(2, 4, vec![1.0; 8]).unwrap();
        let report =
            compute_dormant_report(&trace_of(vec![uniform, silent]), &[true, false], 0.025)
                .unwrap();
        assert_eq!(report.per_layer.len(), 1);
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn usage_errors() {
        let empty = ForwardTrace {
            input: Tensor2::zeros(0, 1),
            outputs: vec![Tensor2::zeros(0, 3)],
        };
        assert!(matches!(
            compute_dormant_report(&empty, &[true], 0.1),
            Err(Error::Usage(_))
        ));
        let t = trace_of(vec![Tensor2::zeros(2, 3)]);
        assert!(matches!(
            compute_dormant_report(&t, &[true], -0.1),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            compute_dormant_report(&t, &[true, true], 0.1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn ema_cases() {
        assert_eq!(update_dormant_ema(None, 0.8, 0.99).unwrap(), 0.8);
        for decay in [0.0, 0.3, 0.9, 0.99] {
            assert!((update_dormant_ema(Some(0.5), 0.5, decay).unwrap() - 0.5).abs() < 1e-15);
        }
        assert_eq!(update_dormant_ema(Some(1.0), 0.0, 0.99).unwrap(), 0.99);
        assert!(update_dormant_ema(Some(0.5), 1.2, 0.9).is_err());
        assert!(update_dormant_ema(Some(0.5), 0.2, 1.0).is_err());
        assert!(update_dormant_ema(Some(0.5), 0.2, -0.1).is_err());
    }
}
