//! Template-matching digit classifier.

use ndarray::Array2;

use super::{aligned_rms_distance, AttackError};
use crate::nn::softmin;
use crate::trace::Segment;

/// How per-class template distances collapse to one class distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Distance to the closest template of the class.
    #[default]
    Min,
    /// Mean distance over all templates of the class.
    Mean,
}

/// One stored training window.
#[derive(Debug, Clone)]
struct Template {
    frames: Array2<f64>,
    center: usize,
}

/// Labeled training windows for all ten digits.
///
/// Prediction turns class distances into probabilities with a softmin whose
/// temperature is the median nonzero class distance of the query, so the
/// ranking never depends on the overall feature scale.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    classes: Vec<Vec<Template>>,
    pub aggregation: Aggregation,
    /// Fixed softmin temperature; `None` selects the per-query median rule.
    pub temperature: Option<f64>,
    n_columns: usize,
}

impl TemplateBank {
    /// Groups training segments by digit. Every digit 0..=9 must appear.
    pub fn fit(segments: &[Segment], aggregation: Aggregation) -> Result<Self, AttackError> {
        let n_columns = segments
            .first()
            .map(|s| s.frames.dim().1)
            .ok_or(AttackError::EmptySplit("template training set"))?;
        let mut classes: Vec<Vec<Template>> = (0..10).map(|_| Vec::new()).collect();
        for segment in segments {
            if segment.frames.dim().1 != n_columns {
                return Err(AttackError::ShapeMismatch {
                    got: segment.frames.dim().1,
                    want: n_columns,
                });
            }
            classes[segment.digit as usize].push(Template {
                frames: segment.frames.clone(),
                center: segment.center,
            });
        }
        let missing: Vec<u8> = (0u8..10)
            .filter(|&d| classes[d as usize].is_empty())
            .collect();
        if !missing.is_empty() {
            return Err(AttackError::MissingClass(missing));
        }
        Ok(Self {
            classes,
            aggregation,
            temperature: None,
            n_columns,
        })
    }

    pub fn template_count(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    /// Aggregated distance from a query window to each digit class.
    pub fn class_distances(&self, segment: &Segment) -> Result<[f64; 10], AttackError> {
        if segment.frames.dim().1 != self.n_columns {
            return Err(AttackError::ShapeMismatch {
                got: segment.frames.dim().1,
                want: self.n_columns,
            });
        }
        let mut out = [0.0; 10];
        for (digit, templates) in self.classes.iter().enumerate() {
            let distances = templates.iter().map(|t| {
                aligned_rms_distance(&segment.frames, segment.center, &t.frames, t.center)
            });
            out[digit] = match self.aggregation {
                Aggregation::Min => {
                    let mut best = f64::INFINITY;
                    for d in distances {
                        best = best.min(d?);
                    }
                    best
                }
                Aggregation::Mean => {
                    let mut sum = 0.0;
                    for d in distances {
                        sum += d?;
                    }
                    sum / templates.len() as f64
                }
            };
        }
        Ok(out)
    }

    /// Digit probabilities for one keystroke window.
    pub fn predict(&self, segment: &Segment) -> Result<[f64; 10], AttackError> {
        let distances = self.class_distances(segment)?;
        let temperature = self.temperature.unwrap_or_else(|| {
            let mut nonzero: Vec<f64> = distances.iter().copied().filter(|d| *d > 0.0).collect();
            if nonzero.is_empty() {
                return 1.0;
            }
            nonzero.sort_by(f64::total_cmp);
            let mid = nonzero.len() / 2;
            if nonzero.len() % 2 == 1 {
                nonzero[mid]
            } else {
                0.5 * (nonzero[mid - 1] + nonzero[mid])
            }
        });
        let probs = softmin(&distances, temperature);
        Ok(probs.try_into().expect("ten classes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::DomainKey;
    use ndarray::array;

    fn segment(digit: u8, value: f64) -> Segment {
        Segment {
            frames: array![[value, value * 0.5]],
            digit,
            center: 0,
            width: 0,
            domain: DomainKey::new(0, 0, 44, 0).unwrap(),
            neighbors: (None, None),
        }
    }

    /// One template per digit at distinct feature values.
    fn simple_bank(aggregation: Aggregation) -> TemplateBank {
        let train: Vec<Segment> = (0u8..10).map(|d| segment(d, d as f64 * 2.0)).collect();
        TemplateBank::fit(&train, aggregation).unwrap()
    }

    #[test]
    fn missing_digit_is_reported() {
        let train: Vec<Segment> = (0u8..10)
            .filter(|&d| d != 7)
            .map(|d| segment(d, d as f64))
            .collect();
        match TemplateBank::fit(&train, Aggregation::Min) {
            Err(AttackError::MissingClass(missing)) => assert_eq!(missing, vec![7]),
            other => panic!("expected missing class, got {other:?}"),
        }
    }

    #[test]
    fn exact_template_match_wins() {
        let bank = simple_bank(Aggregation::Min);
        let probs = bank.predict(&segment(0, 6.0)).unwrap();
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 3, "value 6.0 is digit 3's template");
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_equal_distances_give_uniform_tenths() {
        // Every class holds the same template, so all distances are zero.
        let train: Vec<Segment> = (0u8..10).map(|d| segment(d, 1.0)).collect();
        let bank = TemplateBank::fit(&train, Aggregation::Min).unwrap();
        let probs = bank.predict(&segment(0, 1.0)).unwrap();
        for p in probs {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn min_and_mean_rank_spread_classes_differently() {
        // Class 0 holds templates at distances {d, 10d} from the query,
        // class 1 at {2d, 2d}: min prefers class 0, mean prefers class 1.
        let mut train = vec![
            segment(0, 1.0),
            segment(0, 10.0),
            segment(1, 2.0),
            segment(1, 2.0),
        ];
        train.extend((2u8..10).map(|d| segment(d, 100.0 + d as f64)));
        let query = segment(0, 0.0);

        let min_bank = TemplateBank::fit(&train, Aggregation::Min).unwrap();
        let d_min = min_bank.class_distances(&query).unwrap();
        assert!(d_min[0] < d_min[1]);

        let mean_bank = TemplateBank::fit(&train, Aggregation::Mean).unwrap();
        let d_mean = mean_bank.class_distances(&query).unwrap();
        assert!(d_mean[0] > d_mean[1]);
    }

    #[test]
    fn probabilities_ignore_uniform_feature_scaling() {
        // Scaling every feature scales every distance and the median
        // temperature alike, leaving the softmin ratios untouched.
        let scale = 7.5;
        let train: Vec<Segment> = (0u8..10).map(|d| segment(d, d as f64)).collect();
        let scaled: Vec<Segment> = (0u8..10).map(|d| segment(d, d as f64 * scale)).collect();
        let bank = TemplateBank::fit(&train, Aggregation::Min).unwrap();
        let bank_scaled = TemplateBank::fit(&scaled, Aggregation::Min).unwrap();
        let p = bank.predict(&segment(0, 2.6)).unwrap();
        let q = bank_scaled.predict(&segment(0, 2.6 * scale)).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn column_mismatch_is_rejected_at_predict() {
        let bank = simple_bank(Aggregation::Min);
        let bad = Segment {
            frames: Array2::zeros((1, 3)),
            ..segment(0, 0.0)
        };
        assert!(matches!(
            bank.predict(&bad),
            Err(AttackError::ShapeMismatch { got: 3, want: 2 })
        ));
    }
}
