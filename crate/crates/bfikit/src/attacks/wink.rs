//! Training-free PIN ranking from keystroke structure.
//!
//! Two observations score a candidate without any labeled data: repeated
//! digits must produce similar physical-layer signatures, and the time
//! between keypresses grows with the distance the fingertip travels on the
//! pad. Every candidate PIN is scored on both and the full million-entry
//! ranking is returned.

use ndarray::Array2;

use super::AttackError;
use crate::sim::Keypad;
use crate::trace::PIN_LEN;

/// Weight of the signature-consistency term against the travel-time term.
pub const CONSISTENCY_WEIGHT: f64 = 0.5;

/// Number of candidate PINs.
pub const N_CANDIDATES: usize = 1_000_000;

/// Scores for every candidate PIN, sorted best first.
#[derive(Debug, Clone)]
pub struct WinkRanking {
    /// Score per PIN, indexed by the PIN read as a decimal number.
    scores: Vec<f64>,
    /// Candidate indices sorted by descending score, ties lexicographic.
    order: Vec<u32>,
    /// Set when the trace carries no structure at all: every keystroke
    /// signature identical and every travel time equal.
    pub degenerate: bool,
}

impl WinkRanking {
    /// Raw score of one candidate.
    pub fn score(&self, digits: &[u8; PIN_LEN]) -> f64 {
        self.scores[Self::index(digits)]
    }

    /// Rank of a candidate: one plus the number of strictly better
    /// candidates, so every member of a tied group shares the best rank.
    pub fn rank(&self, digits: &[u8; PIN_LEN]) -> usize {
        let own = self.scores[Self::index(digits)];
        1 + self.scores.iter().filter(|s| **s > own).count()
    }

    /// Best `n` candidates with their scores, in ranking order.
    pub fn top(&self, n: usize) -> Vec<([u8; PIN_LEN], f64)> {
        self.order
            .iter()
            .take(n)
            .map(|&code| (Self::digits(code), self.scores[code as usize]))
            .collect()
    }

    fn index(digits: &[u8; PIN_LEN]) -> usize {
        digits.iter().fold(0usize, |acc, &d| acc * 10 + d as usize)
    }

    fn digits(code: u32) -> [u8; PIN_LEN] {
        let mut out = [0u8; PIN_LEN];
        let mut rest = code;
        for slot in out.iter_mut().rev() {
            *slot = (rest % 10) as u8;
            rest /= 10;
        }
        out
    }
}

/// Ranks all million candidate PINs for one trace.
///
/// `frames` are the per-sample feature rows, `keystrokes` the six keypress
/// sample indices, `sample_rate` converts index gaps to seconds.
///
/// Candidate score (higher is better):
///
/// ```text
/// -[ w * consistency + (1 - w) * timing ]
/// consistency = sum over the 15 keystroke pairs of
///               Dhat(i,j)      when the candidate repeats a digit there
///               1 - Dhat(i,j)  when it does not
/// timing      = sum over the 5 transitions of |t_i - kappa * dist_i|
/// ```
///
/// `Dhat` is the keystroke-signature distance matrix scaled by its maximum;
/// `kappa` is fit per candidate by least squares, so a candidate whose pad
/// geometry matches the observed rhythm at any typing speed scores well.
pub fn wink_rank(
    frames: &Array2<f64>,
    keystrokes: &[usize],
    sample_rate: f64,
    keypad: &Keypad,
) -> Result<WinkRanking, AttackError> {
    if keystrokes.len() != PIN_LEN {
        return Err(AttackError::BadInput(format!(
            "{} keystrokes, expected {PIN_LEN}",
            keystrokes.len()
        )));
    }
    if !(sample_rate > 0.0) {
        return Err(AttackError::BadInput(format!(
            "sample rate {sample_rate}"
        )));
    }
    if keystrokes.iter().any(|&k| k >= frames.dim().0) {
        return Err(AttackError::BadInput(format!(
            "keystroke index outside the {} frames",
            frames.dim().0
        )));
    }

    // Signature distance matrix, scaled into [0, 1].
    let mut dist = [[0.0f64; PIN_LEN]; PIN_LEN];
    let mut max_dist = 0.0f64;
    for i in 0..PIN_LEN {
        for j in i + 1..PIN_LEN {
            let a = frames.row(keystrokes[i]);
            let b = frames.row(keystrokes[j]);
            let d = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            dist[i][j] = d;
            max_dist = max_dist.max(d);
        }
    }
    if max_dist > 0.0 {
        for row in &mut dist {
            for d in row.iter_mut() {
                *d /= max_dist;
            }
        }
    }

    let travel: Vec<f64> = keystrokes
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / sample_rate)
        .collect();
    let degenerate = max_dist == 0.0
        && travel.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12);

    // Pad distances for every digit pair.
    let mut pad = [[0.0f64; 10]; 10];
    for a in 0..10u8 {
        for b in 0..10u8 {
            pad[a as usize][b as usize] = keypad.key_distance(a, b)?;
        }
    }

    let mut scores = vec![0.0f64; N_CANDIDATES];
    let mut digits = [0u8; PIN_LEN];
    for (code, slot) in scores.iter_mut().enumerate() {
        let mut rest = code;
        for d in digits.iter_mut().rev() {
            *d = (rest % 10) as u8;
            rest /= 10;
        }

        let mut consistency = 0.0;
        for i in 0..PIN_LEN {
            for j in i + 1..PIN_LEN {
                if digits[i] == digits[j] {
                    consistency += dist[i][j];
                } else {
                    consistency += 1.0 - dist[i][j];
                }
            }
        }

        // Least-squares typing speed for this candidate's pad distances.
        let mut dot = 0.0;
        let mut norm = 0.0;
        let mut steps = [0.0f64; PIN_LEN - 1];
        for (k, step) in steps.iter_mut().enumerate() {
            *step = pad[digits[k] as usize][digits[k + 1] as usize];
            dot += travel[k] * *step;
            norm += *step * *step;
        }
        let kappa = if norm > 0.0 { dot / norm } else { 0.0 };
        let timing: f64 = steps
            .iter()
            .zip(&travel)
            .map(|(s, t)| (t - kappa * s).abs())
            .sum();

        *slot = -(CONSISTENCY_WEIGHT * consistency + (1.0 - CONSISTENCY_WEIGHT) * timing);
    }

    let mut order: Vec<u32> = (0..N_CANDIDATES as u32).collect();
    order.sort_unstable_by(|a, b| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    });

    Ok(WinkRanking {
        scores,
        order,
        degenerate,
    })
}
