//! Precision-maximizing decision threshold.

use super::ScoringError;

/// Picks the threshold among the distinct score values that maximizes the
/// precision of `score >= threshold`. Among equally precise thresholds the
/// lowest one wins, which keeps the most positives.
pub fn threshold_fit(scores: &[f64], labels: &[bool]) -> Result<f64, ScoringError> {
    if scores.len() != labels.len() {
        return Err(ScoringError::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !labels.iter().any(|&l| l) {
        return Err(ScoringError::NoPositiveLabels);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(ScoringError::InvalidInput("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut tp, mut predicted) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            tp += usize::from(labels[order[i]]);
            predicted += 1;
            i += 1;
        }
        let precision = tp as f64 / predicted as f64;
        // descending sweep: ties replace with the lower threshold
        if precision >= best.0 {
            best = (precision, threshold);
        }
    }
    Ok(best.1)
}

pub fn precision_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (tp, predicted) = scores
        .iter()
        .zip(labels)
        .filter(|(s, _)| **s >= threshold)
        .fold((0usize, 0usize), |(tp, p), (_, &l)| (tp + usize::from(l), p + 1));
    if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive reference: try every distinct score.
    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let mut best = (f64::NEG_INFINITY, f64::INFINITY);
        for &t in scores {
            let p = precision_at(scores, labels, t);
            if p > best.0 || (p == best.0 && t < best.1) {
                best = (p, t);
            }
        }
        best.1
    }

    #[test]
    fn separated_scores_yield_min_positive() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let labels = [false, false, false, true, true, true];
        let t = threshold_fit(&scores, &labels).unwrap();
        assert_eq!(t, 0.7);
        assert_eq!(precision_at(&scores, &labels, t), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(threshold_fit(&[0.1], &[false]), Err(ScoringError::NoPositiveLabels)));
        assert!(threshold_fit(&[0.1, 0.2], &[true]).is_err());
    }

    #[test]
    fn agrees_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.gen_range(1..25);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8u8)) / 8.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            labels[0] = true;
            assert_eq!(threshold_fit(&scores, &labels).unwrap(), brute(&scores, &labels));
        }
    }
}
