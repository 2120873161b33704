use crate::Predictions;

/// Exact-match rate over tasks that have both a prediction and a truth.
/// Returns 0 when no task qualifies.
pub fn accuracy(preds: &Predictions, truths: &[Option<usize>]) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for (&t, &p) in preds {
        if let Some(Some(y)) = truths.get(t) {
            n += 1;
            hit += usize::from(p == *y);
        }
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// Unweighted mean of per-class F1 over all `k` classes. A class with no
/// true positives (including one absent from both sides) scores 0.
pub fn macro_f1(preds: &Predictions, truths: &[Option<usize>], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&t, &p) in preds {
        let Some(Some(y)) = truths.get(t) else { continue };
        if p == *y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[*y] += 1;
        }
    }
    let f1_sum: f64 = (0..k)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    f1_sum / k as f64
}
