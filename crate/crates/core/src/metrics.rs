use crate::error::{Error, Result};

/// Counts `[tn, fp, fn, tp]` with 1 as the positive (stress) class.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> [usize; 4] {
    let mut c = [0usize; 4];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        c[(t as usize) * 2 + p as usize] += 1;
    }
    c
}

/// Mean of true-positive and true-negative rates, evaluated as the single
/// ratio `(tp·n0 + tn·n1) / (2·n0·n1)` so the result is correctly rounded.
pub fn balanced_accuracy(y_true: &[u8], y_pred: &[u8]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.iter().chain(y_pred).any(|&l| l > 1) {
        return Err(Error::Metric("labels must be 0 or 1".into()));
    }
    let [tn, fp, fn_, tp] = confusion(y_true, y_pred);
    if tp + fn_ == 0 || tn + fp == 0 {
        return Err(Error::Metric("y_true holds a single class".into()));
    }
    let (n1, n0) = ((tp + fn_) as u128, (tn + fp) as u128);
    let num = tp as u128 * n0 + tn as u128 * n1;
    Ok(num as f64 / (2 * n0 * n1) as f64)
}

/// Recall of the given class.
pub fn class_recall(y_true: &[u8], y_pred: &[u8], class: u8) -> f64 {
    let (hit, total) = y_true
        .iter()
        .zip(y_pred)
        .filter(|(&t, _)| t == class)
        .fold((0usize, 0usize), |(h, n), (_, &p)| (h + usize::from(p == class), n + 1));
    if total == 0 {
        f64::NAN
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(balanced_accuracy(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap(), 0.75);
        let mut y = vec![0u8; 90];
        y.extend([1u8; 10]);
        assert_eq!(balanced_accuracy(&y, &[0u8; 100]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_truth_is_an_error() {
        assert!(matches!(balanced_accuracy(&[1, 1], &[1, 0]), Err(Error::Metric(_))));
        assert!(balanced_accuracy(&[1, 0], &[1]).is_err());
    }

    #[test]
    fn balanced_truth_gives_plain_accuracy() {
        // 1/10 + 2/10 != 3/10 in floating point; the single ratio avoids that
        let mut t = vec![0u8; 10];
        t.extend([1u8; 10]);
        let mut p = vec![1u8; 20];
        p[0] = 0;
        p[10..18].iter_mut().for_each(|v| *v = 0);
        assert_eq!(balanced_accuracy(&t, &p).unwrap(), 3.0 / 20.0);
    }

    #[test]
    fn label_swap_invariance() {
        let t = [1, 0, 0, 1, 1, 0, 0, 0];
        let p = [1, 1, 0, 0, 1, 0, 1, 0];
        let flip = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<_>>();
        assert_eq!(
            balanced_accuracy(&t, &p).unwrap(),
            balanced_accuracy(&flip(&t), &flip(&p)).unwrap()
        );
    }
}
