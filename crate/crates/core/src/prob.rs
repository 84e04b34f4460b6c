//! Numerically stable softmax helpers over plain slices.

/// Log-softmax; `-inf` entries stay `-inf` (masked positions).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return logits.to_vec();
    }
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    logits.iter().map(|&z| z - log_z).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `-Σ p_j log q_j`, skipping terms where `p_j == 0`.
pub fn cross_entropy(target: &[f64], log_q: &[f64]) -> f64 {
    target
        .iter()
        .zip(log_q)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &lq)| -p * lq)
        .sum()
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// True when `p` is nonnegative and sums to one within `tol`.
pub fn is_distribution(p: &[f64], tol: f64) -> bool {
    !p.is_empty()
        && p.iter().all(|&x| x >= 0.0 && x.is_finite())
        && (p.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1.0, 2.0, 3.0]);
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn masked_entries_get_zero_probability() {
        let p = softmax(&[0.0, f64::NEG_INFINITY, 0.0]);
        assert_eq!(p, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn uniform_cross_entropy_is_log_n() {
        let t = [0.25; 4];
        let lq = log_softmax(&[0.0; 4]);
        assert!((cross_entropy(&t, &lq) - 4f64.ln()).abs() < 1e-15);
    }
}
