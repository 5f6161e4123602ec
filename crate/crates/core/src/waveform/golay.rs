/// Binary Golay complementary pair of length `2^n` built by the standard
/// concatenation recursion `a' = [a, b]`, `b' = [a, −b]` from `a = b = [1]`.
pub fn golay_pair(len: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    if len == 0 || !len.is_power_of_two() {
        return None;
    }
    let mut a = vec![1.0];
    let mut b = vec![1.0];
    while a.len() < len {
        let mut na = a.clone();
        na.extend_from_slice(&b);
        let mut nb = a;
        nb.extend(b.iter().map(|x| -x));
        a = na;
        b = nb;
    }
    Some((a, b))
}

/// Aperiodic autocorrelation for lags `0..len`.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|lag| x.iter().zip(&x[lag..]).map(|(p, q)| p * q).sum())
        .collect()
}
