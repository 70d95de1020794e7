//! Entropy helpers on binary alphabets. All values in bits.

/// Binary entropy with the `0 log 0 = 0` convention.
pub fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Output probability of a 1 when a `Bern(a)` input crosses a BSC(p).
pub fn bsc_convolve(a: f64, p: f64) -> f64 {
    a * (1.0 - p) + (1.0 - a) * p
}

/// `I(X; Y)` for `X ~ Bern(a)` through a BSC with crossover `p`.
pub fn bsc_mutual_information(a: f64, p: f64) -> f64 {
    (binary_entropy(bsc_convolve(a, p)) - binary_entropy(p)).max(0.0)
}

/// Shannon entropy of an arbitrary pmf, zero-probability atoms skipped.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.log2())
        .sum()
}
