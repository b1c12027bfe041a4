//! Logarithmic market scoring rule.
//!
//! `C(q) = b ln Σ exp(q_j / b)`, `p_i = exp(q_i / b) / Σ exp(q_j / b)`.
//! Both are evaluated with the max-shift so large positions do not overflow.

fn shifted_sum(q: &[f64], b: f64) -> (f64, f64) {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum = q.iter().map(|x| ((x - max) / b).exp()).sum();
    (max, sum)
}

pub fn lmsr_cost(q: &[f64], b: f64) -> f64 {
    let (max, sum) = shifted_sum(q, b);
    max + b * sum.ln()
}

pub fn lmsr_price(q: &[f64], b: f64, i: usize) -> f64 {
    let (max, sum) = shifted_sum(q, b);
    ((q[i] - max) / b).exp() / sum
}

pub fn lmsr_prices(q: &[f64], b: f64) -> Vec<f64> {
    let (max, sum) = shifted_sum(q, b);
    q.iter().map(|x| ((x - max) / b).exp() / sum).collect()
}

/// `C(q + Δ·e_i) − C(q)`, computed as `b ln(1 + p_i (e^{Δ/b} − 1))` to
/// avoid cancelling two large costs.
pub fn lmsr_trade_cost(q: &[f64], b: f64, i: usize, delta: f64) -> f64 {
    let p = lmsr_price(q, b, i);
    b * (p * (delta / b).exp_m1()).ln_1p()
}
