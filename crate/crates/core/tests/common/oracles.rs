//! Slow, obviously-correct reference implementations.

/// `P(pos > neg) + P(pos == neg) / 2` over all positive–negative pairs.
pub fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// `KL(N(mu, sigma^2) || N(0, 1))` by composite Simpson quadrature of
/// `q(w) ln(q(w) / p(w))` over `mu ± 14 sigma`.
pub fn quadrature_gaussian_kl(mu: f64, sigma: f64) -> f64 {
    const INTERVALS: usize = 40_000;
    let ln_norm = -0.5 * (2.0 * std::f64::consts::PI).ln();
    let integrand = |w: f64| {
        let ln_q = ln_norm - sigma.ln() - 0.5 * ((w - mu) / sigma).powi(2);
        let ln_p = ln_norm - 0.5 * w * w;
        ln_q.exp() * (ln_q - ln_p)
    };
    let (a, b) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
    let h = (b - a) / INTERVALS as f64;
    let mut total = integrand(a) + integrand(b);
    for k in 1..INTERVALS {
        let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
        total += weight * integrand(a + k as f64 * h);
    }
    total * h / 3.0
}
