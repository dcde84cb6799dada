//! Small statistical helpers: binomial/multinomial arithmetic in log space,
//! Wilson score intervals and Hoeffding envelopes.

/// `ln k!` for `k = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// All vectors of `parts` nonnegative integers summing to `total`, in
/// lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn fill(rem: usize, slot: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot + 1 == cur.len() {
            cur[slot] = rem;
            out.push(cur.clone());
            return;
        }
        for c in 0..=rem {
            cur[slot] = c;
            fill(rem - c, slot + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        return out;
    }
    let mut cur = vec![0; parts];
    fill(total, 0, &mut cur, &mut out);
    out
}

/// Number of compositions of `total` into `parts`, or `None` on overflow.
pub fn composition_count(total: usize, parts: usize) -> Option<usize> {
    if parts == 0 {
        return Some(0);
    }
    // C(total + parts - 1, parts - 1)
    let (n, k) = (total + parts - 1, parts - 1);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    usize::try_from(acc).ok()
}

/// `ln` of the probability that i.i.d. draws from `law` produce exactly the
/// symbol counts `counts` (summed over all orderings).
pub fn ln_multinomial_probability(counts: &[usize], law: &[f64], ln_fact: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let mut acc = ln_fact[total];
    for (&c, &p) in counts.iter().zip(law) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += c as f64 * p.ln() - ln_fact[c];
    }
    acc
}

/// `P(lower ≤ X/n ≤ upper)` for `X ~ Binomial(n, p)`.
pub fn binomial_frequency_probability(n: usize, p: f64, lower: f64, upper: f64) -> f64 {
    let ln_fact = ln_factorials(n);
    let mut total = 0.0;
    for k in 0..=n {
        let freq = k as f64 / n as f64;
        if freq < lower || freq > upper {
            continue;
        }
        let ln_p = ln_multinomial_probability(&[k, n - k], &[p, 1.0 - p], &ln_fact);
        total += ln_p.exp();
    }
    total.clamp(0.0, 1.0)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Hoeffding bound on misclassifying a label whose nearest competitor lies
/// `gap` away in frequency, after `horizon` draws: the empirical frequency
/// must stray by at least `gap/2`, which happens with probability at most
/// `2 exp(-horizon · gap² / 2)`.
pub fn classification_error_bound(horizon: usize, gap: f64) -> f64 {
    (2.0 * (-(horizon as f64) * gap * gap / 2.0).exp()).min(1.0)
}

/// Standard deviation of a binomial proportion.
pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
