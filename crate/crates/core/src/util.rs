//! Small shared helpers: log-space arithmetic and seed derivation.

/// Natural-log-space addition: `ln(exp(a) + exp(b))`.
///
/// Treats `-inf` as an exact zero, so accumulating over impossible terms is
/// a no-op rather than a NaN.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum_i exp(xs_i))` with max-shift; `-inf` entries are skipped.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    for x in xs.clone() {
        if x > hi {
            hi = x;
        }
    }
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for x in xs {
        if x != f64::NEG_INFINITY {
            acc += (x - hi).exp();
        }
    }
    hi + acc.ln()
}

/// Derives an independent 64-bit seed from a base seed and a salt path.
///
/// All randomness in the crate flows through explicit seeds; sub-components
/// get their own streams via `derive_seed(base, &[component, index, ...])`
/// so that changing one stream never perturbs another.
pub fn derive_seed(base: u64, salt: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &s in salt {
        state = splitmix64(state ^ s.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean and (population) standard deviation of a slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_direct() {
        let v = log_add_exp((0.3f64).ln(), (0.2f64).ln());
        assert!((v.exp() - 0.5).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, -1.5), -1.5);
        assert_eq!(
            log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn log_sum_exp_skips_impossible_terms() {
        let xs = [f64::NEG_INFINITY, (0.25f64).ln(), (0.75f64).ln()];
        assert!((log_sum_exp(xs.iter().copied()).abs()) < 1e-12);
        assert_eq!(
            log_sum_exp([f64::NEG_INFINITY; 3].iter().copied()),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn derive_seed_is_stable_and_salt_sensitive() {
        let a = derive_seed(7, &[1, 2]);
        assert_eq!(a, derive_seed(7, &[1, 2]));
        assert_ne!(a, derive_seed(7, &[2, 1]));
        assert_ne!(a, derive_seed(8, &[1, 2]));
    }
}
