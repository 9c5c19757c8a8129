//! Binary searches over distance-sorted orders, with constant query cost.
//!
//! Both searches locate a threshold in a monotone sequence of membership
//! values. They run as a uniform bit-descent over a virtual power-of-two
//! range mapped onto the real positions, so every call issues exactly
//! [`probes_per_search`]`(n)` membership queries regardless of the data —
//! within the ceil(log2 n) + 1 budget, and what makes ledger totals exactly
//! reproducible. Probes may repeat a position; each probe is a real oracle
//! call and is charged.
//!
//! On inputs that violate the monotonicity precondition the result is
//! unspecified but always a valid index.

use super::{MembershipQuerier, SolverError};

/// ceil(log2(x)) for x >= 1.
pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Exact number of membership queries each binary search issues on `n` elements.
pub fn probes_per_search(n: usize) -> u64 {
    ceil_log2(n + 1) as u64
}

/// First position in `0..n` where the monotone (false then true) predicate
/// holds, or `n` if it never does. Evaluates the predicate exactly
/// `probes_per_search(n)` times.
fn first_true<F>(n: usize, mut pred: F) -> Result<usize, SolverError>
where
    F: FnMut(usize) -> Result<bool, SolverError>,
{
    debug_assert!(n >= 1);
    let t = ceil_log2(n + 1);
    let m: u128 = 1u128 << t; // virtual range 1..=m, every slot mapped into 1..=n
    let real = |c: u128| -> usize { (c * n as u128).div_ceil(m) as usize }; // 1-based
    let mut known_false: u128 = 0;
    let mut any_true = false;
    let mut step = m / 2;
    while step >= 1 {
        let cand = known_false + step;
        if pred(real(cand) - 1)? {
            any_true = true;
        } else {
            known_false = cand;
        }
        step /= 2;
    }
    if !any_true {
        // the final probe lands on position n, so "every probe false" is a
        // complete certificate that nothing qualifies
        return Ok(n);
    }
    Ok(real(known_false + 1) - 1)
}

/// Largest prefix length `l` in `[0, n]` such that every element of
/// `pi[..l]` has membership to cluster `j` at least `x`; 0 means none
/// qualifies. The caller guarantees memberships are non-increasing along `pi`.
pub fn binary_search_threshold(
    oracle: &mut dyn MembershipQuerier,
    pi: &[usize],
    j: usize,
    x: f64,
) -> Result<usize, SolverError> {
    first_true(pi.len(), |pos| Ok(oracle.query(pi[pos], j)? < x))
}

/// Smallest position `p` in `[0, n)` with `1 - U[pi[p]][t1] >= x`, or `n` if
/// none. Queries only cluster `t1`, exploiting that the two memberships sum
/// to one; the caller guarantees `1 - U[.][t1]` is non-decreasing along `pi`.
pub fn binary_search2(
    oracle: &mut dyn MembershipQuerier,
    pi: &[usize],
    t1: usize,
    x: f64,
) -> Result<usize, SolverError> {
    first_true(pi.len(), |pos| Ok(1.0 - oracle.query(pi[pos], t1)? >= x))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::VecOracle;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_scan_threshold(values: &[f64], x: f64) -> usize {
        let mut l = 0;
        while l < values.len() && values[l] >= x {
            l += 1;
        }
        l
    }

    fn linear_scan_first(values: &[f64], x: f64) -> usize {
        values
            .iter()
            .position(|&v| 1.0 - v >= x)
            .unwrap_or(values.len())
    }

    fn random_non_increasing(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // sprinkle exact ties
        for i in 1..n {
            if rng.random_range(0..5) == 0 {
                v[i] = v[i - 1];
            }
        }
        v
    }

    #[test]
    fn threshold_x_zero_returns_n() {
        let mut o = VecOracle::from_column(&[0.9, 0.5, 0.1]);
        let pi = vec![0, 1, 2];
        assert_eq!(binary_search_threshold(&mut o, &pi, 0, 0.0).unwrap(), 3);
    }

    #[test]
    fn threshold_above_maximum_returns_zero() {
        let mut o = VecOracle::from_column(&[0.9, 0.5, 0.1]);
        let pi = vec![0, 1, 2];
        assert_eq!(binary_search_threshold(&mut o, &pi, 0, 0.95).unwrap(), 0);
    }

    #[test]
    fn threshold_matches_linear_scan_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..1000 {
            let n = rng.random_range(1..=64);
            let values = random_non_increasing(&mut rng, n);
            let x: f64 = if trial % 7 == 0 {
                // exercise exact-boundary thresholds too
                values[rng.random_range(0..n)]
            } else {
                rng.random_range(0.0..1.0)
            };
            let mut o = VecOracle::from_column(&values);
            let pi: Vec<usize> = (0..n).collect();
            let got = binary_search_threshold(&mut o, &pi, 0, x).unwrap();
            assert_eq!(
                got,
                linear_scan_threshold(&values, x),
                "n={n} x={x} values={values:?}"
            );
            assert_eq!(o.ledger.membership_count, probes_per_search(n));
            assert!(probes_per_search(n) <= ceil_log2(n) as u64 + 1);
        }
    }

    #[test]
    fn search2_x_zero_returns_first_position() {
        let mut o = VecOracle::from_column(&[0.9, 0.5, 0.1]); // 1-U non-decreasing
        let pi = vec![0, 1, 2];
        assert_eq!(binary_search2(&mut o, &pi, 0, 0.0).unwrap(), 0);
    }

    #[test]
    fn search2_above_maximum_returns_sentinel() {
        let mut o = VecOracle::from_column(&[0.9, 0.5, 0.1]);
        let pi = vec![0, 1, 2];
        assert_eq!(binary_search2(&mut o, &pi, 0, 0.95).unwrap(), 3);
    }

    #[test]
    fn search2_matches_linear_scan_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let n = rng.random_range(1..=64);
            let values = random_non_increasing(&mut rng, n); // U[t1] non-increasing
            let x: f64 = rng.random_range(0.0..1.0);
            let mut o = VecOracle::from_column(&values);
            let pi: Vec<usize> = (0..n).collect();
            let got = binary_search2(&mut o, &pi, 0, x).unwrap();
            assert_eq!(got, linear_scan_first(&values, x));
            assert_eq!(o.ledger.membership_count, probes_per_search(n));
        }
    }

    #[test]
    fn probe_count_is_a_constant_function_of_n() {
        // same n, different data -> identical cost
        for n in [1usize, 2, 3, 7, 8, 100] {
            let mut counts = Vec::new();
            for seed in 0..10 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = random_non_increasing(&mut rng, n);
                let mut o = VecOracle::from_column(&values);
                let pi: Vec<usize> = (0..n).collect();
                binary_search_threshold(&mut o, &pi, 0, rng.random_range(0.0..1.0)).unwrap();
                counts.push(o.ledger.membership_count);
            }
            assert!(counts.windows(2).all(|w| w[0] == w[1]), "n={n}: {counts:?}");
        }
    }
}
