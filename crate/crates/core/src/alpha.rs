//! Direction vectors indexing the inequalities of the stability polytope.
//!
//! `W` holds every product of `N − 1` capacities drawn from `{0, …, M}`;
//! `V̂ ⊆ Wᴺ` keeps the vectors that pass the partition test of [`in_v`],
//! reduced to one integer representative per positive-scaling class.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::Caps;

/// Relative tolerance for the ratio test on real-valued directions.
const REAL_RATIO_TOL: f64 = 1e-12;

/// Nonnegative integer direction vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaVector(Vec<u64>);

impl AlphaVector {
    pub fn new(coords: Vec<u64>) -> Self {
        Self(coords)
    }

    /// Standard basis vector `e_index` of length `n`.
    pub fn unit(n: usize, index: usize) -> Self {
        let mut v = vec![0; n];
        v[index] = 1;
        Self(v)
    }

    /// Indicator vector of a queue subset encoded as a bitmask.
    pub fn indicator(n: usize, mask: u64) -> Self {
        Self((0..n).map(|i| (mask >> i) & 1).collect())
    }

    pub fn coords(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }

    pub fn l1(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Divides by the gcd of the nonzero coordinates.
    pub fn canonical(&self) -> Self {
        let g = self.0.iter().fold(0, |g, &c| gcd(g, c));
        if g <= 1 {
            return self.clone();
        }
        Self(self.0.iter().map(|&c| c / g).collect())
    }

    pub fn is_canonical(&self) -> bool {
        self.0.iter().fold(0, |g, &c| gcd(g, c)) == 1
    }

    /// Exact integer version of [`in_v`].
    pub fn in_v(&self, max_capacity: u32) -> Result<bool> {
        if self.is_zero() {
            return Err(Error::InvalidArgument("zero direction vector".into()));
        }
        let m = u128::from(max_capacity);
        Ok(partition_test(&self.0, |&a, &b| {
            let (a, b) = (u128::from(a), u128::from(b));
            (1..=m).any(|x| (1..=m).any(|y| a * x == b * y))
        }))
    }
}

impl From<Vec<u64>> for AlphaVector {
    fn from(v: Vec<u64>) -> Self {
        Self(v)
    }
}

impl fmt::Display for AlphaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Walks the `2^{N−1} − 1` unordered bipartitions `(U, Uᶜ)`. A partition with
/// an all-zero side is vacuous; every other one needs a nonzero pair
/// `(i ∈ U, j ∈ Uᶜ)` accepted by `related`.
fn partition_test<T: Default + PartialEq>(alpha: &[T], related: impl Fn(&T, &T) -> bool) -> bool {
    let n = alpha.len();
    if n < 2 {
        return true;
    }
    let zero = T::default();
    let full: u64 = (1u64 << n) - 1;
    // masks always contain index 0, so each unordered pair is visited once
    (0..(1u64 << (n - 1))).all(|half| {
        let mask = (half << 1) | 1;
        if mask == full {
            return true;
        }
        let inside = |i: usize| (mask >> i) & 1 == 1;
        let side_nonzero = |want: bool| (0..n).any(|i| inside(i) == want && alpha[i] != zero);
        if !side_nonzero(true) || !side_nonzero(false) {
            return true;
        }
        (0..n).filter(|&i| inside(i) && alpha[i] != zero).any(|i| {
            (0..n)
                .filter(|&j| !inside(j) && alpha[j] != zero)
                .any(|j| related(&alpha[i], &alpha[j]))
        })
    })
}

/// Partition test on a real direction: for every split of the coordinates
/// into two sides that both carry a nonzero entry, some nonzero `α_i` on one
/// side and `α_j` on the other satisfy `α_i·m = α_j·n` with `m, n ∈ {1, …, M}`.
///
/// Real equality is decided with a relative tolerance of `1e-12`.
pub fn in_v(alpha: &[f64], max_capacity: u32) -> Result<bool> {
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidArgument(
            "direction must be finite and nonnegative".into(),
        ));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidArgument("zero direction vector".into()));
    }
    let m = max_capacity;
    Ok(partition_test(alpha, |&a, &b| {
        (1..=m).any(|x| {
            (1..=m).any(|y| {
                let (l, r) = (a * f64::from(x), b * f64::from(y));
                (l - r).abs() <= REAL_RATIO_TOL * l.max(r)
            })
        })
    }))
}

/// Sorted set of products of `N − 1` factors from `{0, …, M}`.
pub fn build_w(max_capacity: u32, n: usize) -> Result<Vec<u64>> {
    if max_capacity < 1 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "W needs M >= 1 and N >= 2 (got M = {max_capacity}, N = {n})"
        )));
    }
    let mut set = BTreeSet::from([1u64]);
    for _ in 0..n - 1 {
        set = set
            .iter()
            .flat_map(|&z| (0..=u64::from(max_capacity)).map(move |m| z * m))
            .collect();
    }
    Ok(set.into_iter().collect())
}

/// Closed-form `|Wᴺ| = (C(M+N−2, N−1) + 1)^N`.
///
/// This counts multisets of nonzero factors, so it equals `|build_w|^N` only
/// while distinct multisets give distinct products (for example it
/// over-counts from `M = 4, N = 3`, where `2·2 = 1·4`).
pub fn wn_count(max_capacity: u32, n: usize) -> Result<u128> {
    if max_capacity < 1 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "|W^N| needs M >= 1 and N >= 2 (got M = {max_capacity}, N = {n})"
        )));
    }
    let base = binomial(u128::from(max_capacity) + n as u128 - 2, n as u128 - 1) + 1;
    base.checked_pow(n as u32)
        .ok_or_else(|| Error::InvalidArgument("|W^N| overflows u128".into()))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Scaling-free set `V̂`, sorted lexicographically.
pub fn build_vhat(
    max_capacity: u32,
    n: usize,
    caps: &Caps,
    exec: Execution,
) -> Result<Vec<AlphaVector>> {
    if n == 1 {
        return Ok(vec![AlphaVector::unit(1, 0)]);
    }
    let w = build_w(max_capacity, n)?;
    let radix = w.len() as u128;
    let total = (0..n)
        .try_fold(1u128, |acc, _| acc.checked_mul(radix))
        .unwrap_or(u128::MAX);
    if total > u128::from(caps.vhat_candidates) {
        return Err(Error::CapExceeded {
            what: "W^N candidate set",
            size: total,
            cap: caps.vhat_candidates,
        });
    }
    let total = total as usize;
    const CHUNK: usize = 4096;
    let chunks = total.div_ceil(CHUNK);
    let found = exec.map_range(0..chunks, |c| {
        let mut local = Vec::new();
        let mut coords = vec![0u64; n];
        for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
            let mut rest = idx;
            for slot in coords.iter_mut().rev() {
                *slot = w[rest % w.len()];
                rest /= w.len();
            }
            let alpha = AlphaVector(coords.clone());
            if alpha.is_zero() {
                continue;
            }
            if alpha.in_v(max_capacity).expect("nonzero") {
                local.push(alpha.canonical());
            }
        }
        local
    });
    let set: BTreeSet<AlphaVector> = found.into_iter().flatten().collect();
    Ok(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vhat(m: u32, n: usize) -> Vec<AlphaVector> {
        build_vhat(m, n, &Caps::default(), Execution::Sequential).unwrap()
    }

    /// Connectivity of the "ratio realizable" graph on nonzero coordinates.
    /// Equivalent to the partition definition and shares no code with it.
    fn connected_oracle(alpha: &[u64], m: u64) -> bool {
        let nz: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] != 0).collect();
        let related = |a: u64, b: u64| (1..=m).any(|x| (1..=m).any(|y| a * x == b * y));
        let mut seen = vec![false; nz.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..nz.len() {
                if !seen[v] && related(alpha[nz[u]], alpha[nz[v]]) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    #[test]
    fn w_examples() {
        assert_eq!(build_w(1, 2).unwrap(), vec![0, 1]);
        assert_eq!(build_w(1, 5).unwrap(), vec![0, 1]);
        assert_eq!(build_w(2, 3).unwrap(), vec![0, 1, 2, 4]);
        assert_eq!(build_w(3, 2).unwrap(), vec![0, 1, 2, 3]);
        assert!(build_w(0, 2).is_err());
        assert!(build_w(2, 1).is_err());
    }

    #[test]
    fn in_v_worked_examples() {
        assert!(!in_v(&[1.0, 2.0, 5.0, 10.0], 2).unwrap());
        assert!(in_v(&[0.0, 2.5, 0.0, 0.0], 2).unwrap());
        for m in 1..5 {
            assert!(in_v(&[1.0; 6], m).unwrap());
        }
        assert!(in_v(&[0.0, 0.0], 2).is_err());
        assert!(in_v(&[-1.0, 1.0], 2).is_err());
    }

    #[test]
    fn integer_and_real_tests_agree() {
        let w = build_w(3, 3).unwrap();
        for &a in &w {
            for &b in &w {
                for &c in &w {
                    let v = AlphaVector::new(vec![a, b, c]);
                    if v.is_zero() {
                        continue;
                    }
                    assert_eq!(v.in_v(3).unwrap(), in_v(&v.to_f64(), 3).unwrap(), "{v}");
                }
            }
        }
    }

    #[test]
    fn partition_test_matches_connectivity() {
        for m in 1..=3u32 {
            for n in 2..=4 {
                let w = build_w(m, n).unwrap();
                let total = w.len().pow(n as u32);
                for idx in 1..total {
                    let mut rest = idx;
                    let coords: Vec<u64> = (0..n)
                        .map(|_| {
                            let c = w[rest % w.len()];
                            rest /= w.len();
                            c
                        })
                        .collect();
                    if coords.iter().all(|&c| c == 0) {
                        continue;
                    }
                    let v = AlphaVector::new(coords.clone());
                    assert_eq!(
                        v.in_v(m).unwrap(),
                        connected_oracle(&coords, m.into()),
                        "{v}"
                    );
                }
            }
        }
    }

    #[test]
    fn vhat_small_cases() {
        let as_vecs = |v: Vec<AlphaVector>| v.into_iter().map(|a| a.0).collect::<Vec<_>>();
        assert_eq!(
            as_vecs(vhat(1, 2)),
            vec![vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(
            as_vecs(vhat(2, 2)),
            vec![vec![0, 1], vec![1, 0], vec![1, 1], vec![1, 2], vec![2, 1]]
        );
        assert_eq!(vhat(2, 3).len(), 25);
        assert_eq!(vhat(1, 1), vec![AlphaVector::unit(1, 0)]);
    }

    #[test]
    fn vhat_contains_basis_vectors() {
        for (m, n) in [(1, 3), (2, 3), (3, 2), (2, 4)] {
            let v = vhat(m, n);
            for i in 0..n {
                assert!(v.contains(&AlphaVector::unit(n, i)));
            }
        }
    }

    #[test]
    fn vhat_parallel_matches_sequential() {
        let seq = vhat(3, 3);
        let par = build_vhat(3, 3, &Caps::default(), Execution::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn vhat_cap() {
        let caps = Caps {
            vhat_candidates: 10,
            ..Caps::default()
        };
        assert!(matches!(
            build_vhat(2, 3, &caps, Execution::Sequential),
            Err(Error::CapExceeded { size: 64, .. })
        ));
    }

    #[test]
    fn wn_count_examples() {
        assert_eq!(wn_count(2, 3).unwrap(), 64);
        assert_eq!(wn_count(4, 2).unwrap(), 25);
        assert_eq!(wn_count(1, 2).unwrap(), 4);
    }

    #[test]
    fn w_size_against_closed_form() {
        // The closed form counts multisets of factors; enumeration counts
        // distinct products. They agree until two multisets collide.
        let mut first_collision = None;
        for m in 1..=6u32 {
            for n in 2..=5usize {
                let enumerated = build_w(m, n).unwrap().len() as u128;
                let multisets = binomial(u128::from(m) + n as u128 - 2, n as u128 - 1) + 1;
                assert!(enumerated <= multisets);
                let collides = {
                    let mut products = BTreeSet::new();
                    let mut dup = false;
                    let mut stack = vec![(1u64, 1u64, 0usize)];
                    while let Some((prod, lo, depth)) = stack.pop() {
                        if depth == n - 1 {
                            dup |= !products.insert(prod);
                            continue;
                        }
                        for f in lo..=u64::from(m) {
                            stack.push((prod * f, f, depth + 1));
                        }
                    }
                    dup
                };
                assert_eq!(enumerated == multisets, !collides, "M={m} N={n}");
                if collides && first_collision.is_none() {
                    first_collision = Some((m, n));
                }
                assert_eq!(wn_count(m, n).unwrap(), multisets.pow(n as u32));
            }
        }
        assert_eq!(first_collision, Some((4, 3)));
        assert_eq!(build_w(4, 3).unwrap().len(), 10);
    }

    #[test]
    fn canonical_divides_by_gcd() {
        assert_eq!(AlphaVector::new(vec![0, 4, 6]).canonical().0, vec![0, 2, 3]);
        assert_eq!(AlphaVector::new(vec![0, 3, 0]).canonical().0, vec![0, 1, 0]);
        assert!(AlphaVector::new(vec![2, 3]).is_canonical());
    }
}
