//! Spin vectors and the column permutation / sign-flip symmetry of `M`.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

/// A vector in `{-1, +1}^n`, reshaped column-major into an `rows x cols`
/// binary matrix: entry `(r, c)` lives at index `c * rows + r`.
///
/// Ordering is lexicographic on the values with `-1 < +1`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinAssignment {
    values: Vec<i8>,
    rows: usize,
}

impl fmt::Debug for SpinAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Spins({}x{} {})", self.rows, self.cols(), self.to_sign_string())
    }
}

impl fmt::Display for SpinAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sign_string())
    }
}

impl SpinAssignment {
    pub fn new(values: Vec<i8>, rows: usize) -> Result<Self> {
        if rows == 0 || values.is_empty() || !values.len().is_multiple_of(rows) {
            return Err(Error::Shape(format!(
                "{} spins cannot be reshaped into {rows} rows",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(format!("spin value {v} is not ±1")));
        }
        Ok(Self { values, rows })
    }

    /// A single-column assignment, for surrogate-level code that has no
    /// matrix shape.
    pub fn flat(values: Vec<i8>) -> Result<Self> {
        let rows = values.len();
        Self::new(values, rows)
    }

    /// Spin `i` is `+1` when bit `i` of `bits` is set.
    pub fn from_bits(bits: u64, len: usize, rows: usize) -> Result<Self> {
        let values = (0..len)
            .map(|i| if (bits >> i) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self::new(values, rows)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rows: usize, rng: &mut R) -> Self {
        let values = (0..len)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self { values, rows }
    }

    /// Parses a `+-` string such as `"+-+-"`.
    pub fn parse_signs(s: &str, rows: usize) -> Result<Self> {
        let values = s
            .chars()
            .map(|ch| match ch {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::Parse(format!("unexpected spin character {other:?}"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::new(values, rows)
    }

    pub fn to_sign_string(&self) -> String {
        self.values
            .iter()
            .map(|&v| if v > 0 { '+' } else { '-' })
            .collect()
    }

    #[inline]
    pub fn values(&self) -> &[i8] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.values.len() / self.rows
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.values[c * self.rows + r]
    }

    pub fn column(&self, c: usize) -> &[i8] {
        &self.values[c * self.rows..(c + 1) * self.rows]
    }

    /// Same spins viewed with a different matrix shape.
    pub fn reshaped(&self, rows: usize) -> Result<Self> {
        Self::new(self.values.clone(), rows)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn to_matrix(&self) -> RealMatrix {
        RealMatrix::from_fn(self.rows, self.cols(), |r, c| f64::from(self.get(r, c)))
    }

    pub fn hamming(&self, other: &SpinAssignment) -> usize {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Column `c` of the result is `signs[c] * self.column(perm[c])`.
    pub fn permute_columns(&self, perm: &[usize], signs: &[i8]) -> SpinAssignment {
        let mut values = Vec::with_capacity(self.values.len());
        for (&src, &sign) in perm.iter().zip(signs) {
            values.extend(self.column(src).iter().map(|&v| v * sign));
        }
        SpinAssignment {
            values,
            rows: self.rows,
        }
    }
}

/// All `k!` permutations of `0..k` in lexicographic order.
pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Every column permutation composed with every column sign flip of `m`,
/// deduplicated and sorted. A generic assignment has `K! * 2^K` images.
pub fn symmetry_orbit(m: &SpinAssignment) -> Vec<SpinAssignment> {
    let k = m.cols();
    let mut orbit = BTreeSet::new();
    let mut signs = vec![1i8; k];
    for perm in permutations(k) {
        for mask in 0u32..(1 << k) {
            for (c, s) in signs.iter_mut().enumerate() {
                *s = if (mask >> c) & 1 == 1 { -1 } else { 1 };
            }
            orbit.insert(m.permute_columns(&perm, &signs));
        }
    }
    orbit.into_iter().collect()
}

/// Lexicographically smallest member of the symmetry orbit.
pub fn canonical_form(m: &SpinAssignment) -> SpinAssignment {
    let k = m.cols();
    let mut best: Option<SpinAssignment> = None;
    let mut signs = vec![1i8; k];
    for perm in permutations(k) {
        // the smallest image under a fixed permutation makes every column
        // start with -1
        for (c, s) in signs.iter_mut().enumerate() {
            *s = -m.column(perm[c])[0];
        }
        let cand = m.permute_columns(&perm, &signs);
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
    }
    best.expect("at least one column")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn generic(rows: usize, k: usize, seed: u64) -> SpinAssignment {
        // columns distinct and not negations of each other
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let m = SpinAssignment::random(rows * k, rows, &mut rng);
            if symmetry_orbit(&m).len() == permutations(k).len() << k {
                return m;
            }
        }
    }

    #[test]
    fn rejects_non_spins() {
        assert!(SpinAssignment::new(vec![1, 0], 2).is_err());
        assert!(SpinAssignment::new(vec![1, 1, 1], 2).is_err());
        assert!(SpinAssignment::parse_signs("+x", 2).is_err());
    }

    #[test]
    fn column_major_layout() {
        let m = SpinAssignment::parse_signs("++--+-", 3).unwrap();
        assert_eq!(m.cols(), 2);
        assert_eq!(m.column(0), &[1, 1, -1]);
        assert_eq!(m.get(1, 1), 1);
        assert_eq!(m.to_matrix().row(2), &[-1.0, -1.0]);
    }

    #[test]
    fn sign_string_round_trip() {
        let m = SpinAssignment::parse_signs("+--+", 2).unwrap();
        assert_eq!(m.to_sign_string(), "+--+");
    }

    #[test]
    fn orbit_sizes() {
        assert_eq!(symmetry_orbit(&generic(8, 3, 1)).len(), 48);
        assert_eq!(symmetry_orbit(&generic(5, 1, 2)).len(), 2);
        assert_eq!(symmetry_orbit(&generic(4, 2, 3)).len(), 8);
        let twin = SpinAssignment::parse_signs("+-++" .repeat(2).as_str(), 4).unwrap();
        assert!(symmetry_orbit(&twin).len() < 8);
    }

    #[test]
    fn duplicate_columns_orbit_by_enumeration() {
        // identical columns: swapping them is a no-op, so only sign patterns
        // remain distinct: 2^2 images
        let twin = SpinAssignment::parse_signs("+-+-+-", 3).unwrap();
        assert_eq!(symmetry_orbit(&twin).len(), 4);
    }

    #[test]
    fn canonical_form_is_orbit_minimum() {
        let m = generic(8, 3, 7);
        let orbit = symmetry_orbit(&m);
        let canon = canonical_form(&m);
        assert_eq!(canon, orbit[0]);
        assert_eq!(canonical_form(&canon), canon);
        for member in &orbit {
            assert_eq!(canonical_form(member), canon);
        }
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(1), vec![vec![0]]);
    }
}
