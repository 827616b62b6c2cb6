//! Sparse mode sequences over ℤ and the weighted norms `ℓ^{s,p}`.

use std::io::{Read, Write};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{cis, fmt_real, Scalar};

/// Finitely supported complex sequence indexed by ℤ.
///
/// Entries are kept sorted by index with no duplicates; amplitudes whose
/// modulus falls below [`Scalar::drop_threshold`] are removed.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModeSequence<T: Scalar> {
    entries: Vec<(i64, Complex<T>)>,
}

/// Exponents of `ℓ^{s,p}`: weight `⟨n⟩^s`, summability `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceParams {
    s: f64,
    p: f64,
}

impl SpaceParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("smoothness s must be >= 0, got {s}")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::invalid(format!("exponent p must lie in [1, inf), got {p}")));
        }
        Ok(Self { s, p })
    }

    /// Unweighted `ℓ^p`.
    pub fn lp(p: f64) -> Result<Self> {
        Self::new(0.0, p)
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Japanese bracket `⟨x⟩ = (1 + x²)^{1/2}`.
pub fn bracket<T: Scalar>(x: T) -> T {
    (T::one() + x * x).sqrt()
}

impl<T: Scalar> ModeSequence<T> {
    pub fn zero() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// Builds a sequence from arbitrary `(index, value)` pairs; repeated
    /// indices are summed.
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (i64, Complex<T>)>,
    {
        let mut raw: Vec<(i64, Complex<T>)> = entries.into_iter().collect();
        raw.sort_by_key(|e| e.0);
        let mut merged: Vec<(i64, Complex<T>)> = Vec::with_capacity(raw.len());
        for (n, v) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == n => last.1 += v,
                _ => merged.push((n, v)),
            }
        }
        let threshold = T::drop_threshold();
        merged.retain(|(_, v)| v.norm() > threshold);
        Self { entries: merged }
    }

    pub fn single(n: i64, value: Complex<T>) -> Self {
        Self::from_entries([(n, value)])
    }

    pub fn get(&self, n: i64) -> Complex<T> {
        match self.entries.binary_search_by_key(&n, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => Complex::new(T::zero(), T::zero()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex<T>)> + '_ {
        self.entries.iter().copied()
    }

    pub fn entries(&self) -> &[(i64, Complex<T>)] {
        &self.entries
    }

    pub fn support(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest `|n|` in the support, `None` for the empty sequence.
    pub fn radius(&self) -> Option<i64> {
        self.entries.iter().map(|e| e.0.abs()).max()
    }

    pub fn map_values(&self, mut f: impl FnMut(i64, Complex<T>) -> Complex<T>) -> Self {
        Self::from_entries(self.entries.iter().map(|&(n, v)| (n, f(n, v))))
    }

    pub fn scaled(&self, lambda: Complex<T>) -> Self {
        self.map_values(|_, v| v * lambda)
    }

    pub fn conj(&self) -> Self {
        self.map_values(|_, v| v.conj())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_entries(self.iter().chain(other.iter()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_entries(self.iter().chain(other.iter().map(|(n, v)| (n, -v))))
    }

    /// `(Σ ⟨n⟩^{ps} |x_n|^p)^{1/p}`.
    pub fn norm_lsp(&self, sp: SpaceParams) -> T {
        let p = T::of(sp.p);
        let s = T::of(sp.s);
        let total = self
            .entries
            .iter()
            .map(|&(n, v)| {
                let w = bracket(T::of_int(n)).powf(p * s);
                w * v.norm().powf(p)
            })
            .fold(T::zero(), |a, b| a + b);
        total.powf(T::one() / p)
    }

    pub fn norm_l1(&self) -> T {
        self.entries
            .iter()
            .map(|e| e.1.norm())
            .fold(T::zero(), |a, b| a + b)
    }

    /// `Σ |x_n|²`.
    pub fn mass(&self) -> T {
        self.entries
            .iter()
            .map(|e| e.1.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn sup_norm(&self) -> T {
        self.entries
            .iter()
            .map(|e| e.1.norm())
            .fold(T::zero(), T::max)
    }

    /// `sup_n |x_n − y_n|`.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.sub(other).sup_norm()
    }

    /// Fourier truncation: keeps `|n| ≤ cutoff`.
    pub fn truncate(&self, cutoff: u64) -> Self {
        let cutoff = cutoff as i64;
        Self {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| e.0.abs() <= cutoff)
                .collect(),
        }
    }

    /// Writes `n,re,im` rows sorted by `n` with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "re", "im"])?;
        for &(n, v) in &self.entries {
            w.write_record([n.to_string(), fmt_real(v.re), fmt_real(v.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut entries = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i)
                    .map(str::trim)
                    .ok_or_else(|| Error::invalid(format!("row {}: missing column {i}", row + 1)))
            };
            let n: i64 = field(0)?
                .parse()
                .map_err(|e| Error::invalid(format!("row {}: index: {e}", row + 1)))?;
            let re: f64 = field(1)?
                .parse()
                .map_err(|e| Error::invalid(format!("row {}: re: {e}", row + 1)))?;
            let im: f64 = field(2)?
                .parse()
                .map_err(|e| Error::invalid(format!("row {}: im: {e}", row + 1)))?;
            entries.push((n, Complex::new(T::of(re), T::of(im))));
        }
        Ok(Self::from_entries(entries))
    }
}

/// Seeded datum on `[−cutoff, cutoff]` with `|x_n| = scale·⟨n⟩^{−decay}`
/// and independent uniform phases.
pub fn random_datum<T: Scalar>(cutoff: u64, decay: f64, scale: f64, seed: u64) -> ModeSequence<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_max = cutoff as i64;
    let entries: Vec<_> = (-n_max..=n_max)
        .map(|n| {
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let modulus = scale * bracket(n as f64).powf(-decay);
            (n, cis(T::of(phase)) * T::of(modulus))
        })
        .collect();
    ModeSequence::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn norm_of_empty_is_zero() {
        let x = ModeSequence::<f64>::zero();
        assert_eq!(x.norm_lsp(SpaceParams::new(1.5, 3.0).unwrap()), 0.0);
    }

    #[test]
    fn norm_single_weighted_entry() {
        let x = ModeSequence::single(3, c(2.0, 0.0));
        let got = x.norm_lsp(SpaceParams::new(1.0, 2.0).unwrap());
        assert!((got - 2.0 * 10f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn norm_unweighted_l1() {
        let x = ModeSequence::from_entries([(-1, c(1.0, 0.0)), (1, c(1.0, 0.0))]);
        assert!((x.norm_lsp(SpaceParams::lp(1.0).unwrap()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn space_params_reject_bad_input() {
        assert!(SpaceParams::new(-0.1, 2.0).is_err());
        assert!(SpaceParams::new(0.0, 0.5).is_err());
        assert!(SpaceParams::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn truncate_cases() {
        let x = ModeSequence::from_entries([(-5, c(1.0, 0.0)), (0, c(2.0, 0.0)), (5, c(3.0, 0.0))]);
        assert_eq!(x.truncate(3).support(), vec![0]);
        assert_eq!(x.truncate(5), x);
        assert_eq!(x.truncate(100), x);
        assert_eq!(x.truncate(0).support(), vec![0]);
    }

    #[test]
    fn normalization_merges_and_drops() {
        let x = ModeSequence::from_entries([(2, c(1.0, 0.0)), (2, c(-1.0, 0.0)), (1, c(1e-301, 0.0)), (0, c(0.5, 0.0))]);
        assert_eq!(x.support(), vec![0]);
    }

    #[test]
    fn random_datum_properties() {
        let z: ModeSequence<f64> = random_datum(4, 1.0, 0.0, 7);
        assert!(z.is_empty());

        let x: ModeSequence<f64> = random_datum(2, 0.0, 1.0, 11);
        assert_eq!(x.len(), 5);
        for (_, v) in x.iter() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }

        let y: ModeSequence<f64> = random_datum(2, 0.0, 1.0, 11);
        assert_eq!(x, y);
        let w: ModeSequence<f64> = random_datum(2, 0.0, 1.0, 12);
        assert_ne!(x, w);
    }

    #[test]
    fn f32_sequences_work() {
        let x: ModeSequence<f32> = random_datum(3, 0.5, 0.25, 1);
        assert_eq!(x.len(), 7);
        assert!(x.norm_l1() > 0.0);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let x: ModeSequence<f64> = random_datum(3, 1.0, 0.3, 5);
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,re,im\n-3,"));
        let back = ModeSequence::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn csv_rejects_garbage() {
        let bad = "n,re,im\n1,abc,0\n";
        assert!(ModeSequence::<f64>::read_csv(bad.as_bytes()).is_err());
    }

    fn arb_seq() -> impl Strategy<Value = ModeSequence<f64>> {
        prop::collection::vec((-20i64..=20, -3.0..3.0f64, -3.0..3.0f64), 0..12)
            .prop_map(|v| ModeSequence::from_entries(v.into_iter().map(|(n, re, im)| (n, c(re, im)))))
    }

    proptest! {
        #[test]
        fn truncation_never_increases_norm(x in arb_seq(), cutoff in 0u64..25, s in 0.0..2.0f64, p in 1.0..5.0f64) {
            let sp = SpaceParams::new(s, p).unwrap();
            prop_assert!(x.truncate(cutoff).norm_lsp(sp) <= x.norm_lsp(sp) * (1.0 + 1e-12));
        }

        #[test]
        fn norm_is_absolutely_homogeneous(x in arb_seq(), re in -4.0..4.0f64, im in -4.0..4.0f64, p in 1.0..4.0f64) {
            let sp = SpaceParams::new(0.5, p).unwrap();
            let lambda = c(re, im);
            let lhs = x.scaled(lambda).norm_lsp(sp);
            let rhs = lambda.norm() * x.norm_lsp(sp);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
        }

        #[test]
        fn lp_nesting(x in arb_seq(), p1 in 1.0..4.0f64, dp in 0.0..4.0f64) {
            let n1 = x.norm_lsp(SpaceParams::lp(p1).unwrap());
            let n2 = x.norm_lsp(SpaceParams::lp(p1 + dp).unwrap());
            prop_assert!(n2 <= n1 * (1.0 + 1e-12) + 1e-300);
        }
    }
}
