//! Exponential polynomials `Σ c·t^p·e^{iθt}` with integer phases, and the
//! tree coefficients `I_T(t, 𝐣)` computed from them exactly, by Monte Carlo
//! over the order region, and against both coefficient bounds.

use std::io::Write;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::indexsets::{rho_all, sigma_node, IndexAssignment};
use crate::modes::bracket;
use crate::scalar::{cis, Omega, Scalar};
use crate::trees::{NodeId, OrnamentedTree, Tree};

/// Default hard limit on the number of terms in one [`ExpPoly`].
pub const DEFAULT_TERM_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpTerm<T: Scalar> {
    pub coeff: Complex<T>,
    pub power: u32,
    pub phase: i64,
}

/// Finite sum `Σ c·t^p·e^{iθt}` with `θ ∈ ℤ`, at most one term per
/// `(phase, power)`, sorted by that key.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExpPoly<T: Scalar> {
    terms: Vec<ExpTerm<T>>,
}

fn czero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

impl<T: Scalar> ExpPoly<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(Complex::new(T::one(), T::zero()))
    }

    pub fn constant(c: Complex<T>) -> Self {
        Self::term(c, 0, 0)
    }

    pub fn term(coeff: Complex<T>, power: u32, phase: i64) -> Self {
        Self::from_terms(vec![ExpTerm { coeff, power, phase }])
    }

    /// `e^{iθt}`.
    pub fn exp_i(phase: i64) -> Self {
        Self::term(Complex::new(T::one(), T::zero()), 0, phase)
    }

    pub fn from_terms(mut terms: Vec<ExpTerm<T>>) -> Self {
        terms.sort_unstable_by_key(|x| (x.phase, x.power));
        let mut merged: Vec<ExpTerm<T>> = Vec::with_capacity(terms.len());
        for x in terms {
            match merged.last_mut() {
                Some(last) if last.phase == x.phase && last.power == x.power => last.coeff += x.coeff,
                _ => merged.push(x),
            }
        }
        let threshold = T::drop_threshold();
        merged.retain(|x| x.coeff.norm() > threshold);
        Self { terms: merged }
    }

    pub fn terms(&self) -> &[ExpTerm<T>] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_power(&self) -> u32 {
        self.terms.iter().map(|x| x.power).max().unwrap_or(0)
    }

    pub fn eval(&self, t: T) -> Complex<T> {
        let mut acc = czero();
        for x in &self.terms {
            acc += x.coeff * cis(T::of_int(x.phase) * t) * t.powi(x.power as i32);
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut all = self.terms.clone();
        all.extend_from_slice(&other.terms);
        Self::from_terms(all)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex::new(-T::one(), T::zero())))
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|x| ExpTerm {
                    coeff: x.coeff * c,
                    ..*x
                })
                .collect(),
        )
    }

    /// Complex conjugate for real `t`: conjugated coefficients, negated phases.
    pub fn conj(&self) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|x| ExpTerm {
                    coeff: x.coeff.conj(),
                    power: x.power,
                    phase: -x.phase,
                })
                .collect(),
        )
    }

    /// Multiplication by `e^{iδt}`.
    pub fn shift_phase(&self, delta: i64) -> Self {
        Self {
            terms: {
                let mut v: Vec<_> = self
                    .terms
                    .iter()
                    .map(|x| ExpTerm {
                        phase: x.phase + delta,
                        ..*x
                    })
                    .collect();
                // a uniform shift preserves the sort order
                v.shrink_to_fit();
                v
            },
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_empty() || other.is_empty() {
            return Self::zero();
        }
        let mut out = Vec::with_capacity(self.len() * other.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push(ExpTerm {
                    coeff: a.coeff * b.coeff,
                    power: a.power + b.power,
                    phase: a.phase + b.phase,
                });
            }
        }
        Self::from_terms(out)
    }

    /// Product with a hard limit on the unmerged term count.
    pub fn checked_mul(&self, other: &Self, cap: usize) -> Result<Self> {
        Error::check_cap("ExpPoly term count", (self.len() * other.len()) as u128, cap as u128)?;
        Ok(self.mul(other))
    }

    /// Primitive vanishing at `t = 0`.
    ///
    /// For `θ ≠ 0`, `∫₀ᵗ s^p e^{iθs} ds = e^{iθt} Σ_{r=0}^{p} (−1)^r p!/(p−r)! t^{p−r} (iθ)^{−(r+1)}
    /// − (−1)^p p! (iθ)^{−(p+1)}`.
    pub fn integrate(&self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * 2);
        for x in &self.terms {
            if x.phase == 0 {
                out.push(ExpTerm {
                    coeff: x.coeff / T::of_int(x.power as i64 + 1),
                    power: x.power + 1,
                    phase: 0,
                });
                continue;
            }
            // 1/(iθ) = −i/θ
            let inv = Complex::new(T::zero(), -T::one() / T::of_int(x.phase));
            let mut factor = x.coeff * inv;
            for r in 0..=x.power {
                out.push(ExpTerm {
                    coeff: factor,
                    power: x.power - r,
                    phase: x.phase,
                });
                // next: multiply by −(p−r)/(iθ)
                factor = factor * inv * (-T::of_int((x.power - r) as i64));
            }
            // the last pushed coefficient is (−1)^p p! c/(iθ)^{p+1}
            let last = out.last().expect("pushed").coeff;
            out.push(ExpTerm {
                coeff: -last,
                power: 0,
                phase: 0,
            });
        }
        Self::from_terms(out)
    }

    pub fn derivative(&self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * 2);
        for x in &self.terms {
            if x.power > 0 {
                out.push(ExpTerm {
                    coeff: x.coeff * T::of_int(x.power as i64),
                    power: x.power - 1,
                    phase: x.phase,
                });
            }
            if x.phase != 0 {
                out.push(ExpTerm {
                    coeff: x.coeff * Complex::new(T::zero(), T::of_int(x.phase)),
                    power: x.power,
                    phase: x.phase,
                });
            }
        }
        Self::from_terms(out)
    }
}

/// Accumulates many products and sums into one [`ExpPoly`], merging
/// like terms whenever the raw buffer doubles.
#[derive(Debug, Default)]
pub struct ExpPolyBuilder<T: Scalar> {
    raw: Vec<ExpTerm<T>>,
    compact_at: usize,
}

impl<T: Scalar> ExpPolyBuilder<T> {
    pub fn new() -> Self {
        Self {
            raw: Vec::new(),
            compact_at: 1 << 12,
        }
    }

    fn maybe_compact(&mut self) {
        if self.raw.len() >= self.compact_at {
            let merged = ExpPoly::from_terms(std::mem::take(&mut self.raw));
            self.raw = merged.terms;
            self.compact_at = (2 * self.raw.len()).max(1 << 12);
        }
    }

    pub fn add(&mut self, p: &ExpPoly<T>) {
        self.raw.extend_from_slice(&p.terms);
        self.maybe_compact();
    }

    /// Adds `c · a · b`.
    pub fn add_product(&mut self, a: &ExpPoly<T>, b: &ExpPoly<T>, c: Complex<T>) {
        for x in &a.terms {
            let xc = x.coeff * c;
            for y in &b.terms {
                self.raw.push(ExpTerm {
                    coeff: xc * y.coeff,
                    power: x.power + y.power,
                    phase: x.phase + y.phase,
                });
            }
            self.maybe_compact();
        }
    }

    pub fn finish(self) -> ExpPoly<T> {
        ExpPoly::from_terms(self.raw)
    }
}

/// An ornamented tree with an admissible assignment and the sign `ω`.
#[derive(Clone, Copy, Debug)]
pub struct PhasedTree<'a> {
    pub tree: &'a OrnamentedTree,
    pub assignment: &'a IndexAssignment,
    pub omega: Omega,
}

impl PhasedTree<'_> {
    /// Per-node phase `±_u ω σ_u(𝐣)`; zero at leaves.
    pub fn phases(&self) -> Vec<i64> {
        let tree = self.tree.tree();
        (0..tree.len())
            .map(|v| tree.sign(v).as_int() * self.omega.as_int() * sigma_node(tree, self.assignment, v))
            .collect()
    }
}

/// `F_v(t) = ∫₀ᵗ e^{iφ_v s} Π_{non-terminal children c} F_c(s) ds`, returned
/// for the root; `phases` holds one entry per node.
pub fn coefficient_poly<T: Scalar>(tree: &Tree, phases: &[i64]) -> ExpPoly<T> {
    assert_eq!(phases.len(), tree.len());
    let mut polys: Vec<Option<ExpPoly<T>>> = vec![None; tree.len()];
    for v in (0..tree.len()).rev() {
        if let Some(ch) = tree.children(v) {
            let mut integrand = ExpPoly::exp_i(phases[v]);
            for c in ch {
                if let Some(p) = polys[c].take() {
                    integrand = integrand.mul(&p);
                }
            }
            polys[v] = Some(integrand.integrate());
        }
    }
    polys[0].take().unwrap_or_else(ExpPoly::one)
}

/// `I_T(t, 𝐣)` and its full exponential-polynomial form in `t`.
pub fn tree_coefficient_exact<T: Scalar>(pt: &PhasedTree<'_>, t: T) -> (Complex<T>, ExpPoly<T>) {
    let poly = coefficient_poly::<T>(pt.tree.tree(), &pt.phases());
    (poly.eval(t), poly)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureEstimate<T: Scalar> {
    pub value: Complex<T>,
    pub std_error: T,
}

/// Uniformly random linear extension of the internal nodes (parents first).
fn random_linear_extension(tree: &Tree, v: NodeId, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let mut parts: Vec<Vec<NodeId>> = Vec::new();
    if let Some(ch) = tree.children(v) {
        for c in ch {
            if !tree.is_leaf(c) {
                parts.push(random_linear_extension(tree, c, rng));
            }
        }
    }
    let mut labels: Vec<usize> = parts
        .iter()
        .enumerate()
        .flat_map(|(i, p)| std::iter::repeat_n(i, p.len()))
        .collect();
    for i in (1..labels.len()).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    let mut cursors = vec![0usize; parts.len()];
    let mut out = Vec::with_capacity(labels.len() + 1);
    out.push(v);
    for l in labels {
        out.push(parts[l][cursors[l]]);
        cursors[l] += 1;
    }
    out
}

/// Monte-Carlo estimate of `I_T(t, 𝐣)`: uniform points of the order region
/// are drawn by sorting uniform times along a random linear extension.
pub fn tree_coefficient_quadrature<T: Scalar>(
    pt: &PhasedTree<'_>,
    t: T,
    samples: usize,
    seed: u64,
) -> Result<QuadratureEstimate<T>> {
    if samples < 1000 {
        return Err(Error::invalid(format!("quadrature needs >= 1000 samples, got {samples}")));
    }
    let tree = pt.tree.tree();
    let internal = tree.internal_nodes();
    if internal.is_empty() {
        return Ok(QuadratureEstimate {
            value: Complex::new(T::one(), T::zero()),
            std_error: T::zero(),
        });
    }
    let phases = pt.phases();
    let tf = t.to_f64().expect("finite time");
    // vol R(T,t) = t^k / Π_v h_v (hook length formula for trees)
    let hooks: f64 = internal.iter().map(|&v| tree.internal_count_below(v) as f64).product();
    let volume = tf.powi(internal.len() as i32) / hooks;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0f64; internal.len()];
    let (mut sum_re, mut sum_im, mut sum_sq) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let order = random_linear_extension(tree, 0, &mut rng);
        for x in times.iter_mut() {
            *x = rng.gen_range(0.0..=tf);
        }
        times.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        let theta: f64 = order
            .iter()
            .zip(&times)
            .map(|(&v, &s)| phases[v] as f64 * s)
            .sum();
        let (im, re) = theta.sin_cos();
        sum_re += re;
        sum_im += im;
        sum_sq += 1.0;
    }
    let n = samples as f64;
    let mean_re = sum_re / n;
    let mean_im = sum_im / n;
    // each sample has modulus one: E|f − mean|² = 1 − |mean|²
    let var = (sum_sq / n - mean_re * mean_re - mean_im * mean_im).max(0.0) * n / (n - 1.0);
    Ok(QuadratureEstimate {
        value: Complex::new(T::of(volume * mean_re), T::of(volume * mean_im)),
        std_error: T::of(volume * (var / n).sqrt()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport<T: Scalar> {
    pub lhs: T,
    /// `t^{|T⁰|}`.
    pub bound_a: T,
    /// `2^{|T|} Σ_{ε} Π_{w ∈ T⁰} ⟨ρ_w⟩^{−1}`.
    pub bound_b: T,
    pub pass: bool,
}

/// Evaluates `|I_T(t)|` against both coefficient bounds; the `ε`-sum runs over
/// every `{−1,0,1}` choice on the edges to non-terminal children.
pub fn coefficient_bound_check<T: Scalar>(pt: &PhasedTree<'_>, t: T, eps_cap: u128) -> Result<BoundReport<T>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::invalid(format!("bound check needs t in [0, 1], got {t}")));
    }
    let tree = pt.tree.tree();
    let edges = pt.tree.eps_edges().len();
    let choices = 3u128.saturating_pow(edges as u32);
    Error::check_cap("eps choice count", choices, eps_cap)?;

    let (value, _) = tree_coefficient_exact(pt, t);
    let lhs = value.norm();
    let bound_a = t.powi(tree.internal_count() as i32);
    let internal = tree.internal_nodes();
    let mut sum = T::zero();
    for code in 0..choices {
        let mut c = code;
        let vals: Vec<i8> = (0..edges)
            .map(|_| {
                let d = (c % 3) as i8 - 1;
                c /= 3;
                d
            })
            .collect();
        let variant = pt.tree.with_eps(&vals)?;
        let rho = rho_all(&variant, pt.assignment);
        let prod = internal
            .iter()
            .map(|&w| T::one() / bracket(T::of_int(rho[w])))
            .fold(T::one(), |a, b| a * b);
        sum += prod;
    }
    let bound_b = T::of(2.0).powi(tree.len() as i32) * sum;
    // slack for rounding in the exact evaluation
    let slack = T::one() + T::of(1e3) * T::epsilon();
    Ok(BoundReport {
        lhs,
        bound_a,
        bound_b,
        pass: lhs <= bound_a * slack && lhs <= bound_b * slack,
    })
}

/// Short stable hex digest used as a cache key.
pub fn stable_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn assignment_hash(a: &IndexAssignment) -> String {
    let text: Vec<String> = a.values().iter().map(i64::to_string).collect();
    stable_hash(&text.join(","))
}

/// One coefficient-cache line, `tree_hash,assignment_hash,t,re,im`.
pub fn write_cache_line<T: Scalar, W: Write>(mut out: W, pt: &PhasedTree<'_>, t: T, value: Complex<T>) -> Result<()> {
    writeln!(
        out,
        "{},{},{},{},{}",
        stable_hash(&pt.tree.serialize()),
        assignment_hash(pt.assignment),
        t,
        value.re,
        value.im
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexsets::{complete_assignment, enumerate_assignments};
    use crate::trees::{enumerate_ornamented, EnumLimits, NodeKind, Sign};
    use proptest::prelude::{prop, prop_assert, proptest, Strategy};

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Composite Gauss–Legendre on `[0, t]` for a smooth scalar integrand.
    fn gl<F: Fn(f64) -> C>(f: F, t: f64, panels: usize) -> C {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let h = t / panels as f64;
        let mut acc = c(0.0, 0.0);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for &(x, w) in &nodes {
                acc += f(mid + 0.5 * h * x) * (0.5 * h * w);
            }
        }
        acc
    }

    #[test]
    fn mul_examples() {
        let b = ExpPoly::from_terms(vec![
            ExpTerm { coeff: c(1.0, 2.0), power: 1, phase: 3 },
            ExpTerm { coeff: c(-0.5, 0.0), power: 0, phase: -1 },
        ]);
        assert_eq!(ExpPoly::one().mul(&b), b);
        let t1 = ExpPoly::<f64>::term(c(1.0, 0.0), 1, 0);
        assert_eq!(t1.mul(&t1), ExpPoly::term(c(1.0, 0.0), 2, 0));
        assert_eq!(ExpPoly::<f64>::exp_i(2).mul(&ExpPoly::exp_i(-2)), ExpPoly::one());
    }

    #[test]
    fn integrate_examples() {
        assert_eq!(ExpPoly::<f64>::one().integrate(), ExpPoly::term(c(1.0, 0.0), 1, 0));
        let p = ExpPoly::<f64>::exp_i(2).integrate();
        for t in [0.0, 0.3, 1.0, 2.5] {
            let expect = (c(0.0, 2.0 * t).exp() - 1.0) / c(0.0, 2.0);
            assert!(close(p.eval(t), expect, 1e-15));
        }
        let q = ExpPoly::<f64>::term(c(1.0, 0.0), 1, 0).integrate();
        assert_eq!(q, ExpPoly::term(c(0.5, 0.0), 2, 0));
    }

    #[test]
    fn integrate_polynomial_times_exponential_against_quadrature() {
        for (power, phase) in [(1u32, 3i64), (3, -2), (5, 7), (2, 1)] {
            let p = ExpPoly::<f64>::term(c(0.7, -0.2), power, phase);
            let prim = p.integrate();
            for t in [0.4, 1.0] {
                let num = gl(|s| p.eval(s), t, 64);
                assert!(close(prim.eval(t), num, 1e-12), "p={power} θ={phase}");
            }
        }
    }

    fn arb_poly() -> impl Strategy<Value = ExpPoly<f64>> {
        prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0u32..4, -6i64..=6), 0..8).prop_map(|v| {
            ExpPoly::from_terms(
                v.into_iter()
                    .map(|(re, im, power, phase)| ExpTerm { coeff: c(re, im), power, phase })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn primitive_vanishes_at_zero_and_differentiates_back(p in arb_poly()) {
            let prim = p.integrate();
            prop_assert!(prim.eval(0.0).norm() <= 1e-12);
            let back = prim.derivative();
            let diff = back.sub(&p);
            for x in diff.terms() {
                prop_assert!(x.coeff.norm() <= 1e-12 * (1.0 + p.terms().iter().map(|y| y.coeff.norm()).sum::<f64>()));
            }
        }

        #[test]
        fn product_evaluates_pointwise(a in arb_poly(), b in arb_poly(), t in 0.0..1.5f64) {
            let lhs = a.mul(&b).eval(t);
            let rhs = a.eval(t) * b.eval(t);
            prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        }
    }

    fn one_node(kind: NodeKind) -> OrnamentedTree {
        let l = OrnamentedTree::leaf(Sign::Plus);
        let m = OrnamentedTree::leaf(Sign::Minus);
        OrnamentedTree::join(kind, Sign::Plus, [&l, &m, &l], [0; 3])
    }

    #[test]
    fn coefficient_base_cases() {
        let leaf = OrnamentedTree::leaf(Sign::Plus);
        let a = complete_assignment(&leaf, &[4]).unwrap();
        let pt = PhasedTree { tree: &leaf, assignment: &a, omega: Omega::Plus };
        assert_eq!(tree_coefficient_exact(&pt, 0.7).0, c(1.0, 0.0));

        let s = one_node(NodeKind::Simple);
        let a = complete_assignment(&s, &[2, 2, 2]).unwrap();
        let pt = PhasedTree { tree: &s, assignment: &a, omega: Omega::Minus };
        assert!(close(tree_coefficient_exact(&pt, 0.7).0, c(0.7, 0.0), 1e-15));
    }

    #[test]
    fn single_node_phase_two() {
        let poly = coefficient_poly::<f64>(one_node(NodeKind::General).tree(), &[2, 0, 0, 0]);
        let v = poly.eval(1.0);
        let expect = (c(0.0, 2.0).exp() - 1.0) / c(0.0, 2.0);
        assert!(close(v, expect, 1e-15));
        // (e^{2i} − 1)/(2i) = sin(2)/2 + i(1 − cos 2)/2
        assert!((v.re - 0.454_649).abs() < 1e-6 && (v.im - 0.708_073).abs() < 1e-6);
    }

    #[test]
    fn quadrature_base_cases() {
        let leaf = OrnamentedTree::leaf(Sign::Plus);
        let a = complete_assignment(&leaf, &[0]).unwrap();
        let pt = PhasedTree { tree: &leaf, assignment: &a, omega: Omega::Plus };
        let q = tree_coefficient_quadrature::<f64>(&pt, 1.0, 1000, 1).unwrap();
        assert_eq!(q.value, c(1.0, 0.0));

        let s = one_node(NodeKind::Simple);
        let a = complete_assignment(&s, &[1, 1, 1]).unwrap();
        let pt = PhasedTree { tree: &s, assignment: &a, omega: Omega::Plus };
        let q = tree_coefficient_quadrature::<f64>(&pt, 0.6, 2000, 1).unwrap();
        assert!(close(q.value, c(0.6, 0.0), 3.0 * q.std_error + 1e-12));
        assert!(tree_coefficient_quadrature::<f64>(&pt, 0.6, 10, 1).is_err());
    }

    #[test]
    fn region_volume_matches_exact_zero_phase_coefficient() {
        // with all phases zero, I_T(t) is the volume of the order region
        for k in 0..=4 {
            for t in enumerate_ornamented(k, false, false, EnumLimits::default()).unwrap() {
                let zeros = vec![0; t.tree().len()];
                let v = coefficient_poly::<f64>(t.tree(), &zeros).eval(1.0);
                let hooks: f64 = t.tree().internal_nodes().iter().map(|&u| t.tree().internal_count_below(u) as f64).product();
                assert!((v.re - 1.0 / hooks).abs() < 1e-14 && v.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nested_coefficient_against_iterated_quadrature() {
        // root phase 3 over a middle child with phase −5: ∫₀ᵗ e^{3is} ∫₀ˢ e^{−5ir} dr ds
        let l = OrnamentedTree::leaf(Sign::Plus);
        let g = one_node(NodeKind::General);
        let t2 = OrnamentedTree::join(NodeKind::General, Sign::Plus, [&l, &g, &l], [0; 3]);
        let mut phases = vec![0; t2.tree().len()];
        phases[0] = 3;
        phases[2] = -5;
        let poly = coefficient_poly::<f64>(t2.tree(), &phases);
        let inner = |s: f64| (c(0.0, -5.0 * s).exp() - 1.0) / c(0.0, -5.0);
        let num = gl(|s| c(0.0, 3.0 * s).exp() * inner(s), 0.9, 64);
        assert!(close(poly.eval(0.9), num, 1e-13));
    }

    #[test]
    fn exact_matches_monte_carlo_on_small_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for k in 0..=2 {
            for t in enumerate_ornamented(k, false, false, EnumLimits::default()).unwrap() {
                let all = enumerate_assignments(&t, 3, 1 << 30).unwrap();
                let a = &all[rng.gen_range(0..all.len())];
                let pt = PhasedTree { tree: &t, assignment: a, omega: Omega::Plus };
                for time in [0.3, 1.0] {
                    let (exact, _) = tree_coefficient_exact(&pt, time);
                    let q = tree_coefficient_quadrature(&pt, time, 20_000, rng.gen()).unwrap();
                    assert!(close(exact, q.value, 4.0 * q.std_error + 1e-12), "{t}");
                    assert!(exact.norm() <= time.powi(k as i32) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn bound_check_cases() {
        let leaf = OrnamentedTree::leaf(Sign::Plus);
        let a = complete_assignment(&leaf, &[0]).unwrap();
        let pt = PhasedTree { tree: &leaf, assignment: &a, omega: Omega::Plus };
        let r = coefficient_bound_check::<f64>(&pt, 0.4, 1000).unwrap();
        assert!(r.pass && r.lhs == 1.0 && r.bound_a == 1.0);

        let s = one_node(NodeKind::Simple);
        let a = complete_assignment(&s, &[3, 3, 3]).unwrap();
        let pt = PhasedTree { tree: &s, assignment: &a, omega: Omega::Plus };
        let r = coefficient_bound_check::<f64>(&pt, 0.5, 1000).unwrap();
        assert!(r.pass);
        assert!((r.lhs - 0.5).abs() < 1e-15 && r.bound_a == 0.5);
        assert!(coefficient_bound_check::<f64>(&pt, 1.5, 1000).is_err());
    }

    #[test]
    fn bounds_hold_on_all_small_trees() {
        for k in 0..=2 {
            for t in enumerate_ornamented(k, false, false, EnumLimits::default()).unwrap() {
                for a in enumerate_assignments(&t, 2, 1 << 30).unwrap().iter().step_by(7) {
                    for omega in [Omega::Plus, Omega::Minus] {
                        let pt = PhasedTree { tree: &t, assignment: a, omega };
                        for time in [0.3, 1.0] {
                            assert!(coefficient_bound_check::<f64>(&pt, time, 1000).unwrap().pass);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sibling_permutation_with_equal_phases_is_invisible() {
        let g = one_node(NodeKind::General);
        let l = OrnamentedTree::leaf(Sign::Plus);
        let a = OrnamentedTree::join(NodeKind::General, Sign::Plus, [&g, &l, &l], [0; 3]);
        let b = OrnamentedTree::join(NodeKind::General, Sign::Plus, [&l, &l, &g], [0; 3]);
        let mut pa = vec![0; a.tree().len()];
        pa[0] = 4;
        pa[1] = -6;
        let mut pb = vec![0; b.tree().len()];
        pb[0] = 4;
        pb[3] = -6;
        let x = coefficient_poly::<f64>(a.tree(), &pa).eval(0.8);
        let y = coefficient_poly::<f64>(b.tree(), &pb).eval(0.8);
        assert!(close(x, y, 1e-15));
    }

    #[test]
    fn f32_exact_coefficient() {
        let poly = coefficient_poly::<f32>(one_node(NodeKind::General).tree(), &[2, 0, 0, 0]);
        let v = poly.eval(1.0f32);
        assert!((v.re - 0.454_649).abs() < 1e-5);
    }

    #[test]
    fn cache_line_format() {
        let g = one_node(NodeKind::General);
        let a = complete_assignment(&g, &[1, 2, 3]).unwrap();
        let pt = PhasedTree { tree: &g, assignment: &a, omega: Omega::Plus };
        let mut buf = Vec::new();
        write_cache_line(&mut buf, &pt, 0.5, c(0.25, -0.125)).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0].len(), 16);
        assert_eq!(&fields[2..], &["0.5", "0.25", "-0.125"]);
        assert_eq!(stable_hash("L+"), stable_hash("L+"));
    }
}
