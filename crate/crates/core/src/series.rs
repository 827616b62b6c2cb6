//! The solution engine: exact-in-time homogeneous Picard components, the
//! signed tree expansion `Σ c_T S_T(t)`, series synthesis and the
//! integral-equation, truncated-nonlinearity and smoothing diagnostics.
//!
//! Components live in the gauged variables `a_n(t) = e^{in²t} û(t,n)` and
//! are stored as one [`ExpPoly`] per mode, so every time integral in the
//! recursion is closed-form.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::coeffs::{ExpPoly, ExpPolyBuilder, DEFAULT_TERM_CAP};
use crate::error::{Error, Result};
use crate::modes::{ModeSequence, SpaceParams};
use crate::scalar::{cis, fmt_real, CompensatedSum, Omega, Scalar};
use crate::treeops::{eval_tree_operator, LeafInputs};
use crate::trees::{fuss_catalan, EnumLimits, NodeKind, OrnamentedTree, Sign};

/// Gauged component `n ↦ c_m(·, n)`, exact in time.
pub type ExactComponent<T> = BTreeMap<i64, ExpPoly<T>>;

fn cone<T: Scalar>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

fn eval_component<T: Scalar>(c: &ExactComponent<T>, t: T) -> ModeSequence<T> {
    ModeSequence::from_entries(c.iter().map(|(&n, p)| (n, p.eval(t))))
}

fn check_cap<T: Scalar>(p: &ExpPoly<T>, cap: usize) -> Result<()> {
    Error::check_cap("ExpPoly term count", p.len() as u128, cap as u128)
}

/// Degree-by-degree Picard recursion for the gauged integral equation.
///
/// With `U_m(j) = e^{−ij²s} c_m(s,j)` the excluded-index sum plus the
/// diagonal term reduce to a full convolution minus twice the degree-split
/// mass, `c_m(t,n) = iω ∫₀ᵗ [e^{in²s} Σ_{j−k+l=n} U U̅ U − 2 Σ c_{m₁}(s,n) μ_{m−1−m₁}(s)] ds`,
/// where `μ_r = Σ_{m₂+m₃=r} Σ_k c̄_{m₂}(k) c_{m₃}(k)`.
#[derive(Clone, Debug)]
pub struct PicardEngine<T: Scalar> {
    omega: Omega,
    cap: usize,
    comps: Vec<ExactComponent<T>>,
    ungauged: Vec<ExactComponent<T>>,
    /// `W_r(q) = Σ_{m₁+m₃=r} Σ_{j+l=q} U_{m₁}(j) U_{m₃}(l)`.
    pair_conv: Vec<ExactComponent<T>>,
    /// `μ_r`.
    mass: Vec<ExpPoly<T>>,
}

impl<T: Scalar> PicardEngine<T> {
    pub fn new(datum: &ModeSequence<T>, omega: Omega, cap: usize) -> Self {
        let c0: ExactComponent<T> = datum.iter().map(|(n, v)| (n, ExpPoly::constant(v))).collect();
        let u0 = Self::ungauge(&c0);
        Self {
            omega,
            cap,
            comps: vec![c0],
            ungauged: vec![u0],
            pair_conv: Vec::new(),
            mass: Vec::new(),
        }
    }

    fn ungauge(c: &ExactComponent<T>) -> ExactComponent<T> {
        c.iter().map(|(&n, p)| (n, p.shift_phase(-n * n))).collect()
    }

    pub fn omega(&self) -> Omega {
        self.omega
    }

    /// Highest degree index computed so far.
    pub fn max_degree(&self) -> usize {
        self.comps.len() - 1
    }

    pub fn components(&self) -> &[ExactComponent<T>] {
        &self.comps
    }

    pub fn component(&self, m: usize) -> &ExactComponent<T> {
        &self.comps[m]
    }

    /// Computes the next component `c_{m+1}`.
    pub fn step(&mut self) -> Result<()> {
        let m = self.comps.len();
        let r = m - 1;
        let w = pair_conv(&self.ungauged, r, r, self.cap)?;
        self.pair_conv.push(w);
        let mu = mass_block(&self.comps, r, r, self.cap)?;
        self.mass.push(mu);
        let conv: Vec<&ExactComponent<T>> = (0..m).map(|m2| &self.pair_conv[m - 1 - m2]).collect();
        let mass: Vec<&ExpPoly<T>> = (0..m).map(|m1| &self.mass[m - 1 - m1]).collect();
        let next = cubic_integrals(&self.comps, &self.ungauged, &conv, &mass, self.omega, None, self.cap)?;
        self.ungauged.push(Self::ungauge(&next));
        self.comps.push(next);
        Ok(())
    }

    pub fn extend_to(&mut self, m: usize) -> Result<()> {
        while self.max_degree() < m {
            self.step()?;
        }
        Ok(())
    }

    pub fn component_at(&self, m: usize, t: T) -> ModeSequence<T> {
        eval_component(&self.comps[m], t)
    }
}

fn degree_pairs(r: usize, kmax: usize, available: usize) -> impl Iterator<Item = (usize, usize)> {
    let hi = kmax.min(available.saturating_sub(1));
    (r.saturating_sub(hi)..=r.min(hi)).map(move |a| (a, r - a))
}

/// `W_r(q) = Σ_{m₁+m₃=r, mᵢ≤kmax} Σ_{j+l=q} U_{m₁}(j) U_{m₃}(l)`.
fn pair_conv<T: Scalar>(u: &[ExactComponent<T>], r: usize, kmax: usize, cap: usize) -> Result<ExactComponent<T>> {
    let pairs: Vec<(usize, usize)> = degree_pairs(r, kmax, u.len()).collect();
    let mut qs = BTreeSet::new();
    for &(a, b) in &pairs {
        for &j in u[a].keys() {
            for &l in u[b].keys() {
                qs.insert(j + l);
            }
        }
    }
    let qs: Vec<i64> = qs.into_iter().collect();
    let one = cone::<T>();
    let entries: Vec<(i64, ExpPoly<T>)> = qs
        .par_iter()
        .map(|&q| {
            let mut acc = ExpPolyBuilder::new();
            for &(a, b) in &pairs {
                for (&j, pj) in &u[a] {
                    if let Some(pl) = u[b].get(&(q - j)) {
                        acc.add_product(pj, pl, one);
                    }
                }
            }
            (q, acc.finish())
        })
        .collect();
    collect_checked(entries, cap)
}

/// `μ_r = Σ_{m₂+m₃=r, mᵢ≤kmax} Σ_k c̄_{m₂}(k) c_{m₃}(k)`.
fn mass_block<T: Scalar>(c: &[ExactComponent<T>], r: usize, kmax: usize, cap: usize) -> Result<ExpPoly<T>> {
    let mut acc = ExpPolyBuilder::new();
    for (a, b) in degree_pairs(r, kmax, c.len()) {
        for (k, pa) in &c[a] {
            if let Some(pb) = c[b].get(k) {
                acc.add_product(&pa.conj(), pb, cone());
            }
        }
    }
    let mu = acc.finish();
    check_cap(&mu, cap)?;
    Ok(mu)
}

fn collect_checked<T: Scalar>(entries: Vec<(i64, ExpPoly<T>)>, cap: usize) -> Result<ExactComponent<T>> {
    let mut out = ExactComponent::new();
    for (n, p) in entries {
        check_cap(&p, cap)?;
        if !p.is_empty() {
            out.insert(n, p);
        }
    }
    Ok(out)
}

/// `iω ∫₀ᵗ [e^{in²s} Σ_{m₂} Σ_k Ū_{m₂}(k) conv[m₂](n+k) − 2 Σ_{m₁} c_{m₁}(n) mass[m₁]] ds`
/// for every reachable `n` (or `|n| ≤ cutoff`).
fn cubic_integrals<T: Scalar>(
    comps: &[ExactComponent<T>],
    ungauged: &[ExactComponent<T>],
    conv: &[&ExactComponent<T>],
    mass: &[&ExpPoly<T>],
    omega: Omega,
    cutoff: Option<u64>,
    cap: usize,
) -> Result<ExactComponent<T>> {
    let mut ns = BTreeSet::new();
    for (m2, w) in conv.iter().enumerate() {
        for &k in ungauged[m2].keys() {
            for &q in w.keys() {
                ns.insert(q - k);
            }
        }
    }
    let ns: Vec<i64> = ns
        .into_iter()
        .filter(|n| cutoff.is_none_or(|c| n.unsigned_abs() <= c))
        .collect();
    let one = cone::<T>();
    let two = Complex::new(T::of(2.0), T::zero());
    let i_omega = omega.i_omega::<T>();
    let entries: Vec<(i64, ExpPoly<T>)> = ns
        .par_iter()
        .map(|&n| {
            let mut full = ExpPolyBuilder::new();
            for (m2, w) in conv.iter().enumerate() {
                for (&k, pk) in &ungauged[m2] {
                    if let Some(pw) = w.get(&(n + k)) {
                        full.add_product(&pk.conj(), pw, one);
                    }
                }
            }
            let mut integrand = ExpPolyBuilder::new();
            integrand.add(&full.finish().shift_phase(n * n));
            for (m1, mu) in mass.iter().enumerate() {
                if let Some(p1) = comps[m1].get(&n) {
                    integrand.add_product(p1, mu, -two);
                }
            }
            (n, integrand.finish().scale(i_omega).integrate())
        })
        .collect();
    collect_checked(entries, cap)
}

/// `c_m(t, ·)` on the grid; degree `2m + 1` in the datum.
pub fn picard_component<T: Scalar>(
    datum: &ModeSequence<T>,
    m: usize,
    times: &[T],
    omega: Omega,
    cap: usize,
) -> Result<Vec<ModeSequence<T>>> {
    let mut engine = PicardEngine::new(datum, omega, cap);
    engine.extend_to(m)?;
    Ok(times.iter().map(|&t| engine.component_at(m, t)).collect())
}

/// Per-block (pair convolution, mass) sums.
type BlockSums<T> = (Vec<ExactComponent<T>>, Vec<ExpPoly<T>>);

impl<T: Scalar> PicardEngine<T> {
    fn block_sums(&self, k: usize, d_lo: usize, d_hi: usize) -> Result<BlockSums<T>> {
        let comps = &self.comps[..=k];
        let ungauged = &self.ungauged[..=k];
        let r_hi = d_hi.min(2 * k);
        let mut w = Vec::with_capacity(r_hi + 1);
        let mut mu = Vec::with_capacity(r_hi + 1);
        for r in 0..=r_hi {
            if r <= k && r < self.pair_conv.len() {
                w.push(self.pair_conv[r].clone());
                mu.push(self.mass[r].clone());
            } else {
                w.push(pair_conv(ungauged, r, k, self.cap)?);
                mu.push(mass_block(comps, r, k, self.cap)?);
            }
        }
        let mut conv = Vec::with_capacity(k + 1);
        let mut mass = Vec::with_capacity(k + 1);
        for m in 0..=k {
            let lo = d_lo.saturating_sub(m);
            let hi = d_hi.saturating_sub(m).min(r_hi);
            let mut cw = ExactComponent::new();
            let mut cm = ExpPoly::zero();
            if d_hi >= m {
                for r in lo..=hi {
                    for (&q, p) in &w[r] {
                        let merged = match cw.get(&q) {
                            Some(prev) => p.add(prev),
                            None => p.clone(),
                        };
                        cw.insert(q, merged);
                    }
                    cm = cm.add(&mu[r]);
                }
            }
            conv.push(cw);
            mass.push(cm);
        }
        Ok((conv, mass))
    }

    /// Degree blocks `d_lo ≤ m₁+m₂+m₃ ≤ d_hi` of the integrated cubic term
    /// of `Σ_{m≤k} c_m`, exact in time.
    fn cubic_blocks(&self, k: usize, d_lo: usize, d_hi: usize, cutoff: Option<u64>) -> Result<ExactComponent<T>> {
        let (conv, mass) = self.block_sums(k, d_lo, d_hi)?;
        let conv: Vec<&ExactComponent<T>> = conv.iter().collect();
        let mass: Vec<&ExpPoly<T>> = mass.iter().collect();
        cubic_integrals(&self.comps[..=k], &self.ungauged[..=k], &conv, &mass, self.omega, cutoff, self.cap)
    }

    /// `Σ_n sup_{s≤t} |c_m(s,n)|` bounded termwise.
    fn l1_majorant(&self, m: usize, t: T) -> T {
        self.comps[m]
            .values()
            .flat_map(|p| p.terms().iter())
            .map(|term| term.coeff.norm() * t.powi(term.power as i32))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Engine restricted to modes `|n| ≤ cutoff` in every component.
    fn truncated(&self, k: usize, cutoff: u64) -> Self {
        let cut = |c: &ExactComponent<T>| -> ExactComponent<T> {
            c.iter()
                .filter(|(n, _)| n.unsigned_abs() <= cutoff)
                .map(|(&n, p)| (n, p.clone()))
                .collect()
        };
        let comps: Vec<ExactComponent<T>> = self.comps[..=k].iter().map(cut).collect();
        let ungauged = comps.iter().map(Self::ungauge).collect();
        Self {
            omega: self.omega,
            cap: self.cap,
            comps,
            ungauged,
            pair_conv: Vec::new(),
            mass: Vec::new(),
        }
    }
}

/// A signed term `c_T · S_T` of the tree expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedTreeTerm {
    /// Node signs are the conjugation parities produced by the substitution.
    pub tree: OrnamentedTree,
    /// `c_T = sign · (iω)^k`, since every node contributes `±iω`.
    pub sign: i8,
}

impl SignedTreeTerm {
    pub fn coefficient<T: Scalar>(&self, omega: Omega) -> Complex<T> {
        let k = self.tree.tree().internal_count();
        let mut c = Complex::new(T::of(self.sign as f64), T::zero());
        for _ in 0..k {
            c *= omega.i_omega::<T>();
        }
        c
    }
}

/// Node factor relative to `iω`: general `+`, simple `−`, both flipped
/// under conjugation.
fn node_factor(kind: NodeKind, parity: Sign) -> i8 {
    let base = match kind {
        NodeKind::General => 1,
        NodeKind::Simple => -1,
    };
    if parity.is_minus() {
        -base
    } else {
        base
    }
}

fn signed_trees_rec(
    k: usize,
    parity: Sign,
    memo: &mut BTreeMap<(usize, bool), Vec<(OrnamentedTree, i8)>>,
) -> Vec<(OrnamentedTree, i8)> {
    if let Some(v) = memo.get(&(k, parity.is_minus())) {
        return v.clone();
    }
    let mut out = Vec::new();
    if k == 0 {
        out.push((OrnamentedTree::leaf(parity), 1));
    } else {
        let child_parity = [parity, parity.flip(), parity];
        for kind in [NodeKind::Simple, NodeKind::General] {
            let f = node_factor(kind, parity);
            for k1 in 0..k {
                for k2 in 0..k - k1 {
                    let k3 = k - 1 - k1 - k2;
                    let a = signed_trees_rec(k1, child_parity[0], memo);
                    let b = signed_trees_rec(k2, child_parity[1], memo);
                    let c = signed_trees_rec(k3, child_parity[2], memo);
                    for (ta, sa) in &a {
                        for (tb, sb) in &b {
                            for (tc, sc) in &c {
                                let t = OrnamentedTree::join(kind, parity, [ta, tb, tc], [0; 3]);
                                out.push((t, f * sa * sb * sc));
                            }
                        }
                    }
                }
            }
        }
    }
    memo.insert((k, parity.is_minus()), out.clone());
    out
}

/// All signed trees with `k` internal nodes from repeated substitution of
/// the equation into itself, root parity `+`.
pub fn generate_signed_trees(k: usize, limits: EnumLimits) -> Result<Vec<SignedTreeTerm>> {
    Error::check_cap("tree internal nodes", k as u128, limits.max_internal as u128)?;
    let count = fuss_catalan(k as u64) << k;
    Error::check_cap("signed tree count", count, limits.max_trees)?;
    let mut memo = BTreeMap::new();
    Ok(signed_trees_rec(k, Sign::Plus, &mut memo)
        .into_iter()
        .map(|(tree, sign)| SignedTreeTerm { tree, sign })
        .collect())
}

/// `Σ_T c_T S_T(t)(x, …, x)` over [`generate_signed_trees`].
pub fn assemble_from_trees<T: Scalar>(
    datum: &ModeSequence<T>,
    k: usize,
    time: T,
    omega: Omega,
    cutoff: u64,
    limits: EnumLimits,
    budget: u128,
) -> Result<ModeSequence<T>> {
    let mut total: BTreeMap<i64, CompensatedSum<T>> = BTreeMap::new();
    for term in generate_signed_trees(k, limits)? {
        let inputs = LeafInputs::replicate(term.tree.tree(), datum);
        // Phase signs come from the tree parities alone; ω lives in c_T.
        let s = eval_tree_operator(&term.tree, &inputs, time, cutoff, Omega::Plus, budget)?;
        let c = term.coefficient::<T>(omega);
        for (n, v) in s.iter() {
            total.entry(n).or_default().add(c * v);
        }
    }
    Ok(ModeSequence::from_entries(total.into_iter().map(|(n, s)| (n, s.value()))))
}

/// Options for [`solve_series`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOptions {
    pub max_degree: usize,
    /// Upper limit for `τ·‖a(0)‖_{ℓ¹}`.
    pub threshold: f64,
    pub term_cap: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            max_degree: 5,
            threshold: 0.2,
            term_cap: DEFAULT_TERM_CAP,
        }
    }
}

/// Truncated series `a(t) = Σ_{m≤K} c_m(t)` on a time grid.
#[derive(Clone, Debug)]
pub struct SeriesSolution<T: Scalar> {
    pub datum: ModeSequence<T>,
    pub max_degree: usize,
    pub omega: Omega,
    pub times: Vec<T>,
    /// `components[m][i] = c_m(times[i])`.
    pub components: Vec<Vec<ModeSequence<T>>>,
    /// Per grid time: `‖c_K‖ r/(1−r)` with `r` the measured decay ratio.
    pub tail_estimate: Vec<T>,
    pub decay_ratio: Vec<T>,
    /// Set when some decay ratio is `≥ 1`.
    pub diverging: bool,
    engine: PicardEngine<T>,
}

impl<T: Scalar> SeriesSolution<T> {
    /// `a(t)` at any `t`, not only grid points.
    pub fn eval(&self, t: T) -> ModeSequence<T> {
        let mut acc: BTreeMap<i64, CompensatedSum<T>> = BTreeMap::new();
        for m in 0..=self.max_degree {
            for (&n, p) in self.engine.component(m) {
                acc.entry(n).or_default().add(p.eval(t));
            }
        }
        ModeSequence::from_entries(acc.into_iter().map(|(n, s)| (n, s.value())))
    }

    /// `a(times[i])`.
    pub fn at(&self, i: usize) -> ModeSequence<T> {
        self.eval(self.times[i])
    }

    pub fn engine(&self) -> &PicardEngine<T> {
        &self.engine
    }

    /// Writes `t,n,re,im,degree_tail_estimate` for every grid time.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "n", "re", "im", "degree_tail_estimate"])?;
        for (i, &t) in self.times.iter().enumerate() {
            for (n, v) in self.at(i).iter() {
                w.write_record([
                    fmt_real(t),
                    n.to_string(),
                    fmt_real(v.re),
                    fmt_real(v.im),
                    fmt_real(self.tail_estimate[i]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Decay ratio of the last component norms and the geometric tail bound.
fn tail_from_norms<T: Scalar>(norms: &[T]) -> (T, T) {
    let k = norms.len() - 1;
    if k == 0 || norms[k] == T::zero() {
        return (T::zero(), T::zero());
    }
    let mut ratio = T::zero();
    for m in k.saturating_sub(1).max(1)..=k {
        if norms[m - 1] > T::zero() {
            ratio = ratio.max(norms[m] / norms[m - 1]);
        } else {
            ratio = T::infinity();
        }
    }
    let tail = if ratio < T::one() {
        norms[k] * ratio / (T::one() - ratio)
    } else {
        T::infinity()
    };
    (ratio, tail)
}

/// Builds the truncated series on `times` (sorted, in `[0, τ]`).
pub fn solve_series<T: Scalar>(
    datum: &ModeSequence<T>,
    times: &[T],
    omega: Omega,
    opts: SeriesOptions,
) -> Result<SeriesSolution<T>> {
    if times.iter().any(|t| !t.is_finite() || *t < T::zero()) {
        return Err(Error::invalid("grid times must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("time grid must be sorted"));
    }
    let tau = times.last().copied().unwrap_or_else(T::zero);
    let size = tau.to_f64().unwrap_or(f64::INFINITY) * datum.norm_l1().to_f64().unwrap_or(f64::INFINITY);
    if size > opts.threshold {
        return Err(Error::invalid(format!(
            "tau * |a(0)|_l1 = {size} exceeds the convergence threshold {}",
            opts.threshold
        )));
    }
    let mut engine = PicardEngine::new(datum, omega, opts.term_cap);
    engine.extend_to(opts.max_degree)?;
    let components: Vec<Vec<ModeSequence<T>>> = (0..=opts.max_degree)
        .map(|m| times.iter().map(|&t| engine.component_at(m, t)).collect())
        .collect();
    let mut tail_estimate = Vec::with_capacity(times.len());
    let mut decay_ratio = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let norms: Vec<T> = components.iter().map(|c| c[i].norm_l1()).collect();
        let (r, tail) = tail_from_norms(&norms);
        decay_ratio.push(r);
        tail_estimate.push(tail);
    }
    let diverging = decay_ratio.iter().any(|&r| r >= T::one());
    Ok(SeriesSolution {
        datum: datum.clone(),
        max_degree: opts.max_degree,
        omega,
        times: times.to_vec(),
        components,
        tail_estimate,
        decay_ratio,
        diverging,
        engine,
    })
}

/// `û(t,n) = e^{−in²t} a_n(t)`.
pub fn to_physical<T: Scalar>(sol: &SeriesSolution<T>, t: T) -> ModeSequence<T> {
    gauge_to_physical(&sol.eval(t), t)
}

pub fn gauge_to_physical<T: Scalar>(a: &ModeSequence<T>, t: T) -> ModeSequence<T> {
    a.map_values(|n, v| v * cis(-T::of_int(n * n) * t))
}

/// Number of degree blocks past `K` evaluated exactly in the residual; the
/// rest is covered by [`Residual::remainder_bound`].
pub const RESIDUAL_EXACT_BLOCKS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual<T> {
    /// `sup_{|n|≤N} |a_n(t) − a_n(0) − (cubic term)_n|` from the exact blocks.
    pub value: T,
    /// ℓ¹ bound on the blocks left out of `value`.
    pub remainder_bound: T,
}

impl<T: Scalar> Residual<T> {
    pub fn upper(&self) -> T {
        self.value + self.remainder_bound
    }
}

/// Defect of the truncated series in the integral equation at time `t`.
///
/// Degree blocks below `K` cancel against `c_1..c_K` identically, so only
/// blocks `d ≥ K` of the cubic term of `Σ_{m≤K} c_m` are formed.
pub fn residual_integral_equation<T: Scalar>(sol: &SeriesSolution<T>, t: T, n_check: u64) -> Result<Residual<T>> {
    Ok(residual_profile(sol, &[t], n_check)?[0])
}

/// [`residual_integral_equation`] at several times, sharing the blocks.
pub fn residual_profile<T: Scalar>(sol: &SeriesSolution<T>, times: &[T], n_check: u64) -> Result<Vec<Residual<T>>> {
    let k = sol.max_degree;
    let d_hi = k + RESIDUAL_EXACT_BLOCKS - 1;
    let blocks = sol.engine.cubic_blocks(k, k, d_hi, Some(n_check))?;
    Ok(times
        .iter()
        .map(|&t| {
            let value = blocks.values().map(|p| p.eval(t).norm()).fold(T::zero(), T::max);
            let nu: Vec<T> = (0..=k).map(|m| sol.engine.l1_majorant(m, t)).collect();
            let mut rest = T::zero();
            for (m1, a) in nu.iter().enumerate() {
                for (m2, b) in nu.iter().enumerate() {
                    for (m3, c) in nu.iter().enumerate() {
                        if m1 + m2 + m3 > d_hi {
                            rest += *a * *b * *c;
                        }
                    }
                }
            }
            Residual {
                value,
                remainder_bound: T::of(3.0) * t * rest,
            }
        })
        .collect())
}

/// Cubic term of `T_N a` for each `N`, with ℓ^p distances between
/// consecutive cutoffs.
#[derive(Clone, Debug)]
pub struct NonlinearityLimit<T: Scalar> {
    pub cutoffs: Vec<u64>,
    pub terms: Vec<ModeSequence<T>>,
    pub differences: Vec<T>,
}

impl<T: Scalar> NonlinearityLimit<T> {
    pub fn decreasing(&self) -> bool {
        self.differences.windows(2).all(|w| w[1] < w[0])
    }
}

/// `∫₀ᵗ [Σ*_{j−k+l=n} b_j b̄_k b_l e^{iσs} − |b_n|²b_n] ds` with `b = T_N a`,
/// kept to the order of the series (degree blocks up to `K`).
pub fn nonlinearity_limit<T: Scalar>(
    sol: &SeriesSolution<T>,
    t: T,
    cutoffs: &[u64],
    p: f64,
) -> Result<NonlinearityLimit<T>> {
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("cutoffs must be strictly increasing"));
    }
    let sp = SpaceParams::lp(p)?;
    let k = sol.max_degree;
    let i_omega_inv = cone::<T>() / sol.omega.i_omega::<T>();
    let terms: Vec<ModeSequence<T>> = cutoffs
        .iter()
        .map(|&n| -> Result<ModeSequence<T>> {
            let blocks = sol.engine.truncated(k, n).cubic_blocks(k, 0, k, None)?;
            Ok(eval_component(&blocks, t).scaled(i_omega_inv))
        })
        .collect::<Result<_>>()?;
    let differences = terms.windows(2).map(|w| w[1].sub(&w[0]).norm_lsp(sp)).collect();
    Ok(NonlinearityLimit {
        cutoffs: cutoffs.to_vec(),
        terms,
        differences,
    })
}

/// `‖û(t) − e^{−in²t}û₀‖_{ℓ^q} = ‖a(t) − a(0)‖_{ℓ^q}` per time.
pub fn smoothing_gap<T: Scalar>(sol: &SeriesSolution<T>, times: &[T], q: f64) -> Result<Vec<T>> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::invalid(format!("smoothing exponent q = {q} must be >= 1")));
    }
    let sp = SpaceParams::lp(q)?;
    Ok(times.iter().map(|&t| sol.eval(t).sub(&sol.datum).norm_lsp(sp)).collect())
}
