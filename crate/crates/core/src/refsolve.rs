//! Galerkin truncation of the equation on `|n| ≤ N`, stepped with classic
//! RK4. Serves as an oracle independent of the series engine: the excluded
//! sum and the diagonal correction are implemented literally.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modes::ModeSequence;
use crate::scalar::{cis, fmt_real, Omega, Scalar};
use crate::series::{gauge_to_physical, SeriesSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GalerkinSystem {
    pub cutoff: u64,
    pub omega: Omega,
    /// Integrate `a_n = e^{in²t}û_n` instead of `û_n`.
    pub gauged: bool,
    /// Drop the mean-mass term (modified equation) when set.
    pub modified: bool,
}

impl GalerkinSystem {
    pub fn new(cutoff: u64, omega: Omega, gauged: bool, modified: bool) -> Self {
        Self {
            cutoff,
            omega,
            gauged,
            modified,
        }
    }

    /// Largest step accepted for the ungauged form.
    pub fn max_step(&self) -> Option<f64> {
        let n = self.cutoff as f64;
        (!self.gauged).then(|| 0.5 / (n * n + 1.0))
    }

    fn pack<T: Scalar>(&self, x: &ModeSequence<T>) -> Vec<Complex<T>> {
        let n = self.cutoff as i64;
        (-n..=n).map(|i| x.get(i)).collect()
    }

    fn unpack<T: Scalar>(&self, s: &[Complex<T>]) -> ModeSequence<T> {
        let n = self.cutoff as i64;
        ModeSequence::from_entries((-n..).zip(s.iter().copied()))
    }

    /// Right-hand side; `phase` holds `e^{iσt}` for the current time.
    fn field<T: Scalar>(&self, a: &[Complex<T>], phase: &PhaseTable<T>) -> Vec<Complex<T>> {
        let n_max = self.cutoff as i64;
        let m = a.len() as i64;
        let i_omega = self.omega.i_omega::<T>();
        (0..m)
            .into_par_iter()
            .map(|ni| {
                let n = ni - n_max;
                let mut acc = Complex::new(T::zero(), T::zero());
                for ji in 0..m {
                    let j = ji - n_max;
                    if self.modified && j == n {
                        continue;
                    }
                    for li in 0..m {
                        let l = li - n_max;
                        if self.modified && l == n {
                            continue;
                        }
                        let ki = ji + li - ni;
                        if ki < 0 || ki >= m {
                            continue;
                        }
                        let mut term = a[ji as usize] * a[ki as usize].conj() * a[li as usize];
                        if self.gauged {
                            term *= phase.get(2 * (n - j) * (n - l));
                        }
                        acc += term;
                    }
                }
                let an = a[ni as usize];
                if self.modified {
                    acc -= an * an.norm_sqr();
                }
                let mut out = i_omega * acc;
                if !self.gauged {
                    out -= Complex::new(T::zero(), T::of_int(n * n)) * an;
                }
                out
            })
            .collect()
    }
}

/// `e^{iσt}` for every `σ = 2d₁d₂` with `|dᵢ| ≤ 2N`.
struct PhaseTable<T: Scalar> {
    offset: i64,
    values: Vec<Complex<T>>,
}

impl<T: Scalar> PhaseTable<T> {
    fn new(cutoff: u64, t: T, gauged: bool) -> Self {
        if !gauged {
            return Self {
                offset: 0,
                values: Vec::new(),
            };
        }
        let d = 2 * cutoff as i64;
        let offset = 2 * d * d;
        let values = (-offset..=offset).map(|s| cis(T::of_int(s) * t)).collect();
        Self { offset, values }
    }

    #[inline]
    fn get(&self, sigma: i64) -> Complex<T> {
        self.values[(sigma + self.offset) as usize]
    }
}

fn axpy<T: Scalar>(a: &[Complex<T>], h: T, k: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter().zip(k).map(|(&x, &y)| x + y * h).collect()
}

fn rk4_step<T: Scalar>(sys: &GalerkinSystem, t: T, dt: T, a: &[Complex<T>]) -> Vec<Complex<T>> {
    let half = dt / T::of(2.0);
    let p0 = PhaseTable::new(sys.cutoff, t, sys.gauged);
    let p1 = PhaseTable::new(sys.cutoff, t + half, sys.gauged);
    let p2 = PhaseTable::new(sys.cutoff, t + dt, sys.gauged);
    let k1 = sys.field(a, &p0);
    let k2 = sys.field(&axpy(a, half, &k1), &p1);
    let k3 = sys.field(&axpy(a, half, &k2), &p1);
    let k4 = sys.field(&axpy(a, dt, &k3), &p2);
    let sixth = dt / T::of(6.0);
    let two = T::of(2.0);
    (0..a.len())
        .map(|i| a[i] + (k1[i] + k2[i] * two + k3[i] * two + k4[i]) * sixth)
        .collect()
}

/// Sampled trajectory `(t_i, x(t_i))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<ModeSequence<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Writes `t,n,re,im` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "n", "re", "im"])?;
        for (t, x) in self.times.iter().zip(&self.states) {
            for (n, v) in x.iter() {
                w.write_record([fmt_real(*t), n.to_string(), fmt_real(v.re), fmt_real(v.im)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> &ModeSequence<T> {
        self.states.last().expect("trajectory has the initial state")
    }
}

fn check_step(sys: &GalerkinSystem, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("step {dt} must be positive")));
    }
    if let Some(max) = sys.max_step() {
        if dt > max {
            return Err(Error::invalid(format!(
                "step {dt} exceeds {max} for the ungauged system with cutoff {}",
                sys.cutoff
            )));
        }
    }
    Ok(())
}

/// `⌈span/dt⌉`, ignoring rounding noise in the quotient.
fn step_count<T: Scalar>(span: T, dt: T) -> u64 {
    let q = (span / dt).to_f64().unwrap_or(0.0);
    if q <= 0.0 {
        0
    } else {
        (q - 1e-9).ceil().max(1.0) as u64
    }
}

/// Integrates from `t = 0` and records the state at each of `times`
/// (sorted, nonnegative); each interval uses equal steps no larger than `dt`.
pub fn integrate_on<T: Scalar>(sys: &GalerkinSystem, datum: &ModeSequence<T>, times: &[T], dt: T) -> Result<Trajectory<T>> {
    let dt_f = dt.to_f64().unwrap_or(f64::NAN);
    check_step(sys, dt_f)?;
    if times.iter().any(|&t| t < T::zero() || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("record times must be sorted, finite and nonnegative"));
    }
    let mut state = sys.pack(&datum.truncate(sys.cutoff));
    let mut t = T::zero();
    let mut states = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        let steps = step_count(span, dt);
        if steps > 0 {
            let h = span / T::of(steps as f64);
            for i in 0..steps {
                state = rk4_step(sys, t + h * T::of(i as f64), h, &state);
            }
        }
        t = target;
        states.push(sys.unpack(&state));
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// Uniform grid `0, dt, …, t_end` (the last step is shortened to land on
/// `t_end`).
pub fn integrate<T: Scalar>(sys: &GalerkinSystem, datum: &ModeSequence<T>, t_end: T, dt: T) -> Result<Trajectory<T>> {
    if t_end.is_nan() || t_end < T::zero() {
        return Err(Error::invalid("t_end must be nonnegative"));
    }
    let n = step_count(t_end, dt);
    let times: Vec<T> = (0..=n).map(|i| (dt * T::of(i as f64)).min(t_end)).collect();
    integrate_on(sys, datum, &times, dt)
}

/// `max_t |Σ|x_n(t)|² − Σ|x_n(0)|²|`.
pub fn l2_invariant<T: Scalar>(traj: &Trajectory<T>) -> T {
    let Some(first) = traj.states.first() else {
        return T::zero();
    };
    let m0 = first.mass();
    traj.states
        .iter()
        .map(|x| (x.mass() - m0).abs())
        .fold(T::zero(), T::max)
}

/// Max over the grid of `|û_unmod(t,n) − e^{2iωμt} û_mod(t,n)|`,
/// `μ = Σ|û₀(n)|²`.
pub fn gauge_relation<T: Scalar>(
    datum: &ModeSequence<T>,
    cutoff: u64,
    t_end: T,
    dt: T,
    omega: Omega,
    gauged: bool,
) -> Result<T> {
    let x = datum.truncate(cutoff);
    let unmod = integrate(&GalerkinSystem::new(cutoff, omega, gauged, false), &x, t_end, dt)?;
    let modi = integrate(&GalerkinSystem::new(cutoff, omega, gauged, true), &x, t_end, dt)?;
    let mu = x.mass();
    let w = omega.value::<T>();
    let mut worst = T::zero();
    for ((t, u), v) in unmod.times.iter().zip(&unmod.states).zip(&modi.states) {
        let corrected = v.scaled(cis(T::of(2.0) * w * mu * *t));
        worst = worst.max(u.sup_distance(&corrected));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison<T: Scalar> {
    pub times: Vec<T>,
    /// `sup_n |series − oracle|` per time (in the oracle's variables).
    pub sup_difference: Vec<T>,
    /// The cutoff is below `(2K+1)·radius`, so generated modes were clipped.
    pub cutoff_warning: bool,
}

impl<T: Scalar> Comparison<T> {
    pub fn max(&self) -> T {
        self.sup_difference.iter().copied().fold(T::zero(), T::max)
    }
}

/// Series solution against the Galerkin oracle on the series grid.
pub fn compare_solutions<T: Scalar>(sol: &SeriesSolution<T>, sys: &GalerkinSystem, dt: T) -> Result<Comparison<T>> {
    if !sys.modified {
        return Err(Error::invalid("the series solves the modified equation"));
    }
    if sys.omega != sol.omega {
        return Err(Error::invalid("oracle and series use different omega"));
    }
    let needed = (2 * sol.max_degree as u64 + 1) * sol.datum.radius().unwrap_or(0).unsigned_abs();
    let traj = integrate_on(sys, &sol.datum, &sol.times, dt)?;
    let sup_difference = sol
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, oracle)| {
            let a = sol.eval(t);
            let series = if sys.gauged { a } else { gauge_to_physical(&a, t) };
            series.sup_distance(oracle)
        })
        .collect();
    Ok(Comparison {
        times: sol.times.clone(),
        sup_difference,
        cutoff_warning: sys.cutoff < needed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::random_datum;
    use crate::series::{solve_series, SeriesOptions};

    type C = Complex<f64>;

    fn single_mode_error(sys: &GalerkinSystem, a: C, t: f64, dt: f64) -> f64 {
        let traj = integrate(sys, &ModeSequence::single(0, a), t, dt).unwrap();
        let w = sys.omega.as_int() as f64;
        let exact = a * Complex::from_polar(1.0, -w * a.norm_sqr() * t);
        (traj.last().get(0) - exact).norm()
    }

    #[test]
    fn single_mode_closed_form() {
        let a = Complex::new(0.5, 0.2);
        for omega in [Omega::Plus, Omega::Minus] {
            for gauged in [true, false] {
                let sys = GalerkinSystem::new(3, omega, gauged, true);
                assert!(single_mode_error(&sys, a, 1.0, 1e-3) < 1e-10);
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let sys = GalerkinSystem::new(0, Omega::Plus, true, true);
        let a = Complex::new(1.2, 0.0);
        let errs: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&dt| single_mode_error(&sys, a, 1.0, dt)).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio} from {errs:?}");
        }
    }

    #[test]
    fn zero_and_free_evolution() {
        let sys = GalerkinSystem::new(2, Omega::Plus, true, true);
        let z = integrate(&sys, &ModeSequence::<f64>::zero(), 0.5, 0.1).unwrap();
        assert!(z.states.iter().all(|x| x.is_empty()));
        assert_eq!(l2_invariant(&z), 0.0);
        let tiny = random_datum::<f64>(2, 0.0, 1e-9, 1);
        let traj = integrate(&sys, &tiny, 1.0, 0.01).unwrap();
        assert!(traj.last().sup_distance(&tiny) < 1e-25);
        assert_eq!(traj.times.len(), 101);
    }

    #[test]
    fn step_guard() {
        let sys = GalerkinSystem::new(10, Omega::Plus, false, true);
        let x = ModeSequence::single(1, Complex::new(0.1, 0.0));
        assert!(matches!(integrate(&sys, &x, 0.1, 0.01), Err(Error::Validation(_))));
        assert!(integrate(&sys, &x, 0.01, 0.004).is_ok());
        let g = GalerkinSystem { gauged: true, ..sys };
        assert!(integrate(&g, &x, 0.1, 0.01).is_ok());
    }

    #[test]
    fn l2_conservation() {
        let x = random_datum::<f64>(4, 0.0, 1.0, 7);
        let x = x.scaled(Complex::new(0.5 / x.mass().sqrt(), 0.0));
        for modified in [true, false] {
            let sys = GalerkinSystem::new(4, Omega::Minus, true, modified);
            let traj = integrate(&sys, &x, 1.0, 1e-3).unwrap();
            assert!(l2_invariant(&traj) < 1e-8);
        }
    }

    #[test]
    fn gauged_matches_ungauged() {
        let x = random_datum::<f64>(3, 0.5, 0.3, 11);
        let times = [0.25, 0.5];
        for modified in [true, false] {
            let g = integrate_on(&GalerkinSystem::new(3, Omega::Plus, true, modified), &x, &times, 1e-3).unwrap();
            let u = integrate_on(&GalerkinSystem::new(3, Omega::Plus, false, modified), &x, &times, 1e-3).unwrap();
            for ((t, a), uhat) in times.iter().zip(&g.states).zip(&u.states) {
                let regauged = uhat.map_values(|n, v| v * cis((n * n) as f64 * t));
                assert!(a.sup_distance(&regauged) < 1e-8);
            }
        }
    }

    #[test]
    fn mass_gauge_single_mode() {
        let a = Complex::new(0.6, 0.0);
        let x = ModeSequence::single(0, a);
        for omega in [Omega::Plus, Omega::Minus] {
            let w = omega.as_int() as f64;
            let unmod = integrate(&GalerkinSystem::new(0, omega, true, false), &x, 1.0, 1e-3).unwrap();
            let exact = a * Complex::from_polar(1.0, w * a.norm_sqr());
            assert!((unmod.last().get(0) - exact).norm() < 1e-10);
            assert!(gauge_relation(&x, 0, 1.0, 1e-3, omega, true).unwrap() < 1e-10);
        }
        assert_eq!(gauge_relation(&ModeSequence::<f64>::zero(), 2, 1.0, 0.1, Omega::Plus, true).unwrap(), 0.0);
    }

    #[test]
    fn excluded_sum_equals_full_minus_mass() {
        // literal Σ* − |a_n|²a_n against full convolution − 2μ a_n
        let x = random_datum::<f64>(3, 0.0, 0.3, 5);
        let sys = GalerkinSystem::new(3, Omega::Plus, false, true);
        let full = GalerkinSystem { modified: false, ..sys };
        let s = sys.pack(&x);
        let t = 0.0;
        let f_mod = sys.field(&s, &PhaseTable::new(3, t, false));
        let f_full = full.field(&s, &PhaseTable::new(3, t, false));
        let mu = x.mass();
        for i in 0..s.len() {
            let expect = f_full[i] - Complex::new(0.0, 2.0 * mu) * s[i];
            assert!((f_mod[i] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn series_against_oracle_small() {
        let x = random_datum::<f64>(1, 0.0, 0.05, 3);
        let sol = solve_series(&x, &[0.0, 0.25, 0.5], Omega::Minus, SeriesOptions { max_degree: 4, ..Default::default() }).unwrap();
        let sys = GalerkinSystem::new(9, Omega::Minus, true, true);
        let cmp = compare_solutions(&sol, &sys, 1e-3).unwrap();
        assert!(!cmp.cutoff_warning);
        assert!(cmp.max() < 1e-8, "{}", cmp.max());
        let narrow = compare_solutions(&sol, &GalerkinSystem::new(2, Omega::Minus, true, true), 1e-2).unwrap();
        assert!(narrow.cutoff_warning);
    }

    #[test]
    fn trajectory_csv() {
        let sys = GalerkinSystem::new(1, Omega::Plus, true, true);
        let traj = integrate(&sys, &ModeSequence::single(1, Complex::new(0.1, 0.0)), 0.2, 0.1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,n,re,im\n0,1,0.1,0\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
