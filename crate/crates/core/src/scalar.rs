//! Scalar abstraction shared by every floating-point module.

use std::fmt::{Debug, Display, LowerExp};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + LowerExp
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, saturating through the target precision.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts an integer (mode index, phase, power).
    fn of_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer representable")
    }

    /// Moduli strictly below this are dropped when sequences normalize.
    fn drop_threshold() -> Self;
}

impl Scalar for f32 {
    fn drop_threshold() -> Self {
        // 1e-300 underflows in f32; only exact zeros are dropped.
        0.0
    }
}

impl Scalar for f64 {
    fn drop_threshold() -> Self {
        1e-300
    }
}

/// Sign of the cubic term, `ω ∈ {+1, −1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Omega {
    Plus,
    Minus,
}

impl Omega {
    pub fn from_int(v: i64) -> Option<Self> {
        match v {
            1 => Some(Omega::Plus),
            -1 => Some(Omega::Minus),
            _ => None,
        }
    }

    pub fn as_int(self) -> i64 {
        match self {
            Omega::Plus => 1,
            Omega::Minus => -1,
        }
    }

    pub fn value<T: Scalar>(self) -> T {
        T::of_int(self.as_int())
    }

    /// `i·ω` as a complex scalar.
    pub fn i_omega<T: Scalar>(self) -> Complex<T> {
        Complex::new(T::zero(), self.value())
    }
}

/// `e^{iθ}` for real `θ`.
/// Shortest round-trip text; scientific notation outside `[1e-4, 1e15)`.
pub fn fmt_real<T: Scalar>(x: T) -> String {
    let a = x.abs();
    if a == T::zero() || (a >= T::of(1e-4) && a < T::of(1e15)) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub(crate) fn cis<T: Scalar>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Neumaier-compensated accumulator for complex values.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T: Scalar> {
    re: T,
    re_c: T,
    im: T,
    im_c: T,
}

fn neumaier<T: Scalar>(sum: &mut T, comp: &mut T, x: T) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex<T>) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    /// Folds another partial sum in, keeping both compensation terms.
    pub fn merge(&mut self, other: &Self) {
        neumaier(&mut self.re, &mut self.re_c, other.re);
        neumaier(&mut self.im, &mut self.im_c, other.im);
        self.re_c += other.re_c;
        self.im_c += other.im_c;
    }

    pub fn value(&self) -> Complex<T> {
        Complex::new(self.re + self.re_c, self.im + self.im_c)
    }
}
