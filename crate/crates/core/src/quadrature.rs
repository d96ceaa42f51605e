//! Globally adaptive Gauss–Kronrod (7/15) quadrature for real and complex
//! integrands.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for C64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Relative to |I|.
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Relative to ∫|f|; governs integrals that cancel to near zero.
    pub mass_tol: f64,
    pub max_intervals: usize,
    /// Equal-width panels to start from (oscillatory integrands want several
    /// per period).
    pub initial_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-15,
            mass_tol: 1e-13,
            max_intervals: 50_000,
            initial_panels: 1,
        }
    }
}

impl QuadOptions {
    pub fn with_panels(mut self, panels: usize) -> Self {
        self.initial_panels = panels.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
    mass: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> Segment<T> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut mass = fc.magnitude() * WGK[7];
    for (k, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(center - half * x);
        let f2 = f(center + half * x);
        let s = f1 + f2;
        kron = kron + s * w;
        mass += (f1.magnitude() + f2.magnitude()) * w;
        if k % 2 == 1 {
            gauss = gauss + s * WG[k / 2];
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).magnitude();
    Segment {
        a,
        b,
        value,
        error,
        mass: mass * half.abs(),
    }
}

/// ∫_a^b f(x) dx.
pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult<T>> {
    if a == b {
        return Ok(QuadResult {
            value: T::default(),
            error: 0.0,
            intervals: 0,
            evaluations: 0,
        });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical(format!("non-finite bounds [{a}, {b}]")));
    }
    let panels = opts.initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let mut heap = BinaryHeap::with_capacity(panels * 2);
    for k in 0..panels {
        let lo = a + width * k as f64;
        let hi = if k + 1 == panels { b } else { lo + width };
        heap.push(kronrod(&mut f, lo, hi));
    }
    let mut evaluations = 15 * panels;
    loop {
        let (value, error, mass) = heap.iter().fold((T::default(), 0.0, 0.0), |acc, s| {
            (acc.0 + s.value, acc.1 + s.error, acc.2 + s.mass)
        });
        let tolerance = opts
            .abs_tol
            .max(opts.rel_tol * value.magnitude())
            .max(opts.mass_tol * mass);
        if !value.magnitude().is_finite() {
            return Err(Error::Numerical(
                "integrand produced non-finite values".into(),
            ));
        }
        if error <= tolerance {
            return Ok(QuadResult {
                value,
                error,
                intervals: heap.len(),
                evaluations,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let too_narrow = (worst.b - worst.a).abs() <= 1e-13 * (b - a).abs();
        if heap.len() + 2 > opts.max_intervals || too_narrow {
            return Err(Error::Quadrature {
                a,
                b,
                error,
                tolerance,
                intervals: heap.len() + 1,
            });
        }
        heap.push(kronrod(&mut f, worst.a, mid));
        heap.push(kronrod(&mut f, mid, worst.b));
        evaluations += 30;
    }
}
