//! Matrix exponentials on small dense complex matrices.
//!
//! Two independent routes live here:
//! * [`expm`]: scaling-and-squaring with diagonal Padé approximants
//!   (Higham 2005), used to build closed-form factors.
//! * [`ExpAction`]: sub-stepped Taylor series applied to a block of vectors,
//!   exploiting the band structure of ladder-operator Hamiltonians. The
//!   reference integrator uses this route only.

use ndarray::{Array2, Axis};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

pub fn norm1(a: &Array2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// exp(A) for a square complex matrix.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Config(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::Numerical("non-finite matrix in exponential".into()));
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, coeffs);
        }
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * real(0.5f64.powi(s));
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

fn pade_low(a: &Array2<C64>, b: &[f64]) -> Result<Array2<C64>> {
    let n = a.nrows();
    let eye = identity(n);
    let a2 = a.dot(a);
    let mut u_inner = &eye * real(b[1]);
    let mut v = &eye * real(b[0]);
    let mut power = eye.clone();
    let mut k = 2;
    while k < b.len() {
        power = power.dot(&a2);
        u_inner = u_inner + &power * real(b[k + 1]);
        v = v + &power * real(b[k]);
        k += 2;
    }
    let u = a.dot(&u_inner);
    solve(&(&v - &u), &(&v + &u))
}

fn pade13(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    let eye = identity(n);
    let b = &B13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let w1 = &a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]);
    let w2 =
        w1.dot(&a6) + &a6 * real(b[7]) + &a4 * real(b[5]) + &a2 * real(b[3]) + &eye * real(b[1]);
    let u = a.dot(&w2);
    let z1 = &a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]);
    let v =
        z1.dot(&a6) + &a6 * real(b[6]) + &a4 * real(b[4]) + &a2 * real(b[2]) + &eye * real(b[0]);
    solve(&(&v - &u), &(&v + &u))
}

/// Solves `lhs · X = rhs` by LU with partial pivoting.
pub fn solve(lhs: &Array2<C64>, rhs: &Array2<C64>) -> Result<Array2<C64>> {
    let n = lhs.nrows();
    let mut lu = lhs.clone();
    let mut x = rhs.clone();
    for k in 0..n {
        let (pivot, pmax) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(Error::Numerical("singular matrix in LU solve".into()));
        }
        if pivot != k {
            for j in 0..n {
                lu.swap([k, j], [pivot, j]);
            }
            for j in 0..x.ncols() {
                x.swap([k, j], [pivot, j]);
            }
        }
        let diag = lu[[k, k]];
        for i in (k + 1)..n {
            let factor = lu[[i, k]] / diag;
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            lu[[i, k]] = factor;
            for j in (k + 1)..n {
                let v = lu[[k, j]];
                lu[[i, j]] -= factor * v;
            }
            for j in 0..x.ncols() {
                let v = x[[k, j]];
                x[[i, j]] -= factor * v;
            }
        }
    }
    for k in (0..n).rev() {
        let diag = lu[[k, k]];
        for j in 0..x.ncols() {
            let mut acc = x[[k, j]];
            for i in (k + 1)..n {
                acc -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = acc / diag;
        }
    }
    Ok(x)
}

/// Action of exp(−iτH) for a Hermitian H with limited bandwidth.
///
/// H is stored row-compressed with its diagonal shifted by the midpoint `c`
/// of its real range, so the Taylor series runs on H − c with a smaller
/// norm and the phase e^{−iτc} is applied at the end.
#[derive(Debug, Clone)]
pub struct ExpAction {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    bandwidth: usize,
    shift: f64,
    norm1: f64,
}

impl ExpAction {
    pub fn new(h: Array2<C64>) -> Self {
        let n = h.nrows();
        debug_assert_eq!(n, h.ncols());
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            row_start.push(cols.len());
            for j in 0..n {
                let z = h[[i, j]];
                if z != C64::new(0.0, 0.0) {
                    cols.push(j);
                    vals.push(z);
                }
            }
        }
        row_start.push(cols.len());
        Self::from_csr(n, row_start, cols, vals)
    }

    /// From compressed rows (`row_start` has `n + 1` entries, column indices
    /// ascending within a row).
    pub fn from_csr(n: usize, row_start: Vec<usize>, cols: Vec<usize>, mut vals: Vec<C64>) -> Self {
        debug_assert_eq!(row_start.len(), n + 1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut diag_pos = vec![None; n];
        for i in 0..n {
            let mut d = 0.0;
            for k in row_start[i]..row_start[i + 1] {
                if cols[k] == i {
                    d = vals[k].re;
                    diag_pos[i] = Some(k);
                }
            }
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let shift = if n == 0 { 0.0 } else { 0.5 * (lo + hi) };
        let mut cols = cols;
        let mut row_start = row_start;
        if shift != 0.0 {
            // every row needs a diagonal slot to carry −shift
            if diag_pos.iter().any(|p| p.is_none()) {
                let mut rs = Vec::with_capacity(n + 1);
                let mut cs = Vec::with_capacity(cols.len() + n);
                let mut vs = Vec::with_capacity(cols.len() + n);
                for i in 0..n {
                    rs.push(cs.len());
                    let mut placed = false;
                    for k in row_start[i]..row_start[i + 1] {
                        if !placed && cols[k] > i {
                            cs.push(i);
                            vs.push(C64::new(0.0, 0.0));
                            placed = true;
                        }
                        if cols[k] == i {
                            placed = true;
                        }
                        cs.push(cols[k]);
                        vs.push(vals[k]);
                    }
                    if !placed {
                        cs.push(i);
                        vs.push(C64::new(0.0, 0.0));
                    }
                }
                rs.push(cs.len());
                row_start = rs;
                cols = cs;
                vals = vs;
            }
            for i in 0..n {
                for k in row_start[i]..row_start[i + 1] {
                    if cols[k] == i {
                        vals[k] -= shift;
                    }
                }
            }
        }
        let mut col_sums = vec![0.0; n];
        let mut bandwidth = 0;
        for i in 0..n {
            for k in row_start[i]..row_start[i + 1] {
                col_sums[cols[k]] += vals[k].norm();
                bandwidth = bandwidth.max(i.abs_diff(cols[k]));
            }
        }
        let norm1 = col_sums.into_iter().fold(0.0, f64::max);
        Self {
            n,
            row_start,
            cols,
            vals,
            bandwidth,
            shift,
            norm1,
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// out = (H − c)·x for row-major `x`, `out` of shape n × width.
    fn mul(&self, x: &[C64], out: &mut [C64], width: usize) {
        out.fill(C64::new(0.0, 0.0));
        for i in 0..self.n {
            let row = &mut out[i * width..(i + 1) * width];
            for k in self.row_start[i]..self.row_start[i + 1] {
                let hij = self.vals[k];
                let j = self.cols[k];
                let src = &x[j * width..(j + 1) * width];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += hij * *s;
                }
            }
        }
    }

    /// Returns exp(−iτH)·x.
    pub fn apply(&self, tau: f64, x: &Array2<C64>) -> Array2<C64> {
        let width = x.ncols();
        let scaled_norm = (tau * self.norm1).abs();
        let substeps = (scaled_norm / 0.5).ceil().max(1.0) as usize;
        let h_step = tau / substeps as f64;
        let terms = taylor_terms((h_step * self.norm1).abs());
        let mut acc: Vec<C64> = x.iter().copied().collect();
        let mut term = acc.clone();
        let mut scratch = vec![C64::new(0.0, 0.0); acc.len()];
        for _ in 0..substeps {
            term.copy_from_slice(&acc);
            for k in 1..=terms {
                self.mul(&term, &mut scratch, width);
                let coeff = C64::new(0.0, -h_step / k as f64);
                for ((t, s), a) in term.iter_mut().zip(&scratch).zip(acc.iter_mut()) {
                    *t = coeff * *s;
                    *a += *t;
                }
            }
        }
        let phase = C64::from_polar(1.0, -tau * self.shift);
        Array2::from_shape_vec(x.raw_dim(), acc.into_iter().map(|z| z * phase).collect())
            .expect("shape preserved")
    }
}

/// Smallest K whose Taylor remainder bound x^{K+1}/(K+1)!·1/(1 − x/(K+2))
/// falls below half an ulp.
fn taylor_terms(x: f64) -> usize {
    if x == 0.0 {
        return 0;
    }
    let mut term = 1.0;
    for k in 1..60usize {
        term *= x / k as f64;
        let rest = term * x / (k + 1) as f64 / (1.0 - x / (k + 2) as f64);
        if rest <= 0.5 * f64::EPSILON {
            return k;
        }
    }
    60
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        // small LCG is enough for test matrices
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut h = Array2::zeros((n, n));
        for i in 0..n {
            h[[i, i]] = C64::new(next(), 0.0);
            for j in (i + 1)..n {
                let z = C64::new(next(), next());
                h[[i, j]] = z;
                h[[j, i]] = z.conj();
            }
        }
        h
    }

    fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn diagonal_matches_scalar_exponentials() {
        for scale in [1e-3, 0.2, 1.0, 4.0, 40.0] {
            let d = Array2::from_diag(&ndarray::arr1(&[
                C64::new(0.0, scale),
                C64::new(-scale, 0.5),
                C64::new(0.3 * scale, -scale),
            ]));
            let e = expm(&d).unwrap();
            for i in 0..3 {
                let want = d[[i, i]].exp();
                assert!((e[[i, i]] - want).norm() <= 1e-12 * want.norm().max(1.0));
            }
        }
    }

    #[test]
    fn pade_and_taylor_routes_agree() {
        for (n, tau) in [(6, 0.01), (12, 0.7), (20, 3.0)] {
            let h = random_hermitian(n, n as u64 + 7);
            let g = &h * C64::new(0.0, -tau);
            let pade = expm(&g).unwrap();
            let taylor = ExpAction::new(h).apply(tau, &identity(n));
            assert!(max_diff(&pade, &taylor) < 1e-12, "n={n} tau={tau}");
        }
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = random_hermitian(7, 3) + identity(7) * real(3.0);
        let x = random_hermitian(7, 5);
        let b = a.dot(&x);
        let got = solve(&a, &b).unwrap();
        assert!(max_diff(&got, &x) < 1e-12);
    }

    #[test]
    fn bandwidth_detection() {
        let mut h = Array2::zeros((5, 5));
        h[[0, 0]] = real(1.0);
        h[[1, 2]] = real(1.0);
        h[[2, 1]] = real(1.0);
        assert_eq!(ExpAction::new(h).bandwidth(), 1);
    }
}
