//! Dense complex linear-algebra kernels shared by the higher modules.
//!
//! Everything runs in complex double precision on `nalgebra::DMatrix`.
//! The routines here are the standard ones (LU solves, Schur-based
//! eigenvectors, Padé matrix exponential, Bartels–Stewart Sylvester solver,
//! Van Loan block integrals); the model-specific logic lives elsewhere.

use nalgebra::{DMatrix, DVector, Dim, Matrix, RawStorage, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn complexify(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn cidentity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest absolute imaginary part of any entry.
pub fn max_imag<R: Dim, C: Dim, S: RawStorage<C64, R, C>>(m: &Matrix<C64, R, C, S>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
}

pub fn max_abs<R: Dim, C: Dim, S: RawStorage<C64, R, C>>(m: &Matrix<C64, R, C, S>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Strips the imaginary part after checking it is below
/// `tol * max(1, max |entry|)`.
pub fn certified_real(m: &CMat, tol: f64, what: &'static str) -> Result<RMat> {
    let leak = max_imag(m);
    if leak > tol * max_abs(m).max(1.0) {
        return Err(Error::ImaginaryLeak {
            what,
            magnitude: leak,
        });
    }
    Ok(m.map(|z| z.re))
}

/// `‖a − b‖_F / max(1, ‖b‖_F)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// 2-norm condition number; `inf` for rank-deficient input.
pub fn cond2(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn mat_pow(a: &CMat, k: usize) -> CMat {
    let mut out = cidentity(a.nrows());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

/// Complex Schur form `a = q t qᴴ` with `t` upper triangular.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::NonSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    let s = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure)?;
    let (q, mut t) = s.unpack();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((q, t))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    let (_, t) = schur(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues and unit-norm right eigenvectors (columns), via Schur form
/// and triangular back-substitution.
pub fn eig(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    let (q, t) = schur(a)?;
    let n = t.nrows();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * scale;
    let mut x = CMat::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        x[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut den = t[(i, i)] - lambda;
            if den.norm() < small {
                den = C64::new(small, 0.0);
            }
            x[(i, k)] = -acc / den;
        }
    }
    let mut v = q * x;
    for k in 0..n {
        let nrm = v.column(k).norm();
        if nrm > 0.0 {
            v.column_mut(k).unscale_mut(nrm);
        }
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), v))
}

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

fn pade_low(a: &CMat, b: &[f64]) -> CMat {
    let n = a.nrows();
    let id = cidentity(n);
    let a2 = a * a;
    let m = b.len() - 1;
    // u = a * Σ b_{2k+1} a^{2k}, v = Σ b_{2k} a^{2k}
    let mut pow = id.clone();
    let mut u_inner = CMat::zeros(n, n);
    let mut v = CMat::zeros(n, n);
    let mut k = 0;
    while 2 * k <= m {
        v += &pow * C64::new(b[2 * k], 0.0);
        if 2 * k + 1 <= m {
            u_inner += &pow * C64::new(b[2 * k + 1], 0.0);
        }
        pow = &pow * &a2;
        k += 1;
    }
    let u = a * u_inner;
    finish_pade(&u, &v)
}

fn pade13(a: &CMat) -> CMat {
    let n = a.nrows();
    let id = cidentity(n);
    let b = |i: usize| C64::new(PADE13[i], 0.0);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = a * (&a6 * u_hi + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let v_hi = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * v_hi + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    finish_pade(&u, &v)
}

fn finish_pade(u: &CMat, v: &CMat) -> CMat {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled input")
}

/// Matrix exponential by scaling and squaring with a Padé approximant of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    if n == 1 {
        return CMat::from_element(1, 1, a[(0, 0)].exp());
    }
    let nrm = one_norm(a);
    if nrm <= THETA[0] {
        return pade_low(a, &PADE3);
    }
    if nrm <= THETA[1] {
        return pade_low(a, &PADE5);
    }
    if nrm <= THETA[2] {
        return pade_low(a, &PADE7);
    }
    if nrm <= THETA[3] {
        return pade_low(a, &PADE9);
    }
    let s = if nrm > THETA[4] {
        (nrm / THETA[4]).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * C64::new(2f64.powi(-s), 0.0);
    let mut e = pade13(&scaled);
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

pub fn expm_real(a: &RMat) -> RMat {
    expm(&complexify(a)).map(|z| z.re)
}

/// Smallest `|t_ii + s_kk|` over the Schur diagonals, i.e. the separation
/// between `σ(a)` and `σ(−b)`.
pub fn spectral_gap(a: &CMat, b: &CMat) -> Result<f64> {
    let ea = eigenvalues(a)?;
    let eb = eigenvalues(b)?;
    let mut gap = f64::INFINITY;
    for x in &ea {
        for y in &eb {
            gap = gap.min((x + y).norm());
        }
    }
    Ok(gap)
}

/// Solves `a x + x b = c` by the Bartels–Stewart method on complex Schur
/// forms of `a` and `b`.
pub fn sylvester(a: &CMat, b: &CMat, c: &CMat) -> Result<CMat> {
    let (n, m) = (a.nrows(), b.nrows());
    if c.nrows() != n || c.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "sylvester rhs is {}x{}, expected {}x{}",
            c.nrows(),
            c.ncols(),
            n,
            m
        )));
    }
    let (u, t) = schur(a)?;
    let (v, s) = schur(b)?;
    let f = u.adjoint() * c * &v;
    let scale = (t.norm() + s.norm()).max(f64::MIN_POSITIVE);
    let mut gap = f64::INFINITY;
    let mut y = CMat::zeros(n, m);
    for k in 0..m {
        let mut rhs: CVec = f.column(k).into_owned();
        for j in 0..k {
            let skj = s[(j, k)];
            if skj != ZERO {
                rhs -= y.column(j) * skj;
            }
        }
        let shift = s[(k, k)];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for l in (i + 1)..n {
                acc -= t[(i, l)] * y[(l, k)];
            }
            let den = t[(i, i)] + shift;
            gap = gap.min(den.norm());
            if den.norm() <= 1e-14 * scale {
                return Err(Error::SylvesterSingular { gap: den.norm() });
            }
            y[(i, k)] = acc / den;
        }
    }
    Ok(u * y * v.adjoint())
}

/// Solves `a x + x aᴴ + q = 0`.
pub fn lyapunov(a: &CMat, q: &CMat) -> Result<CMat> {
    sylvester(a, &a.adjoint(), &(-q))
}

/// `∫₀ʰ e^{ru} m e^{su} du` through the block exponential
/// `exp(h [[-r, m], [0, s]])`.
pub fn van_loan_integral(r: &CMat, m: &CMat, s: &CMat, h: f64) -> CMat {
    let (n, k) = (r.nrows(), s.nrows());
    let mut blk = CMat::zeros(n + k, n + k);
    blk.view_mut((0, 0), (n, n)).copy_from(&(-r));
    blk.view_mut((0, n), (n, k)).copy_from(m);
    blk.view_mut((n, n), (k, k)).copy_from(s);
    let e = expm(&(blk * C64::new(h, 0.0)));
    let f12 = e.view((0, n), (n, k)).into_owned();
    expm(&(r * C64::new(h, 0.0))) * f12
}

/// `∫₀ʰ e^{ru} m e^{su} du`. Uses the Sylvester identity
/// `r x + x s = e^{rh} m e^{sh} − m` when `σ(r)` and `σ(−s)` are well
/// separated, the Van Loan block exponential otherwise.
pub fn finite_gramian(r: &CMat, m: &CMat, s: &CMat, h: f64) -> Result<CMat> {
    let scale = 1.0 + r.norm() + s.norm();
    if spectral_gap(r, s)? > 1e-6 * scale {
        let er = expm(&(r * C64::new(h, 0.0)));
        let es = expm(&(s * C64::new(h, 0.0)));
        let rhs = &er * m * &es - m;
        match sylvester(r, s, &rhs) {
            Ok(x) => return Ok(x),
            Err(Error::SylvesterSingular { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(van_loan_integral(r, m, s, h))
}

/// Square-root factor `l` with `l lᵀ = a` for a symmetric PSD matrix.
/// Eigenvalues down to `−clip · max(1, λ_max)` are clipped to zero; anything
/// more negative is rejected.
pub fn psd_factor(a: &RMat, clip: f64) -> Result<RMat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(RMat::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < -clip * lmax.max(1.0) {
        return Err(Error::CholeskyFail { min_eig: lmin });
    }
    if lmin < 0.0 {
        log::warn!("clipping eigenvalue {lmin:.3e} of covariance to zero");
    }
    let mut l = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let root = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(root);
    }
    Ok(l)
}

pub fn min_symmetric_eigenvalue(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cm(rows: usize, cols: usize, vals: &[f64]) -> CMat {
        complexify(&RMat::from_row_slice(rows, cols, vals))
    }

    #[test]
    fn schur_is_triangular_and_reconstructs() {
        let a = CMat::from_row_slice(
            3,
            3,
            &[c(1.0, 2.0), c(0.5, 0.0), c(-1.0, 1.0), c(0.0, 1.0), c(-2.0, 0.0), c(3.0, 0.0), c(1.0, -1.0), c(0.2, 0.3), c(0.0, 0.0)],
        );
        let (q, t) = schur(&a).unwrap();
        assert!(rel_diff(&(&q * &t * q.adjoint()), &a) < 1e-13);
        assert!((q.adjoint() * &q - cidentity(3)).norm() < 1e-13);
    }

    #[test]
    fn eigenvectors_of_rotation() {
        let a = cm(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let (vals, vecs) = eig(&a).unwrap();
        for (k, lam) in vals.iter().enumerate() {
            assert_abs_diff_eq!(lam.norm(), 1.0, epsilon = 1e-14);
            let v = vecs.column(k);
            let r = &a * v - v * *lam;
            assert!(r.norm() < 1e-13);
        }
    }

    #[test]
    fn expm_diagonal_and_nilpotent() {
        let a = cm(2, 2, &[-1.0, 0.0, 0.0, -30.0]);
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 0)].re, (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 1)].re / (-30.0f64).exp(), 1.0, epsilon = 1e-12);
        let n = cm(2, 2, &[0.0, 7.0, 0.0, 0.0]);
        let e = expm(&n);
        assert_abs_diff_eq!(e[(0, 1)].re, 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 0)].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_rotation_all_pade_orders() {
        // exp([[0, -w], [w, 0]]) = [[cos w, -sin w], [sin w, cos w]]
        for &w in &[1e-3, 0.1, 0.5, 1.5, 4.0, 25.0] {
            let a = cm(2, 2, &[0.0, -w, w, 0.0]);
            let e = expm(&a);
            assert_abs_diff_eq!(e[(0, 0)].re, w.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(e[(1, 0)].re, w.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sylvester_matches_kronecker() {
        let a = CMat::from_row_slice(2, 2, &[c(-1.0, 0.3), c(2.0, 0.0), c(0.0, 0.0), c(-3.0, -1.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(-0.5, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(-2.0, 0.0)]);
        let rhs = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, -1.0), c(0.0, 0.5), c(-1.0, 0.0)]);
        let x = sylvester(&a, &b, &rhs).unwrap();
        assert!((&a * &x + &x * &b - &rhs).norm() < 1e-13);
    }

    #[test]
    fn sylvester_detects_shared_spectrum() {
        let a = cm(1, 1, &[1.0]);
        let b = cm(1, 1, &[-1.0]);
        let rhs = cm(1, 1, &[1.0]);
        assert!(matches!(sylvester(&a, &b, &rhs), Err(Error::SylvesterSingular { .. })));
    }

    #[test]
    fn gramian_paths_agree() {
        let r = cm(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let s = r.adjoint();
        let m = cm(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let via_sylvester = finite_gramian(&r, &m, &s, 0.7).unwrap();
        let via_block = van_loan_integral(&r, &m, &s, 0.7);
        assert!(rel_diff(&via_sylvester, &via_block) < 1e-12);
        // scalar closed form: ∫₀ʰ e^{-2u} du
        let one = cm(1, 1, &[-1.0]);
        let g = finite_gramian(&one, &cm(1, 1, &[1.0]), &one, 0.7).unwrap();
        assert_abs_diff_eq!(g[(0, 0)].re, (1.0 - (-1.4f64).exp()) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gramian_falls_back_when_spectra_touch() {
        // σ(r) = {1}, σ(−s) = {1}: Sylvester path is singular.
        let r = cm(1, 1, &[1.0]);
        let s = cm(1, 1, &[-1.0]);
        let g = finite_gramian(&r, &cm(1, 1, &[2.0]), &s, 0.5).unwrap();
        assert_abs_diff_eq!(g[(0, 0)].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn psd_factor_clips_roundoff_only() {
        let a = RMat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-16]);
        let l = psd_factor(&a, 1e-12).unwrap();
        assert!((&l * l.transpose() - &a).norm() < 1e-12);
        let bad = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(psd_factor(&bad, 1e-12), Err(Error::CholeskyFail { .. })));
    }
}
