//! Strictly proper rational left λ-matrices `F(λ) = A(λ)⁻¹B(λ)`, matrix
//! residues at right solvents and the block partial-fraction expansion
//! `F(λ) = Σ_k (λI − R_k)⁻¹ Res_k`.

use crate::error::{Error, Result};
use crate::linalg::{self, cidentity, CMat, C64};
use crate::matpoly::{LambdaMatrix, SolventSet};

/// Relative singular-value threshold of the coprimeness rank test.
pub const RANK_TOL: f64 = 1e-8;
/// Distance to a pole below which evaluation is refused.
pub const POLE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct RationalLeftMatrix {
    a: LambdaMatrix,
    b: LambdaMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrreducibilityCertificate {
    pub irreducible: bool,
    /// First latent root at which `[A(λ) | B(λ)]` loses rank.
    pub witness: Option<C64>,
    pub tolerance: f64,
    /// Smallest `σ_d / max(σ_max, Σ‖A_k‖|λ|^{p−k} + Σ‖B_k‖|λ|^{q−k})` of `[A(λᵢ) | B(λᵢ)]` over the latent roots.
    pub min_relative_sv: f64,
}

impl RationalLeftMatrix {
    pub fn new(a: LambdaMatrix, b: LambdaMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NonSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if !a.is_monic() {
            return Err(Error::NotMonic);
        }
        if b.rows() != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, A has {}",
                b.rows(),
                a.rows()
            )));
        }
        if b.degree() >= a.degree() {
            return Err(Error::InvalidModel(format!(
                "deg B = {} must be below deg A = {}",
                b.degree(),
                a.degree()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &LambdaMatrix {
        &self.a
    }

    pub fn b(&self) -> &LambdaMatrix {
        &self.b
    }

    /// `A(λ)⁻¹B(λ)` by a dense solve.
    pub fn eval(&self, lambda: C64) -> Result<CMat> {
        linalg::solve(&self.a.eval(lambda), &self.b.eval(lambda)).ok_or(Error::PoleHit { lambda })
    }
}

/// Left-coprimeness test: `rank [A(λᵢ) | B(λᵢ)] = d` at every latent root.
pub fn check_irreducible(f: &RationalLeftMatrix, roots: &[C64]) -> IrreducibilityCertificate {
    let d = f.a.rows();
    let m = f.b.cols();
    let mut cert = IrreducibilityCertificate {
        irreducible: true,
        witness: None,
        tolerance: RANK_TOL,
        min_relative_sv: f64::INFINITY,
    };
    for &lambda in roots {
        let mut block = CMat::zeros(d, d + m);
        block.view_mut((0, 0), (d, d)).copy_from(&f.a.eval(lambda));
        block.view_mut((0, d), (d, m)).copy_from(&f.b.eval(lambda));
        let sv = linalg::singular_values(&block);
        // both blocks vanish at a common scalar root, so σ_max alone is
        // roundoff; the coefficient magnitudes at |λ| give the floor
        let smax = sv[0].max(magnitude(&f.a, lambda) + magnitude(&f.b, lambda));
        let rel = if smax > 0.0 { sv[d - 1] / smax } else { 0.0 };
        cert.min_relative_sv = cert.min_relative_sv.min(rel);
        if rel <= RANK_TOL && cert.irreducible {
            cert.irreducible = false;
            cert.witness = Some(lambda);
        }
    }
    cert
}

fn magnitude(a: &LambdaMatrix, lambda: C64) -> f64 {
    let r = lambda.norm();
    a.coeffs().iter().fold(0.0, |acc, c| acc * r + c.norm())
}

/// Unit lower block-triangular `A#` with `A_i` on the `i`-th block
/// subdiagonal.
pub fn a_sharp(a: &LambdaMatrix) -> CMat {
    let (d, p) = (a.rows(), a.degree());
    let mut m = cidentity(p * d);
    for i in 0..p {
        for j in 0..i {
            m.view_mut((i * d, j * d), (d, d)).copy_from(a.coeff(i - j));
        }
    }
    m
}

/// `B# = [0; B₀; …; B_q]` with `(p − q − 1)` leading zero blocks.
pub fn b_sharp(a: &LambdaMatrix, b: &LambdaMatrix) -> CMat {
    let (d, p, q, m) = (a.rows(), a.degree(), b.degree(), b.cols());
    let mut out = CMat::zeros(p * d, m);
    for j in 0..=q {
        out.view_mut(((p - q - 1 + j) * d, 0), (d, m)).copy_from(b.coeff(j));
    }
    out
}

/// Solves `A# x = rhs` by forward block substitution.
pub fn solve_a_sharp(a: &LambdaMatrix, rhs: &CMat) -> CMat {
    let (d, p) = (a.rows(), a.degree());
    let m = rhs.ncols();
    let mut x = rhs.clone();
    for i in 1..p {
        let mut acc = x.view((i * d, 0), (d, m)).into_owned();
        for j in 0..i {
            acc -= a.coeff(i - j) * x.view((j * d, 0), (d, m));
        }
        x.view_mut((i * d, 0), (d, m)).copy_from(&acc);
    }
    x
}

#[derive(Clone, Debug)]
pub struct PartialFraction {
    pairs: Vec<(CMat, CMat)>,
    poles: Vec<C64>,
}

impl PartialFraction {
    pub fn new(pairs: Vec<(CMat, CMat)>) -> Result<Self> {
        let mut poles = Vec::new();
        for (r, _) in &pairs {
            poles.extend(linalg::eigenvalues(r)?);
        }
        Ok(Self { pairs, poles })
    }

    pub fn pairs(&self) -> &[(CMat, CMat)] {
        &self.pairs
    }

    pub fn residues(&self) -> Vec<CMat> {
        self.pairs.iter().map(|(_, res)| res.clone()).collect()
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    /// `Σ_k (λI − R_k)⁻¹ Res_k`.
    pub fn eval(&self, lambda: C64) -> Result<CMat> {
        if self.poles.iter().any(|z| (z - lambda).norm() < POLE_TOL) {
            return Err(Error::PoleHit { lambda });
        }
        let (d, m) = self.pairs[0].1.shape();
        let mut acc = CMat::zeros(d, m);
        for (r, res) in &self.pairs {
            let shifted = cidentity(d) * lambda - r;
            acc += linalg::solve(&shifted, res).ok_or(Error::PoleHit { lambda })?;
        }
        Ok(acc)
    }
}

/// Matrix residues `[Res₁; …; Res_p] = V⁻¹ (A#)⁻¹ B#`.
pub fn residues(f: &RationalLeftMatrix, set: &SolventSet) -> Result<PartialFraction> {
    let (d, p) = (f.a.rows(), f.a.degree());
    if set.degree() != p || set.order() != d {
        return Err(Error::DimensionMismatch("solvent set does not match A".into()));
    }
    let rhs = solve_a_sharp(&f.a, &b_sharp(&f.a, &f.b));
    let stacked = linalg::solve(set.vandermonde(), &rhs).ok_or(Error::SingularVandermonde { cond: set.cond_v() })?;
    let m = f.b.cols();
    let pairs = set
        .solvents()
        .iter()
        .enumerate()
        .map(|(k, s)| (s.matrix.clone(), stacked.view((k * d, 0), (d, m)).into_owned()))
        .collect();
    PartialFraction::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complexify, RMat};
    use crate::matpoly::{latent_roots, monic_real, solvents_from_latents, Grouping};

    fn rm(vals: &[f64]) -> CMat {
        complexify(&RMat::from_row_slice(2, 2, vals))
    }

    fn example() -> RationalLeftMatrix {
        let a = monic_real(2, &[&[-11.0, 22.0, -12.0, 21.0], &[-42.0, 52.0, -36.0, 44.0]]).unwrap();
        let b = LambdaMatrix::new(vec![cidentity(2)]).unwrap();
        RationalLeftMatrix::new(a, b).unwrap()
    }

    fn scalar(a_tail: &[f64], b: &[f64]) -> RationalLeftMatrix {
        let t: Vec<&[f64]> = a_tail.iter().map(std::slice::from_ref).collect();
        let a = monic_real(1, &t).unwrap();
        let b = LambdaMatrix::from_real(&b.iter().map(|&x| RMat::from_element(1, 1, x)).collect::<Vec<_>>()).unwrap();
        RationalLeftMatrix::new(a, b).unwrap()
    }

    fn roots(f: &RationalLeftMatrix) -> Vec<C64> {
        latent_roots(f.a()).unwrap().into_iter().map(|lp| lp.root).collect()
    }

    /// Trapezoid rule on a circle around `σ(R_k)` that excludes every other
    /// pole: `(1/N) Σ F(λ_j)(λ_j − c)` approximates the contour residue.
    fn contour_residue(f: &RationalLeftMatrix, own: &[C64], others: &[C64]) -> CMat {
        let n = 256;
        let c = own.iter().sum::<C64>() / own.len() as f64;
        let inner = own.iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
        let outer = others.iter().map(|z| (z - c).norm()).fold(f64::INFINITY, f64::min);
        let radius = 0.5 * (inner + outer);
        let mut acc = CMat::zeros(f.a().rows(), f.b().cols());
        for j in 0..n {
            let w = C64::from_polar(radius, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            acc += f.eval(c + w).unwrap() * w;
        }
        acc / C64::new(n as f64, 0.0)
    }

    #[test]
    fn identity_numerator_is_irreducible() {
        let f = example();
        let cert = check_irreducible(&f, &roots(&f));
        assert!(cert.irreducible);
        assert!(cert.witness.is_none());
    }

    #[test]
    fn common_root_detected() {
        let f = scalar(&[3.0, 2.0], &[1.0, 1.0]);
        let cert = check_irreducible(&f, &roots(&f));
        assert!(!cert.irreducible);
        assert!((cert.witness.unwrap() - C64::new(-1.0, 0.0)).norm() < 1e-10);
        let f = scalar(&[3.0, 2.0], &[1.0]);
        assert!(check_irreducible(&f, &roots(&f)).irreducible);
    }

    #[test]
    fn example_residues_for_both_solvent_pairs() {
        let f = example();
        let cases = [
            (rm(&[0.0, -1.0, 2.0, -3.0]), rm(&[-3.0, -2.0, 0.0, -4.0]), rm(&[1.0, -1.0, -2.0, 3.0]), rm(&[-1.0, 1.0, 2.0, -3.0])),
            (rm(&[-7.0, 6.0, -3.0, 2.0]), rm(&[-3.0, 0.5, 0.0, -2.0]), rm(&[8.0, -11.0, 6.0, -8.0]), rm(&[-8.0, 11.0, -6.0, 8.0])),
        ];
        for (ra, rb, want_a, want_b) in cases {
            let set = SolventSet::certify(f.a(), vec![ra, rb]).unwrap();
            let pf = residues(&f, &set).unwrap();
            assert!(linalg::max_abs(&(&pf.pairs()[0].1 - want_a)) <= 1e-9);
            assert!(linalg::max_abs(&(&pf.pairs()[1].1 - want_b)) <= 1e-9);
        }
    }

    #[test]
    fn scalar_residues_match_derivative_formula() {
        let f = scalar(&[3.0, 2.0], &[1.0]);
        let set = solvents_from_latents(f.a(), &latent_roots(f.a()).unwrap(), &Grouping::Auto).unwrap();
        let pf = residues(&f, &set).unwrap();
        for (r, res) in pf.pairs() {
            // B(r) / A'(r) with A'(λ) = 2λ + 3
            let want = 1.0 / (2.0 * r[(0, 0)] + 3.0);
            assert!((res[(0, 0)] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_fraction_at_zero_inverts_constant_term() {
        let f = example();
        let set = solvents_from_latents(f.a(), &latent_roots(f.a()).unwrap(), &Grouping::Auto).unwrap();
        let pf = residues(&f, &set).unwrap();
        let want = linalg::inverse(&rm(&[-42.0, 52.0, -36.0, 44.0])).unwrap();
        assert!(linalg::rel_diff(&pf.eval(C64::new(0.0, 0.0)).unwrap(), &want) < 1e-12);
        assert!(pf.eval(C64::new(1e6, 0.0)).unwrap().norm() < 1e-5);
        assert!(matches!(pf.eval(C64::new(-2.0, 0.0)), Err(Error::PoleHit { .. })));
    }

    #[test]
    fn both_example_expansions_agree() {
        let f = example();
        let p1 = residues(&f, &SolventSet::certify(f.a(), vec![rm(&[0.0, -1.0, 2.0, -3.0]), rm(&[-3.0, -2.0, 0.0, -4.0])]).unwrap()).unwrap();
        let p2 = residues(&f, &SolventSet::certify(f.a(), vec![rm(&[-7.0, 6.0, -3.0, 2.0]), rm(&[-3.0, 0.5, 0.0, -2.0])]).unwrap()).unwrap();
        let z = C64::new(1.0, 1.0);
        assert!((p1.eval(z).unwrap() - p2.eval(z).unwrap()).norm() <= 1e-10);
    }

    #[test]
    fn reconstruction_on_probe_circle() {
        let f = example();
        let set = solvents_from_latents(f.a(), &latent_roots(f.a()).unwrap(), &Grouping::Auto).unwrap();
        let pf = residues(&f, &set).unwrap();
        for j in 0..20 {
            let z = C64::from_polar(8.0, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / 20.0);
            let want = f.eval(z).unwrap();
            assert!((pf.eval(z).unwrap() - &want).norm() <= 1e-8 * want.norm());
        }
    }

    #[test]
    fn contour_quadrature_matches_linear_solve() {
        let f = example();
        let set = SolventSet::certify(f.a(), vec![rm(&[0.0, -1.0, 2.0, -3.0]), rm(&[-3.0, -2.0, 0.0, -4.0])]).unwrap();
        let pf = residues(&f, &set).unwrap();
        for k in 0..2 {
            let own = &set.solvents()[k].spectrum;
            let others = &set.solvents()[1 - k].spectrum;
            let quad = contour_residue(&f, own, others);
            assert!((quad - &pf.pairs()[k].1).norm() < 1e-8);
        }
    }

    #[test]
    fn sharp_identity_holds() {
        let f = example();
        let asharp = a_sharp(f.a());
        let bsharp = b_sharp(f.a(), f.b());
        let bstar = solve_a_sharp(f.a(), &bsharp);
        assert!((asharp * bstar - bsharp).norm() < 1e-14);
    }

    #[test]
    fn rejects_improper_numerator() {
        let a = monic_real(1, &[&[1.0]]).unwrap();
        let b = LambdaMatrix::new(vec![cidentity(1), cidentity(1)]).unwrap();
        assert!(RationalLeftMatrix::new(a, b).is_err());
    }
}
