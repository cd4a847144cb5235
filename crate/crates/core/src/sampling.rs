//! Exact weak VARMA(p, p−1) structure of an MCARMA process sampled on the
//! grid `{nh}`.
//!
//! The sampled matrices `S_k = e^{−hR_k}` form a complete set of right
//! solvents of the monic `Ψ(λ)`, and `Φ(λ) = Ψ_p⁻¹ Ψ(λ)` reversed gives
//! `Y_n − Σ_j Φ_j Y_{n−j} = U_n`, where `U` is a `(p−1)`-dependent noise.

use crate::error::{Error, Result};
use crate::linalg::{self, complexify, CMat, RMat, C64};
use crate::matpoly::{self, LambdaMatrix, VANDERMONDE_COND};
use crate::mcarma::{OuDecomposition, REAL_TOL};

/// `e^{−hλᵢ}` closer than this (relative) counts as aliased.
pub const ALIAS_TOL: f64 = 1e-10;
/// Iteration cap of the innovations (Riccati) warm start.
pub const MAX_INNOVATIONS: usize = 10_000;
/// Relative change between successive innovation iterates at convergence.
pub const INNOVATIONS_TOL: f64 = 1e-10;
/// The warm start hands over to Newton once its steps fall below this.
const WARM_START_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 50;
/// Block order of the Toeplitz positivity check in [`fit_ma`].
pub const TOEPLITZ_ORDER: usize = 50;

#[derive(Clone, Debug)]
pub struct SampledAr {
    /// Monic `Ψ(λ) = Iλᵖ + Ψ₁λᵖ⁻¹ + … + Ψ_p`.
    pub psi: LambdaMatrix,
    /// `[Φ₁, …, Φ_p]`.
    pub phi: Vec<RMat>,
    /// `e^{−hR_k}`.
    pub sampled_solvents: Vec<CMat>,
    pub cond_v: f64,
}

/// `[Ψ_p, …, Ψ₁] = −[S₁ᵖ, …, S_pᵖ] V(S₁, …, S_p)⁻¹` with `S_k = e^{−hR_k}`
/// and `Φ_j = −Ψ_p⁻¹Ψ_{p−j}`.
pub fn varma_ar(dec: &OuDecomposition, h: f64) -> Result<SampledAr> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidModel(format!("sampling step {h} must be positive")));
    }
    let roots = dec.solvents.spectrum();
    let sampled_roots: Vec<C64> = roots.iter().map(|z| (-h * z).exp()).collect();
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            let (a, b) = (sampled_roots[i], sampled_roots[j]);
            if (a - b).norm() <= ALIAS_TOL * a.norm().max(b.norm()).max(1.0) {
                return Err(Error::AliasedSampling {
                    first: roots[i],
                    second: roots[j],
                });
            }
        }
    }
    let (p, d) = (dec.p(), dec.d());
    let sampled: Vec<CMat> = dec
        .components
        .iter()
        .map(|c| linalg::expm(&(&c.r * C64::new(-h, 0.0))))
        .collect();
    let v = matpoly::vandermonde(&sampled);
    let cond_v = linalg::cond2(&v);
    if !(cond_v <= VANDERMONDE_COND) {
        return Err(Error::SingularVandermonde { cond: cond_v });
    }
    let mut top = CMat::zeros(d, p * d);
    for (k, s) in sampled.iter().enumerate() {
        top.view_mut((0, k * d), (d, d)).copy_from(&linalg::mat_pow(s, p));
    }
    let xt = linalg::solve(&v.transpose(), &(-top.transpose())).ok_or(Error::SingularVandermonde { cond: cond_v })?;
    let x = xt.transpose();
    let tail: Vec<CMat> = (1..=p).map(|j| x.view((0, (p - j) * d), (d, d)).into_owned()).collect();
    let psi = LambdaMatrix::monic(tail)?;

    let psi_p = psi.coeff(p);
    if !(linalg::cond2(psi_p) <= VANDERMONDE_COND) {
        return Err(Error::SingularPsi);
    }
    let psi_p_inv = linalg::inverse(psi_p).ok_or(Error::SingularPsi)?;
    let phi = (1..=p)
        .map(|j| linalg::certified_real(&(-(&psi_p_inv * psi.coeff(p - j))), REAL_TOL, "autoregressive coefficient"))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledAr {
        psi,
        phi,
        sampled_solvents: sampled,
        cond_v,
    })
}

/// Cross-covariances `Σ^{(h)}_{νμ} = ∫₀ʰ e^{R_ν u} Res_ν Σ_L Res_μᴴ e^{R_μᴴ u} du`
/// of the one-step OU innovations.
pub fn innovation_covariances(dec: &OuDecomposition, h: f64) -> Result<Vec<Vec<CMat>>> {
    let sigma = complexify(&dec.sigma_l);
    dec.components
        .iter()
        .map(|cn| {
            dec.components
                .iter()
                .map(|cm| {
                    let m = &cn.res * &sigma * cm.res.adjoint();
                    linalg::finite_gramian(&cn.r, &m, &cm.r.adjoint(), h)
                })
                .collect()
        })
        .collect()
}

/// `γ_U(l) = E[U_{n+l} U_nᵀ]` for `l = 0, …, p−1`:
/// `Σ_{r=0}^{p−l−1} Σ_{ν,μ} G_{r+l,ν} Σ^{(h)}_{νμ} G_{r,μ}ᴴ` with
/// `G_{r,k} = e^{hrR_k} − Σ_{j=1}^{r} Φ_j e^{h(r−j)R_k}`.
pub fn noise_acvf(dec: &OuDecomposition, phi: &[RMat], h: f64) -> Result<Vec<RMat>> {
    let (p, d) = (dec.p(), dec.d());
    if phi.len() != p {
        return Err(Error::DimensionMismatch(format!("{} AR coefficients for p = {p}", phi.len())));
    }
    let cov = innovation_covariances(dec, h)?;
    let phi_c: Vec<CMat> = phi.iter().map(complexify).collect();
    // powers[k][r] = e^{hrR_k}
    let powers: Vec<Vec<CMat>> = dec
        .components
        .iter()
        .map(|c| {
            let step = linalg::expm(&(&c.r * C64::new(h, 0.0)));
            let mut out = vec![linalg::cidentity(d)];
            for r in 1..p {
                out.push(&out[r - 1] * &step);
            }
            out
        })
        .collect();
    let g: Vec<Vec<CMat>> = (0..p)
        .map(|r| {
            (0..p)
                .map(|k| {
                    let mut acc = powers[k][r].clone();
                    for j in 1..=r {
                        acc -= &phi_c[j - 1] * &powers[k][r - j];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    (0..p)
        .map(|l| {
            let mut acc = CMat::zeros(d, d);
            // the terms cancel heavily, so roundoff is judged against their total size
            let mut scale = 0.0;
            for r in 0..(p - l) {
                for nu in 0..p {
                    for mu in 0..p {
                        let term = &g[r + l][nu] * &cov[nu][mu] * g[r][mu].adjoint();
                        scale += term.norm();
                        acc += term;
                    }
                }
            }
            let leak = linalg::max_imag(&acc);
            if leak > REAL_TOL * scale.max(1.0) {
                return Err(Error::ImaginaryLeak {
                    what: "noise autocovariance",
                    magnitude: leak,
                });
            }
            let g = acc.map(|z| z.re);
            if l > 0 {
                return Ok(g);
            }
            let asym = (&g - g.transpose()).norm();
            if asym > REAL_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Identity(format!("lag-0 noise covariance asymmetric by {asym:.3e}")));
            }
            Ok((&g + g.transpose()) * 0.5)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct MaFit {
    /// `[Θ₁, …, Θ_q]`.
    pub theta: Vec<RMat>,
    pub sigma_eps: RMat,
    pub iterations: usize,
    /// `1 − max|μ|` over the roots of `μ^q I + Θ₁μ^{q−1} + … + Θ_q`.
    pub invertibility_margin: f64,
}

impl MaFit {
    /// `Γ(l) = Σ_k Θ_{k+l} Σ_ε Θ_kᵀ` (`Θ₀ = I`), the lag-`l` autocovariance
    /// `E[U_{n+l} U_nᵀ]` implied by the fit.
    pub fn acvf(&self) -> Vec<RMat> {
        let d = self.sigma_eps.nrows();
        let q = self.theta.len();
        let th = |k: usize| -> RMat {
            if k == 0 {
                RMat::identity(d, d)
            } else {
                self.theta[k - 1].clone()
            }
        };
        (0..=q)
            .map(|l| (0..=(q - l)).fold(RMat::zeros(d, d), |acc, k| acc + th(k + l) * &self.sigma_eps * th(k).transpose()))
            .collect()
    }
}

fn lagged(gamma: &[RMat], k: isize) -> RMat {
    let d = gamma[0].nrows();
    let idx = k.unsigned_abs();
    if idx >= gamma.len() {
        RMat::zeros(d, d)
    } else if k >= 0 {
        gamma[idx].clone()
    } else {
        gamma[idx].transpose()
    }
}

/// Smallest eigenvalue of the block Toeplitz matrix with blocks `Γ(i − j)`,
/// `i, j < order`.
pub fn toeplitz_min_eigenvalue(gamma: &[RMat], order: usize) -> f64 {
    let d = gamma[0].nrows();
    let mut t = RMat::zeros(order * d, order * d);
    for i in 0..order {
        for j in 0..order {
            let blk = lagged(gamma, i as isize - j as isize);
            t.view_mut((i * d, j * d), (d, d)).copy_from(&blk);
        }
    }
    linalg::min_symmetric_eigenvalue(&t)
}

/// Invertible MA(q) fit to autocovariances `γ(0), …, γ(q)`
/// (`γ(l) = E[U_{n+l} U_nᵀ]`).
///
/// The innovations algorithm is run in its steady-state form, the Riccati
/// recursion `P ← FPFᵀ + M S⁻¹ Mᵀ` with `S = γ(0) − HPHᵀ`, `M = N − FPHᵀ`,
/// `F` the block shift, `H = [I 0 … 0]` and `N = [γ(1); …; γ(q)]`, started
/// from `P = 0`. Its iterates converge like `(1 − margin)ⁿ`, so once they
/// settle or the warm-up budget runs out the fixed point is finished by
/// Newton's method. Then `Σ_ε = S` and `Θ_j` is block `j` of `M S⁻¹`.
pub fn fit_ma(gamma: &[RMat]) -> Result<MaFit> {
    let first = gamma.first().ok_or_else(|| Error::DimensionMismatch("empty autocovariance".into()))?;
    let d = first.nrows();
    if gamma.iter().any(|g| g.nrows() != d || g.ncols() != d) {
        return Err(Error::DimensionMismatch("autocovariance blocks must be square of equal size".into()));
    }
    let q = gamma.len() - 1;
    let trace = first.trace();
    let min0 = linalg::min_symmetric_eigenvalue(first);
    if !(min0 > 1e-10 * trace) {
        return Err(Error::NotPd(format!("lag-0 autocovariance has eigenvalue {min0:.3e}")));
    }
    let tmin = toeplitz_min_eigenvalue(gamma, TOEPLITZ_ORDER);
    if tmin < -1e-10 * trace {
        return Err(Error::NotPd(format!("block Toeplitz matrix has eigenvalue {tmin:.3e}")));
    }
    if q == 0 {
        return Ok(MaFit {
            theta: Vec::new(),
            sigma_eps: first.clone(),
            iterations: 0,
            invertibility_margin: 1.0,
        });
    }

    let scale = first.norm();
    let n = q * d;
    let mut big_n = RMat::zeros(n, d);
    for l in 1..=q {
        big_n.view_mut(((l - 1) * d, 0), (d, d)).copy_from(&gamma[l]);
    }
    let mut f = RMat::zeros(n, n);
    for i in 0..(q - 1) * d {
        f[(i, i + d)] = 1.0;
    }
    // S, M and the Riccati map g(P) at P
    let step = |p: &RMat| -> Result<(RMat, RMat, RMat)> {
        let s = first - p.view((0, 0), (d, d));
        let s = (&s + s.transpose()) * 0.5;
        let m = &big_n - (&f * p).columns(0, d);
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPd("singular innovation covariance".into()))?;
        let g = &f * p * f.transpose() + &m * &s_inv * m.transpose();
        Ok((s, m * s_inv, (&g + g.transpose()) * 0.5))
    };

    let mut p = RMat::zeros(n, n);
    let mut iterations = 0;
    while iterations < MAX_INNOVATIONS {
        iterations += 1;
        let (_, _, g) = step(&p)?;
        let change = (&g - &p).norm();
        p = g;
        if change <= WARM_START_TOL * scale {
            break;
        }
    }

    let mut newton = 0;
    let mut last = f64::INFINITY;
    loop {
        let (_, k, g) = step(&p)?;
        let residual = g - &p;
        let size = residual.norm();
        let floor = 1e2 * f64::EPSILON * p.norm().max(scale);
        // stop at the roundoff floor, or once Newton stops making progress there
        if size <= floor || (size >= last && size <= INNOVATIONS_TOL * scale) {
            break;
        }
        if newton == MAX_NEWTON {
            return Err(Error::NoConvergence { iterations: iterations + newton });
        }
        newton += 1;
        last = size;
        // dg = F_c E F_cᵀ with F_c = F − K H, so the step solves E − F_c E F_cᵀ = g(P) − P
        let mut fc = f.clone();
        let lead = fc.columns(0, d) - &k;
        fc.columns_mut(0, d).copy_from(&lead);
        let e = stein(&fc, &residual).ok_or(Error::NoConvergence { iterations: iterations + newton })?;
        p += e;
        p = (&p + p.transpose()) * 0.5;
    }

    let (sigma_eps, k, _) = step(&p)?;
    let theta: Vec<RMat> = (0..q).map(|j| k.view((j * d, 0), (d, d)).into_owned()).collect();
    let margin = invertibility_margin(&theta)?;
    Ok(MaFit {
        theta,
        sigma_eps,
        iterations: iterations + newton,
        invertibility_margin: margin,
    })
}

/// `X = Σ_k Aᵏ Q (Aᵀ)ᵏ` by Smith doubling; `None` unless `A` is Schur stable
/// to working precision.
fn stein(a: &RMat, q: &RMat) -> Option<RMat> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let add = &ak * &x * ak.transpose();
        let done = add.norm() <= f64::EPSILON * x.norm();
        x += add;
        if done {
            return Some(x);
        }
        ak = &ak * &ak;
        if !ak.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}

/// `1 − max|μ|` over the eigenvalues of the companion of
/// `μ^q I + Θ₁μ^{q−1} + … + Θ_q`; positive iff `det Θ(z)` has no zeros in
/// the closed unit disc.
pub fn invertibility_margin(theta: &[RMat]) -> Result<f64> {
    if theta.is_empty() {
        return Ok(1.0);
    }
    let lm = LambdaMatrix::monic(theta.iter().map(complexify).collect())?;
    let eigs = linalg::eigenvalues(&lm.companion()?)?;
    Ok(1.0 - eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[derive(Clone, Debug)]
pub struct SampledVarma {
    pub h: f64,
    pub phi: Vec<RMat>,
    pub psi: LambdaMatrix,
    pub gamma_u: Vec<RMat>,
    pub theta: Vec<RMat>,
    pub sigma_eps: RMat,
    pub schur_stable: bool,
    pub cond_v: f64,
    pub invertibility_margin: f64,
}

/// AR coefficients, noise autocovariances and fitted MA part at step `h`.
pub fn sampled_varma(dec: &OuDecomposition, h: f64) -> Result<SampledVarma> {
    let ar = varma_ar(dec, h)?;
    let gamma_u = noise_acvf(dec, &ar.phi, h)?;
    let ma = fit_ma(&gamma_u)?;
    // |e^{−hλ}| > 1 ⇔ Re λ < 0
    let schur_stable = dec.solvents.spectrum().iter().all(|z| (-h * z).exp().norm() > 1.0);
    Ok(SampledVarma {
        h,
        phi: ar.phi,
        psi: ar.psi,
        gamma_u,
        theta: ma.theta,
        sigma_eps: ma.sigma_eps,
        schur_stable,
        cond_v: ar.cond_v,
        invertibility_margin: ma.invertibility_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpoly::Grouping;
    use crate::mcarma::{analyze, McarmaModel};

    fn scalar(tail: &[f64], b: &[f64]) -> OuDecomposition {
        let model = McarmaModel::from_real(
            &tail.iter().map(|&x| RMat::from_element(1, 1, x)).collect::<Vec<_>>(),
            &b.iter().map(|&x| RMat::from_element(1, 1, x)).collect::<Vec<_>>(),
            RMat::identity(1, 1),
        )
        .unwrap();
        analyze(&model, &Grouping::Auto, None).unwrap()
    }

    fn example() -> OuDecomposition {
        let rm = |v: &[f64]| RMat::from_row_slice(2, 2, v);
        let model = McarmaModel::from_real(
            &[rm(&[-11.0, 22.0, -12.0, 21.0]), rm(&[-42.0, 52.0, -36.0, 44.0])],
            &[RMat::identity(2, 2)],
            RMat::identity(2, 2),
        )
        .unwrap();
        analyze(&model, &Grouping::Auto, None).unwrap()
    }

    #[test]
    fn first_order_phi_is_one_step_propagator() {
        let dec = scalar(&[0.8], &[1.0]);
        let ar = varma_ar(&dec, 0.25).unwrap();
        assert!((ar.phi[0][(0, 0)] - (-0.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn scalar_second_order_coefficients() {
        let dec = scalar(&[3.0, 2.0], &[1.0]);
        let h = 0.5;
        let ar = varma_ar(&dec, h).unwrap();
        assert!((ar.phi[0][(0, 0)] - ((-0.5f64).exp() + (-1.0f64).exp())).abs() < 1e-12);
        assert!((ar.phi[1][(0, 0)] + (-1.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn sampled_solvents_annihilate_psi() {
        let dec = example();
        let ar = varma_ar(&dec, 0.1).unwrap();
        for s in &ar.sampled_solvents {
            assert!(ar.psi.eval_right(s).unwrap().norm() <= 1e-8);
        }
    }

    #[test]
    fn aliasing_detected() {
        // λ² + 1 → ±i; e^{−hλ} coincide when h = π
        let dec = scalar(&[0.0, 1.0], &[1.0]);
        assert!(matches!(varma_ar(&dec, std::f64::consts::PI), Err(Error::AliasedSampling { .. })));
    }

    #[test]
    fn first_order_noise_is_increment_covariance() {
        let a = 0.7;
        let h = 0.3;
        let dec = scalar(&[a], &[1.0]);
        let ar = varma_ar(&dec, h).unwrap();
        let g = noise_acvf(&dec, &ar.phi, h).unwrap();
        assert_eq!(g.len(), 1);
        let want = (1.0 - (-2.0 * a * h as f64).exp()) / (2.0 * a);
        assert!((g[0][(0, 0)] - want).abs() < 1e-14);
    }

    #[test]
    fn ma_one_identity() {
        let theta = 0.5;
        let gamma = vec![RMat::from_element(1, 1, 1.0 + theta * theta), RMat::from_element(1, 1, theta)];
        let fit = fit_ma(&gamma).unwrap();
        assert!((fit.theta[0][(0, 0)] - theta).abs() < 1e-8);
        assert!((fit.sigma_eps[(0, 0)] - 1.0).abs() < 1e-8);
        assert!((fit.invertibility_margin - 0.5).abs() < 1e-8);
    }

    #[test]
    fn ma_zero_order_is_white() {
        let g = RMat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let fit = fit_ma(std::slice::from_ref(&g)).unwrap();
        assert!(fit.theta.is_empty());
        assert_eq!(fit.sigma_eps, g);
    }

    #[test]
    fn ma_rejects_invalid_sequences() {
        let gamma = vec![RMat::from_element(1, 1, 1.0), RMat::from_element(1, 1, 0.9)];
        assert!(matches!(fit_ma(&gamma), Err(Error::NotPd(_))));
        let gamma = vec![RMat::from_element(1, 1, -1.0)];
        assert!(matches!(fit_ma(&gamma), Err(Error::NotPd(_))));
    }

    #[test]
    fn example_round_trip() {
        let dec = example();
        let sv = sampled_varma(&dec, 0.1).unwrap();
        assert!(sv.schur_stable);
        let fit = MaFit {
            theta: sv.theta.clone(),
            sigma_eps: sv.sigma_eps.clone(),
            iterations: 0,
            invertibility_margin: sv.invertibility_margin,
        };
        for (g, w) in fit.acvf().iter().zip(&sv.gamma_u) {
            assert!((g - w).norm() <= 1e-6 * w.norm().max(sv.gamma_u[0].norm() * 1e-12));
        }
        assert!(sv.invertibility_margin > 1e-6);
        let s0 = &sv.gamma_u[0];
        assert_eq!(s0, &s0.transpose());
        assert!(linalg::min_symmetric_eigenvalue(s0) > 0.0);
    }
}
