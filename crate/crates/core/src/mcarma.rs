//! MCARMA models, their state-space realisation and the decomposition of
//! the output into a sum of complex Ornstein–Uhlenbeck components.
//!
//! With a complete set of regular right solvents `R₁, …, R_p` and residues
//! `Res_k`, the block Vandermonde matrix `T = V(R₁, …, R_p)` diagonalises the
//! companion system: `A*T = T diag(R_k)`, `B* = T [Res₁; …; Res_p]` and
//! `C*T = [I, …, I]`. Each `Y_k` is then an OU process driven by
//! `Res_k dL`, and `Y = Σ_k Y_k`.

use crate::error::{Error, Result};
use crate::linalg::{self, cidentity, complexify, CMat, CVec, RMat, C64};
use crate::matpoly::{latent_roots, solvents_from_latents, Grouping, LambdaMatrix, SolventSet};
use crate::rational::{self, check_irreducible, PartialFraction, RationalLeftMatrix};

/// Relative tolerance of the similarity relations certified by
/// [`decompose`].
pub const SIMILARITY_TOL: f64 = 1e-9;
/// Relative tolerance for stripping imaginary parts of real quantities.
pub const REAL_TOL: f64 = 1e-9;
/// Most negative eigenvalue tolerated in `Σ_L`.
pub const PSD_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct McarmaModel {
    a: LambdaMatrix,
    b: LambdaMatrix,
    sigma_l: RMat,
}

impl McarmaModel {
    /// Validates `p > q ≥ 0`, real coefficients, monic `A` and a symmetric
    /// positive semidefinite `Σ_L` of size `m × m`.
    pub fn new(a: LambdaMatrix, b: LambdaMatrix, sigma_l: RMat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NonSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if !a.is_monic() {
            return Err(Error::NotMonic);
        }
        if a.degree() == 0 {
            return Err(Error::InvalidModel("autoregressive degree must be at least 1".into()));
        }
        if !a.is_real() || !b.is_real() {
            return Err(Error::InvalidModel("coefficients must be real".into()));
        }
        if b.rows() != a.rows() {
            return Err(Error::DimensionMismatch(format!("B has {} rows, A has {}", b.rows(), a.rows())));
        }
        if b.degree() >= a.degree() {
            return Err(Error::InvalidModel(format!(
                "q = {} must be below p = {}",
                b.degree(),
                a.degree()
            )));
        }
        let m = b.cols();
        if sigma_l.nrows() != m || sigma_l.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "sigma_L is {}x{}, expected {m}x{m}",
                sigma_l.nrows(),
                sigma_l.ncols()
            )));
        }
        if sigma_l.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("sigma_L has non-finite entries".into()));
        }
        let scale = sigma_l.amax().max(1.0);
        if (&sigma_l - sigma_l.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidModel("sigma_L is not symmetric".into()));
        }
        let min_eig = linalg::min_symmetric_eigenvalue(&sigma_l);
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidModel(format!("sigma_L has eigenvalue {min_eig:.3e}")));
        }
        Ok(Self { a, b, sigma_l })
    }

    /// Builds a model from real row-major blocks `[A₁, …, A_p]`,
    /// `[B₀, …, B_q]`.
    pub fn from_real(a_tail: &[RMat], b: &[RMat], sigma_l: RMat) -> Result<Self> {
        let a = LambdaMatrix::monic(a_tail.iter().map(complexify).collect())?;
        let b = LambdaMatrix::from_real(b)?;
        Self::new(a, b, sigma_l)
    }

    pub fn a(&self) -> &LambdaMatrix {
        &self.a
    }

    pub fn b(&self) -> &LambdaMatrix {
        &self.b
    }

    pub fn sigma_l(&self) -> &RMat {
        &self.sigma_l
    }

    pub fn p(&self) -> usize {
        self.a.degree()
    }

    pub fn q(&self) -> usize {
        self.b.degree()
    }

    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn transfer(&self) -> RationalLeftMatrix {
        RationalLeftMatrix::new(self.a.clone(), self.b.clone()).expect("validated on construction")
    }
}

#[derive(Clone, Debug)]
pub struct StateSpace {
    pub a_star: RMat,
    pub b_star: RMat,
    pub c_star: RMat,
    pub a_sharp: RMat,
    pub b_sharp: RMat,
}

fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

/// Companion realisation `dX = A*X dt + B* dL`, `Y = C*X`, with `B*` from
/// the β recursion; the identity `A# B* = B#` is checked.
pub fn build_state_space(model: &McarmaModel) -> Result<StateSpace> {
    let (p, q, d, m) = (model.p(), model.q(), model.d(), model.m());
    let a_star = real_part(&model.a.companion()?);
    let mut betas: Vec<RMat> = Vec::with_capacity(p);
    for k in 1..=p {
        let mut beta = if k + q >= p {
            real_part(model.b.coeff(k + q - p))
        } else {
            RMat::zeros(d, m)
        };
        for i in 1..k {
            beta -= real_part(model.a.coeff(i)) * &betas[k - i - 1];
        }
        betas.push(beta);
    }
    let mut b_star = RMat::zeros(p * d, m);
    for (k, beta) in betas.iter().enumerate() {
        b_star.view_mut((k * d, 0), (d, m)).copy_from(beta);
    }
    let mut c_star = RMat::zeros(d, p * d);
    c_star.view_mut((0, 0), (d, d)).fill_with_identity();
    let a_sharp = real_part(&rational::a_sharp(&model.a));
    let b_sharp = real_part(&rational::b_sharp(&model.a, &model.b));
    let gap = (&a_sharp * &b_star - &b_sharp).amax();
    if gap > 1e-12 * b_star.amax().max(1.0) {
        return Err(Error::Identity(format!("A#B* − B# = {gap:.3e}")));
    }
    Ok(StateSpace {
        a_star,
        b_star,
        c_star,
        a_sharp,
        b_sharp,
    })
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.a_star.nrows()
    }

    /// `C* e^{A*t} B*`.
    pub fn kernel(&self, t: f64) -> RMat {
        &self.c_star * linalg::expm_real(&(&self.a_star * t)) * &self.b_star
    }

    /// Stationary state covariance `Π` with `A*Π + ΠA*ᵀ + B*Σ_LB*ᵀ = 0`.
    pub fn stationary_covariance(&self, sigma_l: &RMat) -> Result<RMat> {
        let q = &self.b_star * sigma_l * self.b_star.transpose();
        let pi = linalg::lyapunov(&complexify(&self.a_star), &complexify(&q))?;
        let pi = linalg::certified_real(&pi, REAL_TOL, "stationary state covariance")?;
        Ok((&pi + pi.transpose()) * 0.5)
    }

    /// `C* e^{A*ℓ} Π C*ᵀ` at each lag.
    pub fn acvf(&self, sigma_l: &RMat, lags: &[f64]) -> Result<Vec<RMat>> {
        let pi = self.stationary_covariance(sigma_l)?;
        Ok(lags
            .iter()
            .map(|&l| &self.c_star * linalg::expm_real(&(&self.a_star * l)) * &pi * self.c_star.transpose())
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct OuComponent {
    pub r: CMat,
    pub res: CMat,
    pub y0: CVec,
}

/// OU-sum representation of a model for one certified solvent set.
#[derive(Clone, Debug)]
pub struct OuDecomposition {
    pub components: Vec<OuComponent>,
    /// Block Vandermonde transform `T = V(R₁, …, R_p)`.
    pub transform: CMat,
    pub transform_inv: CMat,
    pub state_space: StateSpace,
    pub sigma_l: RMat,
    pub solvents: SolventSet,
    pub partial_fraction: PartialFraction,
    /// Largest relative defect over the certified similarity relations.
    pub similarity_defect: f64,
}

/// Latent roots of `A`, certified solvents for `grouping`, then
/// [`decompose`] with initial state `x0` (zero when `None`).
pub fn analyze(model: &McarmaModel, grouping: &Grouping, x0: Option<&[f64]>) -> Result<OuDecomposition> {
    let pairs = latent_roots(model.a())?;
    let set = solvents_from_latents(model.a(), &pairs, grouping)?;
    decompose(model, set, x0)
}

pub fn decompose(model: &McarmaModel, set: SolventSet, x0: Option<&[f64]>) -> Result<OuDecomposition> {
    let (p, d, m) = (model.p(), model.d(), model.m());
    let n = p * d;
    let f = model.transfer();
    let cert = check_irreducible(&f, &set.spectrum());
    if let Some(witness) = cert.witness {
        return Err(Error::NotIrreducible { witness });
    }
    let pf = rational::residues(&f, &set)?;
    let ss = build_state_space(model)?;
    let t = set.vandermonde().clone();
    let t_inv = linalg::inverse(&t).ok_or(Error::SingularVandermonde { cond: set.cond_v() })?;

    let x0 = match x0 {
        Some(x) if x.len() != n => {
            return Err(Error::DimensionMismatch(format!("initial state has {} entries, expected {n}", x.len())))
        }
        Some(x) => CVec::from_iterator(n, x.iter().map(|&v| C64::new(v, 0.0))),
        None => CVec::zeros(n),
    };
    let y0 = &t_inv * &x0;

    let mut diag_r = CMat::zeros(n, n);
    let mut stacked = CMat::zeros(n, m);
    for (k, (r, res)) in pf.pairs().iter().enumerate() {
        diag_r.view_mut((k * d, k * d), (d, d)).copy_from(r);
        stacked.view_mut((k * d, 0), (d, m)).copy_from(res);
    }
    let mut ones = CMat::zeros(d, n);
    for k in 0..p {
        ones.view_mut((0, k * d), (d, d)).copy_from(&cidentity(d));
    }
    let a_star = complexify(&ss.a_star);
    let b_star = complexify(&ss.b_star);
    let checks = [
        ("A*T = T diag(R)", linalg::rel_diff(&(&a_star * &t), &(&t * &diag_r))),
        ("B* = T Res", linalg::rel_diff(&(&t * &stacked), &b_star)),
        ("C*T = [I … I]", linalg::rel_diff(&(complexify(&ss.c_star) * &t), &ones)),
        ("T Y(0) real", linalg::max_imag(&(&t * &y0)) / (1.0 + x0.norm())),
    ];
    let mut defect = 0.0f64;
    for (name, value) in checks {
        let tol = if name == "T Y(0) real" { 1e-10 } else { SIMILARITY_TOL };
        if !(value <= tol) {
            return Err(Error::Identity(format!("{name}: defect {value:.3e}")));
        }
        defect = defect.max(value);
    }

    let components = pf
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, (r, res))| OuComponent {
            r: r.clone(),
            res: res.clone(),
            y0: y0.rows(k * d, d).into_owned(),
        })
        .collect();
    Ok(OuDecomposition {
        components,
        transform: t,
        transform_inv: t_inv,
        state_space: ss,
        sigma_l: model.sigma_l().clone(),
        solvents: set,
        partial_fraction: pf,
        similarity_defect: defect,
    })
}

impl OuDecomposition {
    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn d(&self) -> usize {
        self.components[0].r.nrows()
    }

    pub fn m(&self) -> usize {
        self.components[0].res.ncols()
    }

    /// Largest real part over the latent roots.
    pub fn max_real_part(&self) -> f64 {
        self.solvents.spectrum().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stationary(&self) -> bool {
        self.max_real_part() < 0.0
    }

    pub fn require_stationary(&self) -> Result<()> {
        if self.is_stationary() {
            Ok(())
        } else {
            Err(Error::NotStationary {
                max_re: self.max_real_part(),
            })
        }
    }

    /// `Σ_k e^{tR_k} Res_k`, certified real.
    pub fn kernel(&self, t: f64) -> Result<RMat> {
        let (d, m) = (self.d(), self.m());
        let mut acc = CMat::zeros(d, m);
        for c in &self.components {
            acc += linalg::expm(&(&c.r * C64::new(t, 0.0))) * &c.res;
        }
        linalg::certified_real(&acc, REAL_TOL, "kernel")
    }

    /// `X_ij = ∫₀^∞ e^{uR_i} Res_i Σ_L Res_jᴴ e^{uR_jᴴ} du`, from
    /// `R_i X + X R_jᴴ = −Res_i Σ_L Res_jᴴ`.
    pub fn stationary_cross_covariances(&self) -> Result<Vec<Vec<CMat>>> {
        self.require_stationary()?;
        let sigma = complexify(&self.sigma_l);
        let mut out = Vec::with_capacity(self.p());
        for ci in &self.components {
            let mut row = Vec::with_capacity(self.p());
            for cj in &self.components {
                let rhs = -(&ci.res * &sigma * cj.res.adjoint());
                row.push(linalg::sylvester(&ci.r, &cj.r.adjoint(), &rhs)?);
            }
            out.push(row);
        }
        Ok(out)
    }

    /// `γ_Y(ℓ) = Σ_i e^{ℓR_i} Σ_i` with `Σ_i = Σ_j X_ij`.
    pub fn stationary_acvf(&self, lags: &[f64]) -> Result<Vec<RMat>> {
        let cross = self.stationary_cross_covariances()?;
        let d = self.d();
        let sums: Vec<CMat> = cross
            .iter()
            .map(|row| row.iter().fold(CMat::zeros(d, d), |acc, x| acc + x))
            .collect();
        lags.iter()
            .map(|&l| {
                let mut acc = CMat::zeros(d, d);
                for (c, s) in self.components.iter().zip(&sums) {
                    acc += linalg::expm(&(&c.r * C64::new(l, 0.0))) * s;
                }
                linalg::certified_real(&acc, REAL_TOL, "stationary autocovariance")
            })
            .collect()
    }

    /// Stationary state covariance `Π = T [X_ij] Tᴴ`.
    pub fn stationary_state_covariance(&self) -> Result<RMat> {
        let cross = self.stationary_cross_covariances()?;
        let (p, d) = (self.p(), self.d());
        let mut blk = CMat::zeros(p * d, p * d);
        for (i, row) in cross.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                blk.view_mut((i * d, j * d), (d, d)).copy_from(x);
            }
        }
        let pi = &self.transform * blk * self.transform.adjoint();
        let pi = linalg::certified_real(&pi, REAL_TOL, "stationary state covariance")?;
        Ok((&pi + pi.transpose()) * 0.5)
    }
}
