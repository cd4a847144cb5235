#![allow(dead_code)]

use mcarma_core::linalg::{self, complexify};
use mcarma_core::{CMat, LambdaMatrix, McarmaModel, RMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rm(d: usize, vals: &[f64]) -> RMat {
    RMat::from_row_slice(d, d, vals)
}

pub fn example_model() -> McarmaModel {
    McarmaModel::from_real(
        &[rm(2, &[-11.0, 22.0, -12.0, 21.0]), rm(2, &[-42.0, 52.0, -36.0, 44.0])],
        &[RMat::identity(2, 2)],
        RMat::identity(2, 2),
    )
    .unwrap()
}

/// The two solvent pairs `(R₁, R₂)` and `(R₃, R₄)` of the 2×2 example.
pub fn example_solvents() -> [Vec<CMat>; 2] {
    [
        vec![complexify(&rm(2, &[0.0, -1.0, 2.0, -3.0])), complexify(&rm(2, &[-3.0, -2.0, 0.0, -4.0]))],
        vec![complexify(&rm(2, &[-7.0, 6.0, -3.0, 2.0])), complexify(&rm(2, &[-3.0, 0.5, 0.0, -2.0]))],
    ]
}

pub fn example_residues() -> [Vec<RMat>; 2] {
    [
        vec![rm(2, &[1.0, -1.0, -2.0, 3.0]), rm(2, &[-1.0, 1.0, 2.0, -3.0])],
        vec![rm(2, &[8.0, -11.0, 6.0, -8.0]), rm(2, &[-8.0, 11.0, -6.0, 8.0])],
    ]
}

pub fn scalar_model(tail: &[f64], b: &[f64], sigma2: f64) -> McarmaModel {
    McarmaModel::from_real(
        &tail.iter().map(|&x| RMat::from_element(1, 1, x)).collect::<Vec<_>>(),
        &b.iter().map(|&x| RMat::from_element(1, 1, x)).collect::<Vec<_>>(),
        RMat::from_element(1, 1, sigma2),
    )
    .unwrap()
}

pub struct RandomModel {
    pub model: McarmaModel,
    /// Latent roots used to build `A(λ)`.
    pub roots: Vec<C64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RMat {
    RMat::from_fn(r, c, |_, _| normal(rng))
}

/// `pd` stable roots, closed under conjugation, pairwise at least `sep`
/// apart. `pairs_allowed` bounds the number of complex pairs.
fn random_roots(rng: &mut ChaCha8Rng, count: usize, pairs_allowed: usize, sep: f64) -> Vec<C64> {
    loop {
        let mut roots = Vec::with_capacity(count);
        let mut pairs = 0;
        while roots.len() < count {
            let re = -rng.random_range(0.2..3.0);
            if roots.len() + 2 <= count && pairs < pairs_allowed && rng.random_bool(0.4) {
                let im = rng.random_range(0.3..2.0);
                roots.push(C64::new(re, im));
                roots.push(C64::new(re, -im));
                pairs += 1;
            } else {
                roots.push(C64::new(re, 0.0));
            }
        }
        let ok = (0..count).all(|i| ((i + 1)..count).all(|j| (roots[i] - roots[j]).norm() >= sep));
        if ok {
            return roots;
        }
    }
}

/// Real `d×d` matrix with the given conjugate-closed spectrum.
fn matrix_with_spectrum(rng: &mut ChaCha8Rng, spec: &[C64]) -> RMat {
    let d = spec.len();
    let mut blk = RMat::zeros(d, d);
    let mut i = 0;
    while i < d {
        let z = spec[i];
        if z.im != 0.0 {
            blk[(i, i)] = z.re;
            blk[(i + 1, i + 1)] = z.re;
            blk[(i, i + 1)] = z.im;
            blk[(i + 1, i)] = -z.im;
            i += 2;
        } else {
            blk[(i, i)] = z.re;
            i += 1;
        }
    }
    loop {
        let q = random_normal_matrix(rng, d, d);
        let cq = linalg::cond2(&complexify(&q));
        if cq < 30.0 {
            let qi = q.clone().try_inverse().unwrap();
            return &q * blk * qi;
        }
    }
}

/// Splits conjugate-closed roots into `p` blocks of `d` keeping pairs whole
/// where possible; returns `None` when that is impossible (`d = 1` with
/// complex roots).
fn split_blocks(roots: &[C64], d: usize, p: usize) -> Option<Vec<Vec<C64>>> {
    let mut units: Vec<Vec<C64>> = Vec::new();
    let mut i = 0;
    while i < roots.len() {
        if roots[i].im != 0.0 {
            units.push(vec![roots[i], roots[i + 1]]);
            i += 2;
        } else {
            units.push(vec![roots[i]]);
            i += 1;
        }
    }
    units.sort_by_key(|u| std::cmp::Reverse(u.len()));
    let mut blocks: Vec<Vec<C64>> = vec![Vec::new(); p];
    for u in units {
        let slot = blocks.iter_mut().find(|b| b.len() + u.len() <= d)?;
        slot.extend(u);
    }
    Some(blocks)
}

/// Random stable model with `A(λ) = (λI − M_p) ⋯ (λI − M₁)` built from
/// real factors of prescribed spectra, random `B` of degree `q < p`, and
/// `Σ_L = GGᵀ + 0.1 I`.
pub fn random_model(rng: &mut ChaCha8Rng, d: usize, p: usize) -> RandomModel {
    let roots = if d == 1 {
        random_roots(rng, p, p / 2, 0.1)
    } else {
        loop {
            let r = random_roots(rng, p * d, p * d / 2, 0.1);
            if split_blocks(&r, d, p).is_some() {
                break r;
            }
        }
    };
    let a = if d == 1 {
        // scalar polynomial from its roots
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= c * r;
            }
            coeffs = next;
        }
        LambdaMatrix::new(coeffs.iter().map(|c| CMat::from_element(1, 1, C64::new(c.re, 0.0))).collect()).unwrap()
    } else {
        let blocks = split_blocks(&roots, d, p).unwrap();
        let mut acc = LambdaMatrix::new(vec![linalg::cidentity(d)]).unwrap();
        for b in blocks {
            let m = complexify(&matrix_with_spectrum(rng, &b));
            let lin = LambdaMatrix::new(vec![linalg::cidentity(d), -m]).unwrap();
            acc = lin.mul(&acc).unwrap();
        }
        LambdaMatrix::new(acc.coeffs().iter().map(|c| c.map(|z| C64::new(z.re, 0.0))).collect()).unwrap()
    };
    let q = rng.random_range(0..p);
    let m = d;
    let b: Vec<RMat> = (0..=q).map(|_| random_normal_matrix(rng, d, m)).collect();
    let g = random_normal_matrix(rng, m, m);
    let sigma = &g * g.transpose() + RMat::identity(m, m) * 0.1;
    let model = McarmaModel::new(a, LambdaMatrix::from_real(&b).unwrap(), sigma).unwrap();
    RandomModel { model, roots }
}

/// 200 random stable models with `d, p ∈ {1, 2, 3}`.
pub fn corpus() -> Vec<RandomModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..200)
        .map(|i| {
            let d = 1 + i % 3;
            let p = 1 + (i / 3) % 3;
            random_model(&mut rng, d, p)
        })
        .collect()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> RMat, a: f64, b: f64) -> (RMat, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = &fc * WGK[7];
    let mut gauss = &fc * WG[3];
    for j in 0..7 {
        let x = hw * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += &s * WGK[j];
        if j % 2 == 1 {
            gauss += &s * WG[j / 2];
        }
    }
    let kron = kron * hw;
    let gauss = gauss * hw;
    let err = (&kron - gauss).norm();
    (kron, err)
}

/// Adaptive Gauss–Kronrod (7, 15) quadrature of a matrix-valued integrand
/// to absolute Frobenius tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> RMat, a: f64, b: f64, tol: f64) -> RMat {
    fn rec(f: &dyn Fn(f64) -> RMat, a: f64, b: f64, tol: f64, depth: usize) -> RMat {
        let (val, err) = gk15(f, a, b);
        // below ~100 ulp of the value the error estimate is roundoff
        if err <= tol || err <= 1e2 * f64::EPSILON * val.norm() || depth >= 30 {
            return val;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// `g(u) = C* e^{A*u} B*` from the companion realisation.
pub fn impulse_response(model: &McarmaModel) -> impl Fn(f64) -> RMat {
    let ss = mcarma_core::build_state_space(model).unwrap();
    move |u: f64| ss.kernel(u)
}

/// `γ_U(l) = ∫₀^{(p−l)h} κ(u + lh) Σ_L κ(u)ᵀ du` with
/// `κ(u) = Σ_{j ≤ u/h} Φ̃_j g(u − jh)`, `Φ̃₀ = I`, `Φ̃_j = −Φ_j`: the noise
/// written as a stochastic integral over one window of length `ph`.
pub fn noise_acvf_quadrature(model: &McarmaModel, phi: &[RMat], h: f64, tol: f64) -> Vec<RMat> {
    let g = impulse_response(model);
    let p = phi.len();
    let d = model.d();
    let kappa = |u: f64| -> RMat {
        let mut acc = RMat::zeros(d, model.m());
        for j in 0..=p {
            let s = u - j as f64 * h;
            if s < 0.0 {
                break;
            }
            let coef = if j == 0 { RMat::identity(d, d) } else { -&phi[j - 1] };
            acc += coef * g(s);
        }
        acc
    };
    let sigma = model.sigma_l().clone();
    (0..p)
        .map(|l| {
            let integrand = |u: f64| kappa(u + l as f64 * h) * &sigma * kappa(u).transpose();
            let mut acc = RMat::zeros(d, d);
            // κ has kinks at multiples of h
            for piece in 0..(p - l) {
                let a = piece as f64 * h;
                acc += integrate(&integrand, a, a + h, tol);
            }
            acc
        })
        .collect()
}

/// Size of `κ(u)` beyond the window, which vanishes for an exact AR part.
pub fn noise_kernel_tail(model: &McarmaModel, phi: &[RMat], h: f64) -> f64 {
    let g = impulse_response(model);
    let p = phi.len();
    (0..20)
        .map(|i| {
            let u = p as f64 * h + 0.1 * h * i as f64;
            let mut acc = g(u);
            for (j, ph) in phi.iter().enumerate() {
                acc -= ph * g(u - (j + 1) as f64 * h);
            }
            acc.norm()
        })
        .fold(0.0, f64::max)
}
