//! Exact simulation of the OU components on the grid `{nh}` and the sample
//! statistics used to check the analytic second-order structure.
//!
//! Each path owns a ChaCha8 generator seeded with `seed` on stream
//! `stream`; path `i` of [`simulate_paths`] uses stream `i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, complexify, CMat, CVec, RMat, C64};
use crate::mcarma::OuDecomposition;
use crate::sampling::innovation_covariances;

type RVec = nalgebra::DVector<f64>;

/// Eigenvalue clipping threshold for covariance factors.
pub const PSD_CLIP: f64 = 1e-12;
/// Imaginary residue tolerated in a simulated observation.
pub const PATH_IMAG_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum DriverSpec {
    /// Brownian motion with covariance `Σ_L` per unit time.
    Brownian,
    /// Compound Poisson process with jump intensity `rate` and zero-mean
    /// Gaussian jumps of covariance `jump_cov`.
    CompoundPoisson { rate: f64, jump_cov: RMat },
}

impl DriverSpec {
    /// Checks the driver against the model's `Σ_L = Var L(1)`.
    pub fn validate(&self, sigma_l: &RMat) -> Result<()> {
        match self {
            DriverSpec::Brownian => Ok(()),
            DriverSpec::CompoundPoisson { rate, jump_cov } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidDriver(format!("jump rate {rate} must be positive")));
                }
                if jump_cov.shape() != sigma_l.shape() {
                    return Err(Error::InvalidDriver("jump covariance has the wrong shape".into()));
                }
                let scale = sigma_l.amax().max(1.0);
                let gap = (jump_cov * *rate - sigma_l).amax();
                if gap > 1e-12 * scale {
                    return Err(Error::InvalidDriver(format!("rate · jump_cov differs from sigma_L by {gap:.3e}")));
                }
                if linalg::min_symmetric_eigenvalue(jump_cov) < -PSD_CLIP * scale {
                    return Err(Error::InvalidDriver("jump covariance is not positive semidefinite".into()));
                }
                Ok(())
            }
        }
    }
}

/// Initial state of a simulated path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    /// The `Y_k(0)` stored in the decomposition.
    Initial,
    /// `X(0) ~ N(0, Π)` with `Π` the stationary state covariance. Exact for
    /// the Brownian driver, a Gaussian approximation otherwise.
    Stationary,
}

#[derive(Clone, Debug)]
pub struct PathGrid {
    pub h: f64,
    /// Row `n − 1` holds `Y(nh)`, `n = 1, …, N`.
    pub y: RMat,
}

struct JumpComponent {
    vectors: CMat,
    roots: Vec<C64>,
    /// `P⁻¹ Res_k`; `None` when `R_k` is too close to defective and
    /// `e^{R_k s}` is formed directly.
    weights: Option<CMat>,
    r: CMat,
    res: CMat,
}

enum Innovations {
    /// `N_n = M z` with `z ~ N(0, I_{pd})` and `M = T⁻¹L`, `LLᵀ` the real
    /// one-step state covariance.
    Gaussian(CMat),
    Jumps {
        rate: f64,
        jump_factor: RMat,
        components: Vec<JumpComponent>,
    },
}

/// Precomputed one-step propagators and innovation law.
pub struct Simulator<'a> {
    dec: &'a OuDecomposition,
    h: f64,
    step: Vec<CMat>,
    innovations: Innovations,
    start_factor: Option<RMat>,
}

impl<'a> Simulator<'a> {
    pub fn new(dec: &'a OuDecomposition, driver: &DriverSpec, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidModel(format!("sampling step {h} must be positive")));
        }
        driver.validate(&dec.sigma_l)?;
        let step = dec
            .components
            .iter()
            .map(|c| linalg::expm(&(&c.r * C64::new(h, 0.0))))
            .collect();
        let innovations = match driver {
            DriverSpec::Brownian => {
                let (p, d) = (dec.p(), dec.d());
                let cov = innovation_covariances(dec, h)?;
                let mut blk = CMat::zeros(p * d, p * d);
                for (i, row) in cov.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        blk.view_mut((i * d, j * d), (d, d)).copy_from(x);
                    }
                }
                let q = &dec.transform * blk * dec.transform.adjoint();
                let q = linalg::certified_real(&q, 1e-9, "one-step state covariance")?;
                let l = linalg::psd_factor(&q, PSD_CLIP)?;
                Innovations::Gaussian(&dec.transform_inv * complexify(&l))
            }
            DriverSpec::CompoundPoisson { rate, jump_cov } => {
                let jump_factor = linalg::psd_factor(jump_cov, PSD_CLIP)?;
                let components = dec
                    .components
                    .iter()
                    .map(|c| {
                        let (roots, vectors) = linalg::eig(&c.r)?;
                        let weights = if linalg::cond2(&vectors) <= 1e8 {
                            linalg::inverse(&vectors).map(|inv| inv * &c.res)
                        } else {
                            None
                        };
                        Ok(JumpComponent {
                            vectors,
                            roots,
                            weights,
                            r: c.r.clone(),
                            res: c.res.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Innovations::Jumps {
                    rate: *rate,
                    jump_factor,
                    components,
                }
            }
        };
        Ok(Self {
            dec,
            h,
            step,
            innovations,
            start_factor: None,
        })
    }

    fn stationary_factor(&mut self) -> Result<&RMat> {
        if self.start_factor.is_none() {
            self.dec.require_stationary()?;
            let pi = self.dec.state_space.stationary_covariance(&self.dec.sigma_l)?;
            self.start_factor = Some(linalg::psd_factor(&pi, PSD_CLIP)?);
        }
        Ok(self.start_factor.as_ref().unwrap())
    }

    /// Prepares the stationary start once so that [`Simulator::run`] can be
    /// shared across threads.
    pub fn prepare(&mut self, start: Start) -> Result<()> {
        if start == Start::Stationary {
            self.stationary_factor()?;
        }
        Ok(())
    }

    pub fn run(&self, steps: usize, start: Start, seed: u64, stream: u64) -> Result<PathGrid> {
        let (p, d) = (self.dec.p(), self.dec.d());
        let n = p * d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);

        let mut y = match start {
            Start::Initial => CVec::from_iterator(n, self.dec.components.iter().flat_map(|c| c.y0.iter().copied())),
            Start::Stationary => {
                let factor = match &self.start_factor {
                    Some(f) => f,
                    None => {
                        self.dec.require_stationary()?;
                        return Err(Error::Identity("stationary start not prepared".into()));
                    }
                };
                let x0 = factor * normals(&mut rng, n);
                &self.dec.transform_inv * to_complex(&x0)
            }
        };

        let mut out = RMat::zeros(steps, d);
        for row in 0..steps {
            let noise = self.draw(&mut rng);
            for k in 0..p {
                let next = &self.step[k] * y.rows(k * d, d) + noise.rows(k * d, d);
                y.rows_mut(k * d, d).copy_from(&next);
            }
            for i in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..p {
                    acc += y[k * d + i];
                }
                if acc.im.abs() > PATH_IMAG_TOL * acc.re.abs().max(1.0) {
                    return Err(Error::ImaginaryLeak {
                        what: "simulated observation",
                        magnitude: acc.im.abs(),
                    });
                }
                out[(row, i)] = acc.re;
            }
        }
        Ok(PathGrid { h: self.h, y: out })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> CVec {
        let (p, d) = (self.dec.p(), self.dec.d());
        match &self.innovations {
            Innovations::Gaussian(m) => m * to_complex(&normals(rng, p * d)),
            Innovations::Jumps {
                rate,
                jump_factor,
                components,
            } => {
                let mut acc = CVec::zeros(p * d);
                let mean = rate * self.h;
                let count = Poisson::new(mean).map(|dist| dist.sample(rng) as usize).unwrap_or(0);
                for _ in 0..count {
                    // time from the jump to the end of the step
                    let s: f64 = rng.random::<f64>() * self.h;
                    let jump = to_complex(&(jump_factor * normals(rng, jump_factor.ncols())));
                    for (k, c) in components.iter().enumerate() {
                        let contrib = match &c.weights {
                            Some(w) => {
                                let mut coef: CVec = w * &jump;
                                for (i, lam) in c.roots.iter().enumerate() {
                                    coef[i] *= (lam * s).exp();
                                }
                                &c.vectors * coef
                            }
                            None => linalg::expm(&(&c.r * C64::new(s, 0.0))) * &c.res * &jump,
                        };
                        let mut blk = acc.rows_mut(k * d, d);
                        blk += contrib;
                    }
                }
                acc
            }
        }
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> RVec {
    RVec::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn to_complex(v: &RVec) -> CVec {
    v.map(|x| C64::new(x, 0.0))
}

/// One path of `steps` observations.
pub fn simulate(dec: &OuDecomposition, driver: &DriverSpec, h: f64, steps: usize, start: Start, seed: u64) -> Result<PathGrid> {
    let mut sim = Simulator::new(dec, driver, h)?;
    sim.prepare(start)?;
    sim.run(steps, start, seed, 0)
}

/// Independent paths on separate threads; path `i` uses stream `i`.
pub fn simulate_paths(
    dec: &OuDecomposition,
    driver: &DriverSpec,
    h: f64,
    steps: usize,
    start: Start,
    seed: u64,
    paths: usize,
) -> Result<Vec<PathGrid>> {
    let mut sim = Simulator::new(dec, driver, h)?;
    sim.prepare(start)?;
    let sim = &sim;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(paths.max(1));
    // worker w runs paths w, w + workers, …; results are put back in path order
    let mut out: Vec<Option<Result<PathGrid>>> = (0..paths).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..paths)
                        .step_by(workers)
                        .map(|i| (i, sim.run(steps, start, seed, i as u64)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (i, path) in handle.join().expect("simulation thread panicked") {
                out[i] = Some(path);
            }
        }
    });
    out.into_iter().map(|p| p.expect("every path is assigned to a worker")).collect()
}

fn column_means(y: &RMat) -> Vec<f64> {
    let n = y.nrows() as f64;
    (0..y.ncols()).map(|j| y.column(j).sum() / n).collect()
}

/// Biased sample autocovariance `γ̂(l) = (1/N) Σ (Y_{n+l} − Ȳ)(Y_n − Ȳ)ᵀ`.
pub fn empirical_acvf(y: &RMat, max_lag: usize) -> Result<Vec<RMat>> {
    let (n, d) = y.shape();
    if n <= 10 * max_lag || n == 0 {
        return Err(Error::TooShort { len: n, max_lag });
    }
    let mean = column_means(y);
    let centred = RMat::from_fn(n, d, |r, c| y[(r, c)] - mean[c]);
    Ok((0..=max_lag)
        .map(|l| {
            let lead = centred.rows(l, n - l);
            let lag = centred.rows(0, n - l);
            (lead.transpose() * lag) / n as f64
        })
        .collect())
}

/// `U_n = Y_n − Σ_j Φ_j Y_{n−j}` for `n = p, …, N−1` (0-based rows).
pub fn extract_noise(y: &RMat, phi: &[RMat]) -> Result<RMat> {
    let (n, d) = y.shape();
    let p = phi.len();
    if n <= p {
        return Err(Error::TooShort { len: n, max_lag: p });
    }
    let mut u = RMat::zeros(n - p, d);
    for row in p..n {
        let mut acc = y.row(row).transpose();
        for (j, ph) in phi.iter().enumerate() {
            acc -= ph * y.row(row - j - 1).transpose();
        }
        u.row_mut(row - p).copy_from(&acc.transpose());
    }
    Ok(u)
}

/// Half-width `z · sqrt(Σ_{|k|<p} γ_ii(k) γ_jj(k) / N)` of the CLT band for a
/// sample cross-covariance at a lag where the true value is zero, given the
/// true autocovariances `γ(0), …, γ(p−1)` of a `(p−1)`-dependent series.
pub fn clt_band_zero(gamma: &[RMat], n: usize, z: f64) -> RMat {
    let d = gamma[0].nrows();
    RMat::from_fn(d, d, |i, j| {
        let mut var = gamma[0][(i, i)] * gamma[0][(j, j)];
        for g in &gamma[1..] {
            var += 2.0 * g[(i, i)] * g[(j, j)];
        }
        z * (var / n as f64).sqrt()
    })
}

/// Moving-block bootstrap standard errors of `γ̂(lag)` entries.
pub fn block_bootstrap_se(y: &RMat, lag: usize, block: usize, resamples: usize, seed: u64) -> Result<RMat> {
    let (n, d) = y.shape();
    if n <= 10 * lag || block == 0 || n - lag < 2 * block {
        return Err(Error::TooShort { len: n, max_lag: lag });
    }
    let mean = column_means(y);
    let m = n - lag;
    let blocks = m / block;
    let starts = m - block + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<usize> = (0..resamples * blocks).map(|_| rng.random_range(0..starts)).collect();
    let mut se = RMat::zeros(d, d);
    let mut prefix = vec![0.0; m + 1];
    for i in 0..d {
        for j in 0..d {
            for t in 0..m {
                let z = (y[(t + lag, i)] - mean[i]) * (y[(t, j)] - mean[j]);
                prefix[t + 1] = prefix[t] + z;
            }
            let sums: Vec<f64> = (0..starts).map(|s| prefix[s + block] - prefix[s]).collect();
            let (mut s1, mut s2) = (0.0, 0.0);
            for r in 0..resamples {
                let total: f64 = draws[r * blocks..(r + 1) * blocks].iter().map(|&s| sums[s]).sum();
                let est = total / (blocks * block) as f64 * m as f64 / n as f64;
                s1 += est;
                s2 += est * est;
            }
            let k = resamples as f64;
            se[(i, j)] = ((s2 - s1 * s1 / k) / (k - 1.0)).max(0.0).sqrt();
        }
    }
    Ok(se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpoly::Grouping;
    use crate::mcarma::{analyze, McarmaModel};

    fn ou(a: f64, sigma: f64) -> OuDecomposition {
        let model = McarmaModel::from_real(
            &[RMat::from_element(1, 1, a)],
            &[RMat::from_element(1, 1, 1.0)],
            RMat::from_element(1, 1, sigma * sigma),
        )
        .unwrap();
        analyze(&model, &Grouping::Auto, None).unwrap()
    }

    #[test]
    fn zero_driver_gives_zero_path() {
        let dec = ou(1.0, 0.0);
        let path = simulate(&dec, &DriverSpec::Brownian, 0.1, 100, Start::Initial, 3).unwrap();
        assert!(path.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_path() {
        let dec = ou(1.0, 1.0);
        let a = simulate(&dec, &DriverSpec::Brownian, 0.1, 500, Start::Stationary, 11).unwrap();
        let b = simulate(&dec, &DriverSpec::Brownian, 0.1, 500, Start::Stationary, 11).unwrap();
        let c = simulate(&dec, &DriverSpec::Brownian, 0.1, 500, Start::Stationary, 12).unwrap();
        assert_eq!(a.y, b.y);
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn threaded_paths_match_streams() {
        let dec = ou(1.0, 1.0);
        let paths = simulate_paths(&dec, &DriverSpec::Brownian, 0.1, 200, Start::Initial, 5, 3).unwrap();
        let mut sim = Simulator::new(&dec, &DriverSpec::Brownian, 0.1).unwrap();
        sim.prepare(Start::Initial).unwrap();
        for (i, p) in paths.iter().enumerate() {
            assert_eq!(p.y, sim.run(200, Start::Initial, 5, i as u64).unwrap().y);
        }
        assert_ne!(paths[0].y, paths[1].y);
    }

    #[test]
    fn constant_path_has_zero_acvf() {
        let y = RMat::from_element(100, 2, 3.5);
        for g in empirical_acvf(&y, 3).unwrap() {
            assert!(g.amax() < 1e-14);
        }
        assert!(matches!(empirical_acvf(&y, 10), Err(Error::TooShort { .. })));
    }

    #[test]
    fn white_noise_acvf() {
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = RMat::from_fn(n, 2, |_, _| rng.sample(StandardNormal));
        let g = empirical_acvf(&y, 1).unwrap();
        let band = 4.0 / (n as f64).sqrt();
        assert!((&g[0] - RMat::identity(2, 2)).amax() < 2.0 * band);
        assert!(g[1].amax() < band);
    }

    #[test]
    fn ou_noise_extraction() {
        let (a, h) = (0.8, 0.2);
        let y = RMat::from_fn(4, 1, |r, _| r as f64 + 1.0);
        let phi = [RMat::from_element(1, 1, (-a * h as f64).exp())];
        let u = extract_noise(&y, &phi).unwrap();
        assert_eq!(u.nrows(), 3);
        assert!((u[(0, 0)] - (2.0 - phi[0][(0, 0)])).abs() < 1e-15);
    }

    #[test]
    fn clt_band_formula() {
        let g = [RMat::from_element(1, 1, 2.0), RMat::from_element(1, 1, 0.5)];
        let band = clt_band_zero(&g, 100, 1.0);
        assert!((band[(0, 0)] - (4.5f64 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn compound_poisson_driver_validation() {
        let sigma = RMat::identity(1, 1);
        let ok = DriverSpec::CompoundPoisson {
            rate: 4.0,
            jump_cov: RMat::from_element(1, 1, 0.25),
        };
        assert!(ok.validate(&sigma).is_ok());
        let bad = DriverSpec::CompoundPoisson {
            rate: 4.0,
            jump_cov: RMat::from_element(1, 1, 1.0),
        };
        assert!(matches!(bad.validate(&sigma), Err(Error::InvalidDriver(_))));
    }

    #[test]
    fn compound_poisson_variance() {
        let (a, h) = (1.0, 0.5);
        let dec = ou(a, 1.0);
        let driver = DriverSpec::CompoundPoisson {
            rate: 5.0,
            jump_cov: RMat::from_element(1, 1, 0.2),
        };
        let path = simulate(&dec, &driver, h, 100_000, Start::Stationary, 9).unwrap();
        let g = empirical_acvf(&path.y, 1).unwrap();
        let want0 = 0.5;
        assert!((g[0][(0, 0)] - want0).abs() < 0.02);
        assert!((g[1][(0, 0)] - want0 * (-a * h as f64).exp()).abs() < 0.02);
    }

    #[test]
    fn bootstrap_se_scales_like_clt_for_white_noise() {
        let n = 40_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = RMat::from_fn(n, 1, |_, _| rng.sample(StandardNormal));
        let se = block_bootstrap_se(&y, 1, 50, 400, 3).unwrap();
        let clt = 1.0 / (n as f64).sqrt();
        assert!(se[(0, 0)] > 0.7 * clt && se[(0, 0)] < 1.3 * clt);
    }
}
