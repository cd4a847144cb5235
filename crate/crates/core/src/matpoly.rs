//! λ-matrices, latent roots and right solvents.
//!
//! A λ-matrix of degree `p` and order `(d, m)` is
//! `A(λ) = A₀λᵖ + A₁λᵖ⁻¹ + … + A_p` with `d×m` complex blocks. For a monic
//! square λ-matrix a *right solvent* is a `d×d` matrix `R` with
//! `A₀Rᵖ + A₁Rᵖ⁻¹ + … + A_p = 0`. When the `pd` latent roots are distinct,
//! grouping them into `p` blocks of `d` and conjugating the diagonal root
//! matrix by the stacked latent vectors yields a complete set of regular
//! right solvents, certified by a nonsingular block Vandermonde matrix.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{self, cidentity, complexify, CMat, CVec, RMat, C64};

/// Tolerance on `‖A₀ − I‖` for the monic flag.
pub const MONIC_TOL: f64 = 1e-14;
/// Relative tolerance on `‖A_R(R)‖_F / max(1, ‖A_p‖_F)`.
pub const SOLVENT_TOL: f64 = 1e-9;
/// Eigenvalue separation and multiset matching tolerance (the match is
/// scaled by the companion norm).
pub const EIG_TOL: f64 = 1e-8;
/// Latent roots closer than `DISTINCT_TOL · (1 + max|λ|)` count as repeated.
pub const DISTINCT_TOL: f64 = 1e-8;
/// Eigenvector-matrix condition above which clusters within `CLUSTER_TOL`
/// are reported as repeated roots.
pub const CLUSTER_COND: f64 = 1e6;
pub const CLUSTER_TOL: f64 = 1e-5;
/// Eigenvector-matrix condition above which the companion is defective.
pub const DEFECTIVE_COND: f64 = 1e12;
/// Largest admissible condition number of a latent-vector block `P_k`.
/// Greedy grouping whose worst block is worse than this triggers the
/// exhaustive search (solvent residuals grow roughly like ε·cond(P_k)).
pub const GROUP_SEARCH_COND: f64 = 1e4;
/// The sorted-order default grouping is kept only while its blocks are at
/// least this well conditioned.
pub const CONTIGUOUS_COND: f64 = 1e2;
/// A real solvent set worse than this gives way to a complex one that is at
/// least `SPLIT_GAIN` times better conditioned.
pub const REAL_GROUP_COND: f64 = 1e3;
pub const SPLIT_GAIN: f64 = 10.0;
const MAX_REFINE: usize = 4;
pub const GROUP_COND: f64 = 1e10;
/// Largest admissible condition number of a block Vandermonde matrix.
pub const VANDERMONDE_COND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaMatrix {
    coeffs: Vec<CMat>,
}

impl LambdaMatrix {
    /// Builds `A(λ)` from `[A₀, …, A_p]`.
    pub fn new(coeffs: Vec<CMat>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::DimensionMismatch("λ-matrix needs at least one coefficient".into()))?;
        let shape = first.shape();
        if let Some((k, bad)) = coeffs.iter().enumerate().find(|(_, c)| c.shape() != shape) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient {k} is {}x{}, expected {}x{}",
                bad.nrows(),
                bad.ncols(),
                shape.0,
                shape.1
            )));
        }
        Ok(Self { coeffs })
    }

    pub fn from_real(coeffs: &[RMat]) -> Result<Self> {
        Self::new(coeffs.iter().map(complexify).collect())
    }

    /// `Iλᵖ + A₁λᵖ⁻¹ + … + A_p` from the trailing coefficients.
    pub fn monic(tail: Vec<CMat>) -> Result<Self> {
        let d = tail.first().map(|c| c.nrows()).unwrap_or(0);
        if d == 0 {
            return Err(Error::DimensionMismatch("monic λ-matrix needs a size".into()));
        }
        let mut coeffs = Vec::with_capacity(tail.len() + 1);
        coeffs.push(cidentity(d));
        coeffs.extend(tail);
        Self::new(coeffs)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    /// `A_k` (coefficient of `λ^{p−k}`).
    pub fn coeff(&self, k: usize) -> &CMat {
        &self.coeffs[k]
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_monic(&self) -> bool {
        self.is_square() && linalg::max_abs(&(&self.coeffs[0] - cidentity(self.rows()))) <= MONIC_TOL
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|c| linalg::max_imag(c) == 0.0)
    }

    fn require_monic(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        if !self.is_monic() {
            return Err(Error::NotMonic);
        }
        Ok(())
    }

    /// Horner evaluation of `Σ A_k λ^{p−k}`.
    pub fn eval(&self, lambda: C64) -> CMat {
        let mut acc = self.coeffs[0].clone();
        for c in &self.coeffs[1..] {
            acc = acc * lambda + c;
        }
        acc
    }

    /// Right substitution `A₀Zᵖ + A₁Zᵖ⁻¹ + … + A_p`.
    pub fn eval_right(&self, z: &CMat) -> Result<CMat> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        if z.nrows() != self.rows() || z.ncols() != self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "argument is {}x{}, expected {}x{}",
                z.nrows(),
                z.ncols(),
                self.rows(),
                self.rows()
            )));
        }
        let mut acc = self.coeffs[0].clone();
        for c in &self.coeffs[1..] {
            acc = acc * z + c;
        }
        Ok(acc)
    }

    /// Block companion matrix with identities on the block superdiagonal and
    /// `[−A_p, …, −A₁]` as the last block row.
    pub fn companion(&self) -> Result<CMat> {
        self.require_monic()?;
        let (d, p) = (self.rows(), self.degree());
        let mut m = CMat::zeros(p * d, p * d);
        for i in 0..p.saturating_sub(1) {
            m.view_mut((i * d, (i + 1) * d), (d, d)).copy_from(&cidentity(d));
        }
        for j in 0..p {
            m.view_mut(((p - 1) * d, j * d), (d, d))
                .copy_from(&(-&self.coeffs[p - j]));
        }
        Ok(m)
    }

    /// Polynomial product `self(λ) · other(λ)`.
    pub fn mul(&self, other: &LambdaMatrix) -> Result<LambdaMatrix> {
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch("λ-matrix product shapes".into()));
        }
        let deg = self.degree() + other.degree();
        let mut out = vec![CMat::zeros(self.rows(), other.cols()); deg + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        LambdaMatrix::new(out)
    }

    /// Largest coefficientwise `‖A_k − B_k‖_F / max(1, ‖B_k‖_F)`.
    pub fn max_rel_diff(&self, other: &LambdaMatrix) -> f64 {
        if self.degree() != other.degree() || self.rows() != other.rows() || self.cols() != other.cols() {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| linalg::rel_diff(a, b))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct LatentPair {
    pub root: C64,
    /// Unit 2-norm right latent vector, phase-normalised so its largest
    /// entry is real and positive.
    pub vector: CVec,
}

fn normalise_phase(v: &mut CVec) {
    let nrm = v.norm();
    if nrm == 0.0 {
        return;
    }
    let (mut best, mut best_abs) = (0, -1.0);
    for (i, z) in v.iter().enumerate() {
        // strictly larger by a margin so near-ties resolve to the lowest index
        if z.norm() > best_abs * (1.0 + 1e-12) {
            best = i;
            best_abs = z.norm();
        }
    }
    let phase = v[best] / v[best].norm();
    let rot = phase.conj() / nrm;
    v.apply(|z| *z *= rot);
}

/// Orders by real part descending, then imaginary part descending.
pub fn root_order(a: &C64, b: &C64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

fn check_distinct(roots: &[C64], tol: f64) -> Result<()> {
    let scale = 1.0 + roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            if (roots[i] - roots[j]).norm() < tol * scale {
                return Err(Error::DuplicateLatentRoot {
                    first: roots[i],
                    second: roots[j],
                });
            }
        }
    }
    Ok(())
}

/// Latent roots and right latent vectors of a monic λ-matrix from the
/// eigendecomposition of its block companion matrix.
///
/// For real `A` the roots are made exactly conjugate-symmetric and the
/// vector of `λ̄` is the conjugate of the vector of `λ`.
pub fn latent_roots(a: &LambdaMatrix) -> Result<Vec<LatentPair>> {
    let comp = a.companion()?;
    let d = a.rows();
    let (mut vals, vecs) = linalg::eig(&comp)?;
    check_distinct(&vals, DISTINCT_TOL)?;
    let cond = linalg::cond2(&vecs);
    if cond > CLUSTER_COND {
        // a Jordan block of size k splits its eigenvalue by about ε^(1/k), so
        // nearly dependent eigenvectors together with a tight cluster mean a
        // repeated root
        check_distinct(&vals, CLUSTER_TOL)?;
    }
    if cond > DEFECTIVE_COND {
        return Err(Error::DefectiveCompanion { cond });
    }
    let mut lead: Vec<CVec> = (0..vals.len())
        .map(|k| {
            let mut v: CVec = vecs.view((0, k), (d, 1)).column(0).into_owned();
            normalise_phase(&mut v);
            v
        })
        .collect();

    if a.is_real() {
        let scale = 1.0 + vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let real_tol = 1e-10 * scale;
        let mut paired = vec![false; vals.len()];
        for i in 0..vals.len() {
            if paired[i] {
                continue;
            }
            if vals[i].im.abs() <= real_tol {
                vals[i].im = 0.0;
                let mut v = lead[i].map(|z| C64::new(z.re, 0.0));
                normalise_phase(&mut v);
                lead[i] = v;
                paired[i] = true;
                continue;
            }
            let target = vals[i].conj();
            let partner = (0..vals.len())
                .filter(|&j| j != i && !paired[j])
                .min_by(|&x, &y| (vals[x] - target).norm().total_cmp(&(vals[y] - target).norm()));
            if let Some(j) = partner {
                if (vals[j] - target).norm() <= 1e-6 * scale {
                    let (pos, neg) = if vals[i].im > 0.0 { (i, j) } else { (j, i) };
                    let re = 0.5 * (vals[i].re + vals[j].re);
                    let im = 0.5 * (vals[pos].im - vals[neg].im);
                    vals[pos] = C64::new(re, im);
                    vals[neg] = C64::new(re, -im);
                    lead[neg] = lead[pos].map(|z| z.conj());
                    paired[i] = true;
                    paired[j] = true;
                }
            }
        }
    }

    let mut pairs: Vec<LatentPair> = vals
        .into_iter()
        .zip(lead)
        .map(|(root, vector)| LatentPair { root, vector })
        .collect();
    pairs.sort_by(|x, y| root_order(&x.root, &y.root));
    Ok(pairs)
}

#[derive(Clone, Debug)]
pub struct Solvent {
    pub matrix: CMat,
    pub multiplicity: usize,
    pub residual_norm: f64,
    /// Eigenvalues of `matrix`, sorted by [`root_order`].
    pub spectrum: Vec<C64>,
}

/// A certified complete set of regular right solvents.
#[derive(Clone, Debug)]
pub struct SolventSet {
    solvents: Vec<Solvent>,
    vandermonde: CMat,
    cond_v: f64,
}

/// Greedy nearest-neighbour matching of two eigenvalue multisets; returns
/// the largest matched distance.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let best = (0..b.len())
            .filter(|&j| !used[j])
            .min_by(|&i, &j| (b[i] - x).norm().total_cmp(&(b[j] - x).norm()));
        match best {
            Some(j) => {
                used[j] = true;
                worst = worst.max((b[j] - x).norm());
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

impl SolventSet {
    /// Certifies `matrices` as a complete set of regular right solvents of
    /// `a`: small residuals, pairwise disjoint spectra whose union is
    /// `σ(A)`, and a well-conditioned block Vandermonde matrix.
    pub fn certify(a: &LambdaMatrix, matrices: Vec<CMat>) -> Result<Self> {
        a.require_monic()?;
        let (d, p) = (a.rows(), a.degree());
        if matrices.len() != p {
            return Err(Error::IncompleteSet(format!(
                "{} solvents supplied for degree {p}",
                matrices.len()
            )));
        }
        let tol = SOLVENT_TOL * a.coeff(p).norm().max(1.0);
        let mut solvents = Vec::with_capacity(p);
        for (index, r) in matrices.into_iter().enumerate() {
            if r.nrows() != d || r.ncols() != d {
                return Err(Error::DimensionMismatch(format!("solvent {index} has the wrong shape")));
            }
            let residual = a.eval_right(&r)?.norm();
            if residual > tol {
                return Err(Error::SolventResidual {
                    index,
                    residual,
                    tolerance: tol,
                });
            }
            let mut spectrum = linalg::eigenvalues(&r)?;
            spectrum.sort_by(root_order);
            solvents.push(Solvent {
                matrix: r,
                multiplicity: 1,
                residual_norm: residual,
                spectrum,
            });
        }
        for i in 0..p {
            for j in (i + 1)..p {
                for x in &solvents[i].spectrum {
                    for y in &solvents[j].spectrum {
                        if (x - y).norm() <= EIG_TOL {
                            return Err(Error::IncompleteSet(format!(
                                "solvents {i} and {j} share eigenvalue {x}"
                            )));
                        }
                    }
                }
            }
        }
        let union: Vec<C64> = solvents.iter().flat_map(|s| s.spectrum.iter().copied()).collect();
        let companion = a.companion()?;
        let sigma = linalg::eigenvalues(&companion)?;
        let dist = multiset_distance(&union, &sigma);
        // eigenvalues are only backward stable, so the match is relative to ‖C‖
        if dist > EIG_TOL * companion.norm().max(1.0) {
            return Err(Error::IncompleteSet(format!(
                "union of solvent spectra misses σ(A) by {dist:.3e}"
            )));
        }
        let mats: Vec<CMat> = solvents.iter().map(|s| s.matrix.clone()).collect();
        let vandermonde = vandermonde(&mats);
        let cond_v = linalg::cond2(&vandermonde);
        if !(cond_v <= VANDERMONDE_COND) {
            return Err(Error::SingularVandermonde { cond: cond_v });
        }
        Ok(Self {
            solvents,
            vandermonde,
            cond_v,
        })
    }

    pub fn solvents(&self) -> &[Solvent] {
        &self.solvents
    }

    pub fn matrices(&self) -> Vec<CMat> {
        self.solvents.iter().map(|s| s.matrix.clone()).collect()
    }

    pub fn vandermonde(&self) -> &CMat {
        &self.vandermonde
    }

    pub fn cond_v(&self) -> f64 {
        self.cond_v
    }

    pub fn degree(&self) -> usize {
        self.solvents.len()
    }

    pub fn order(&self) -> usize {
        self.solvents[0].matrix.nrows()
    }

    pub fn spectrum(&self) -> Vec<C64> {
        let mut all: Vec<C64> = self.solvents.iter().flat_map(|s| s.spectrum.iter().copied()).collect();
        all.sort_by(root_order);
        all
    }

    pub fn max_residual(&self) -> f64 {
        self.solvents.iter().map(|s| s.residual_norm).fold(0.0, f64::max)
    }

    /// Largest imaginary entry over all solvent matrices.
    pub fn max_imag(&self) -> f64 {
        self.solvents
            .iter()
            .map(|s| linalg::max_imag(&s.matrix))
            .fold(0.0, f64::max)
    }
}

/// How latent roots are distributed over the `p` solvents.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Grouping {
    /// Consecutive blocks of the sorted roots when those are conjugate closed
    /// and well conditioned; otherwise a greedy conditioning-driven
    /// assignment that keeps conjugate pairs together, and for `pd ≤ 12` an
    /// exhaustive search if greedy still splits a pair or is ill-conditioned.
    #[default]
    Auto,
    /// `p` index sets of size `d` into the latent-root list.
    Explicit(Vec<Vec<usize>>),
}

fn stack_vectors(pairs: &[LatentPair], idx: &[usize]) -> CMat {
    let d = pairs[0].vector.len();
    let mut m = CMat::zeros(d, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m.set_column(c, &pairs[i].vector);
    }
    m
}

fn validate_grouping(groups: &[Vec<usize>], n: usize, d: usize, p: usize) -> Result<()> {
    if groups.len() != p {
        return Err(Error::InvalidGrouping(format!("expected {p} groups, got {}", groups.len())));
    }
    let mut seen = vec![false; n];
    for (k, g) in groups.iter().enumerate() {
        if g.len() != d {
            return Err(Error::InvalidGrouping(format!("group {k} has {} entries, expected {d}", g.len())));
        }
        for &i in g {
            if i >= n || seen[i] {
                return Err(Error::InvalidGrouping(format!("index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
    }
    Ok(())
}

/// Index of the conjugate partner of `i` among `pairs`, if any.
fn conjugate_partner(pairs: &[LatentPair], i: usize) -> Option<usize> {
    if pairs[i].root.im == 0.0 {
        return None;
    }
    let target = pairs[i].root.conj();
    (0..pairs.len()).find(|&j| j != i && pairs[j].root == target)
}

/// Consecutive blocks of `d` roots in the sorted order.
fn contiguous_grouping(pairs: &[LatentPair], d: usize, p: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&x, &y| root_order(&pairs[x].root, &pairs[y].root));
    (0..p).map(|k| order[k * d..(k + 1) * d].to_vec()).collect()
}

fn auto_grouping(pairs: &[LatentPair], d: usize, p: usize, real: bool) -> Vec<Vec<usize>> {
    let n = pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| root_order(&pairs[x].root, &pairs[y].root));
    let mut taken = vec![false; n];
    let mut units: VecDeque<Vec<usize>> = VecDeque::new();
    for &i in &order {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        match conjugate_partner(pairs, i).filter(|_| real) {
            Some(j) if !taken[j] => {
                taken[j] = true;
                units.push_back(vec![i, j]);
            }
            _ => units.push_back(vec![i]),
        }
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::with_capacity(d); p];
    while let Some(unit) = units.pop_front() {
        let mut best: Option<(usize, f64)> = None;
        for (k, g) in groups.iter().enumerate() {
            if d - g.len() < unit.len() {
                continue;
            }
            let mut cols = g.clone();
            cols.extend_from_slice(&unit);
            let cost = linalg::cond2(&stack_vectors(pairs, &cols));
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some((k, cost));
            }
        }
        match best {
            Some((k, _)) => groups[k].extend_from_slice(&unit),
            None => {
                // no block has room for the whole conjugate pair
                for &i in unit.iter().rev() {
                    units.push_front(vec![i]);
                }
            }
        }
    }
    groups
}

fn groups_cond(pairs: &[LatentPair], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|g| linalg::cond2(&stack_vectors(pairs, g)))
        .fold(0.0, f64::max)
}

fn split_pairs(pairs: &[LatentPair], groups: &[Vec<usize>]) -> usize {
    let mut count = 0;
    for g in groups {
        for &i in g {
            if let Some(j) = conjugate_partner(pairs, i) {
                if !g.contains(&j) {
                    count += 1;
                }
            }
        }
    }
    count / 2
}

/// Exhaustive search over all partitions into `p` blocks of size `d`,
/// minimising (split conjugate pairs, worst block condition).
fn exhaustive_grouping(pairs: &[LatentPair], d: usize, p: usize, real: bool) -> Option<Vec<Vec<usize>>> {
    fn recurse(
        pairs: &[LatentPair],
        d: usize,
        real: bool,
        assigned: &mut Vec<Option<usize>>,
        groups: &mut Vec<Vec<usize>>,
        best: &mut Option<((usize, f64), Vec<Vec<usize>>)>,
    ) {
        let Some(next) = assigned.iter().position(|a| a.is_none()) else {
            let splits = if real { split_pairs(pairs, groups) } else { 0 };
            let key = (splits, groups_cond(pairs, groups));
            let better = match best {
                None => true,
                Some((k, _)) => key.0 < k.0 || (key.0 == k.0 && key.1 < k.1),
            };
            if better {
                *best = Some((key, groups.clone()));
            }
            return;
        };
        // canonical form: `next` opens the first group that is not full,
        // later members are chosen in increasing order
        let open = groups.iter().position(|g| g.len() < d).unwrap();
        if groups[open].is_empty() {
            groups[open].push(next);
            assigned[next] = Some(open);
            recurse(pairs, d, real, assigned, groups, best);
            assigned[next] = None;
            groups[open].pop();
        } else {
            let last = *groups[open].last().unwrap();
            for i in (last + 1)..assigned.len() {
                if assigned[i].is_some() {
                    continue;
                }
                groups[open].push(i);
                assigned[i] = Some(open);
                recurse(pairs, d, real, assigned, groups, best);
                assigned[i] = None;
                groups[open].pop();
            }
        }
    }
    let n = pairs.len();
    let mut assigned = vec![None; n];
    let mut groups = vec![Vec::new(); p];
    let mut best = None;
    recurse(pairs, d, real, &mut assigned, &mut groups, &mut best);
    best.map(|(_, g)| g)
}

/// Builds `R_k = P_k Λ_k P_k⁻¹` from grouped latent pairs and certifies the
/// resulting set against `a`.
pub fn solvents_from_latents(a: &LambdaMatrix, pairs: &[LatentPair], grouping: &Grouping) -> Result<SolventSet> {
    a.require_monic()?;
    let (d, p) = (a.rows(), a.degree());
    let n = d * p;
    if pairs.len() != n {
        return Err(Error::IncompleteSet(format!("{} latent pairs for {n} roots", pairs.len())));
    }
    let roots: Vec<C64> = pairs.iter().map(|lp| lp.root).collect();
    check_distinct(&roots, DISTINCT_TOL)?;

    let build = |groups: &[Vec<usize>]| -> Result<SolventSet> {
        let mut mats = Vec::with_capacity(p);
        for (k, g) in groups.iter().enumerate() {
            let pk = stack_vectors(pairs, g);
            let cond = linalg::cond2(&pk);
            if !(cond <= GROUP_COND) {
                return Err(Error::SingularGroup { group: k, cond });
            }
            let pinv = linalg::inverse(&pk).ok_or(Error::SingularGroup { group: k, cond })?;
            let lam = CMat::from_diagonal(&CVec::from_iterator(d, g.iter().map(|&i| pairs[i].root)));
            mats.push(refine_solvent(a, &pk * lam * pinv)?);
        }
        SolventSet::certify(a, mats)
    };

    match grouping {
        Grouping::Explicit(g) => {
            validate_grouping(g, n, d, p)?;
            build(g)
        }
        Grouping::Auto => {
            let real = a.is_real();
            let acceptable = |g: &[Vec<usize>]| {
                (!real || split_pairs(pairs, g) == 0) && groups_cond(pairs, g) <= GROUP_SEARCH_COND
            };
            let contiguous = contiguous_grouping(pairs, d, p);
            let groups = if (!real || split_pairs(pairs, &contiguous) == 0)
                && groups_cond(pairs, &contiguous) <= CONTIGUOUS_COND
            {
                contiguous
            } else {
                let greedy = auto_grouping(pairs, d, p, real);
                if acceptable(&greedy) || n > 12 {
                    greedy
                } else {
                    log::debug!("greedy grouping splits a conjugate pair or is ill-conditioned, searching all partitions");
                    exhaustive_grouping(pairs, d, p, real).unwrap_or(greedy)
                }
            };
            let groups = if real && n <= 12 && groups_cond(pairs, &groups) > REAL_GROUP_COND {
                match exhaustive_grouping(pairs, d, p, false) {
                    Some(split) if SPLIT_GAIN * groups_cond(pairs, &split) < groups_cond(pairs, &groups) => {
                        log::info!("real solvent set is ill-conditioned, using a complex one");
                        split
                    }
                    _ => groups,
                }
            } else {
                groups
            };
            match build(&groups) {
                Err(
                    e @ (Error::SolventResidual { .. }
                    | Error::SingularGroup { .. }
                    | Error::SingularVandermonde { .. }),
                ) if real && n <= 12 => {
                    // a real solvent for some conjugate pair can be badly
                    // conditioned when a split (complex) one is not
                    let Some(split) = exhaustive_grouping(pairs, d, p, false).filter(|g| *g != groups) else {
                        return Err(e);
                    };
                    log::info!("conjugate-closed grouping failed ({e}); using a complex solvent set");
                    build(&split).map_err(|_| e)
                }
                other => other,
            }
        }
    }
}

/// Newton steps on `A(R) = 0` for a solvent assembled as `PΛP⁻¹`, whose
/// residual grows with `cond(P)` even when every latent pair is accurate.
/// The derivative `X ↦ Σ_j A_j Σ_{i<m_j} Rⁱ X R^{m_j−1−i}` (`m_j = p − j`) is
/// solved in Kronecker form; steps that do not reduce the residual are
/// discarded.
fn refine_solvent(a: &LambdaMatrix, r: CMat) -> Result<CMat> {
    let (d, p) = (a.rows(), a.degree());
    let target = 1e-3 * SOLVENT_TOL * a.coeff(p).norm().max(1.0);
    let mut best = r;
    let mut best_res = a.eval_right(&best)?;
    for _ in 0..MAX_REFINE {
        if best_res.norm() <= target {
            break;
        }
        let mut powers = vec![cidentity(d)];
        for k in 1..p {
            powers.push(&powers[k - 1] * &best);
        }
        let mut jac = CMat::zeros(d * d, d * d);
        for j in 0..p {
            let m = p - j;
            for i in 0..m {
                // vec(L X R) = (Rᵀ ⊗ L) vec(X), column-major
                jac += powers[m - 1 - i].transpose().kronecker(&(a.coeff(j) * &powers[i]));
            }
        }
        let rhs = -CVec::from_column_slice(best_res.as_slice());
        let Some(step) = jac.lu().solve(&rhs) else { break };
        let candidate = &best + CMat::from_column_slice(d, d, step.as_slice());
        let res = a.eval_right(&candidate)?;
        if !(res.norm() < best_res.norm()) {
            break;
        }
        best = candidate;
        best_res = res;
    }
    Ok(best)
}

/// Block Vandermonde matrix with block `(i, k)` equal to `R_kⁱ`.
pub fn vandermonde(solvents: &[CMat]) -> CMat {
    let p = solvents.len();
    if p == 0 {
        return CMat::zeros(0, 0);
    }
    let d = solvents[0].nrows();
    let mut v = CMat::zeros(p * d, p * d);
    for (k, r) in solvents.iter().enumerate() {
        let mut pw = cidentity(d);
        for i in 0..p {
            v.view_mut((i * d, k * d), (d, d)).copy_from(&pw);
            pw = &pw * r;
        }
    }
    v
}

/// Recovers the monic λ-matrix from a complete set of regular solvents via
/// `[A_p, …, A₁] = −[R₁ᵖ, …, R_pᵖ] V⁻¹`.
pub fn coeffs_from_solvents(set: &SolventSet) -> Result<LambdaMatrix> {
    let mats = set.matrices();
    let (p, d) = (mats.len(), set.order());
    let mut top = CMat::zeros(d, p * d);
    for (k, r) in mats.iter().enumerate() {
        top.view_mut((0, k * d), (d, d)).copy_from(&linalg::mat_pow(r, p));
    }
    // X V = −W  ⇔  Vᵀ Xᵀ = −Wᵀ
    let xt = linalg::solve(&set.vandermonde().transpose(), &(-top.transpose()))
        .ok_or(Error::SingularVandermonde { cond: set.cond_v() })?;
    let x = xt.transpose();
    let mut tail = Vec::with_capacity(p);
    for j in 1..=p {
        // A_j sits in block p − j of [A_p, …, A₁]
        tail.push(x.view((0, (p - j) * d), (d, d)).into_owned());
    }
    LambdaMatrix::monic(tail)
}

/// `(λI − F_p) ⋯ (λI − F₁)` for factors given in the order `[F₁, …, F_p]`.
pub fn product_of_linear_factors(factors: &[CMat]) -> Result<LambdaMatrix> {
    let d = factors
        .first()
        .map(|f| f.nrows())
        .ok_or_else(|| Error::DimensionMismatch("no factors".into()))?;
    let mut acc = LambdaMatrix::new(vec![cidentity(d)])?;
    for f in factors {
        let lin = LambdaMatrix::new(vec![cidentity(d), -f])?;
        acc = lin.mul(&acc)?;
    }
    Ok(acc)
}

/// Factors `A(λ) = (λI − R_p*) ⋯ (λI − R₂*)(λI − R₁)` and returns
/// `[R₁, R₂*, …, R_p*]`, where `R_k* = M_k R_k M_k⁻¹` and `M_k` is the
/// partial product of the first `k − 1` factors right-evaluated at `R_k`.
pub fn linear_factorization(set: &SolventSet) -> Result<Vec<CMat>> {
    let mats = set.matrices();
    let mut factors = Vec::with_capacity(mats.len());
    factors.push(mats[0].clone());
    for (k, r) in mats.iter().enumerate().skip(1) {
        let partial = product_of_linear_factors(&factors)?;
        let mk = partial.eval_right(r)?;
        let inv = linalg::inverse(&mk).ok_or(Error::SingularMk { k: k + 1 })?;
        if !(linalg::cond2(&mk) <= VANDERMONDE_COND) {
            return Err(Error::SingularMk { k: k + 1 });
        }
        factors.push(&mk * r * inv);
    }
    Ok(factors)
}

/// Monic λ-matrix whose trailing coefficients are given as real row-major
/// matrices; convenience for tests and examples.
pub fn monic_real(d: usize, tail: &[&[f64]]) -> Result<LambdaMatrix> {
    LambdaMatrix::monic(
        tail.iter()
            .map(|vals| complexify(&RMat::from_row_slice(d, d, vals)))
            .collect(),
    )
}
