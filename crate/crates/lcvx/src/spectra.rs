//! Eigenstructure of the discrete dynamics matrix and the random
//! eigenvalue perturbation applied to it.
//!
//! The perturbation shifts the distinct eigenvalues of `A = P J P^-1` by a
//! small random vector `q` while leaving the Jordan blocks untouched:
//! `A~(q) = P J~ P^-1`. Numerical Jordan structure is ill conditioned in
//! general, so the decomposition here clusters nearby eigenvalues, infers
//! block sizes from rank deficiencies of `(A - lambda I)^k`, and certifies
//! itself by reconstruction; callers with analytically known structure can
//! supply it through [`EigenStructure::from_parts`].

use nalgebra::{Complex, DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type CMatrix = DMatrix<Complex<f64>>;
type CVector = DVector<Complex<f64>>;

/// One Jordan block: its eigenvalue, its size, and the index of the
/// distinct-eigenvalue cluster it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanBlock {
    pub eigenvalue: Complex<f64>,
    pub size: usize,
    pub cluster: usize,
}

/// Jordan-form similarity structure `A = P J P^-1` with eigenvalues grouped
/// into clusters that share one perturbation entry each.
///
/// Complex eigenvalues always appear in conjugate pairs for real `A`; a
/// conjugate pair forms a single cluster so that a real shift keeps the
/// perturbed matrix real.
#[derive(Debug, Clone)]
pub struct EigenStructure {
    /// Similarity transform; columns are Jordan chains.
    pub p: CMatrix,
    p_inv: CMatrix,
    /// Jordan blocks in the column order of `p`.
    pub blocks: Vec<JordanBlock>,
    /// One representative eigenvalue per cluster (the `Im >= 0` member of a
    /// conjugate pair). Its length is the dimension of `q`.
    pub distinct_eigenvalues: Vec<Complex<f64>>,
    /// Frobenius norm of the decomposed matrix, used to scale tolerances.
    pub a_norm: f64,
    /// Frobenius residual of `P J P^-1` against the decomposed matrix.
    pub reconstruction_residual: f64,
}

/// A sampled perturbation vector with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub q: Vec<f64>,
    pub eps_a: f64,
    pub seed: u64,
}

/// Residual above which a computed eigenstructure is rejected, relative to
/// the matrix norm.
const RECONSTRUCTION_REJECT: f64 = 1e-6;
/// Relative imaginary residual above which a perturbed matrix is rejected
/// as non-real.
const REALNESS_REJECT: f64 = 1e-9;

impl EigenStructure {
    /// Number of distinct eigenvalue clusters (the length of `q`).
    pub fn n_distinct(&self) -> usize {
        self.distinct_eigenvalues.len()
    }

    pub fn dimension(&self) -> usize {
        self.p.nrows()
    }

    /// Assembles the Jordan matrix `J` from the block list.
    pub fn jordan_matrix(&self) -> CMatrix {
        build_jordan(self.dimension(), &self.blocks, None)
    }

    /// Builds a structure from a user-supplied transform and block list,
    /// validating it against the matrix it is meant to decompose. This is
    /// the escape hatch for systems whose Jordan structure is known
    /// analytically but numerically fragile.
    pub fn from_parts(a: &DMatrix<f64>, p: CMatrix, blocks: Vec<JordanBlock>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || p.nrows() != n || p.ncols() != n {
            return Err(Error::validation("P must match the shape of A"));
        }
        let total: usize = blocks.iter().map(|b| b.size).sum();
        if total != n {
            return Err(Error::validation(format!(
                "block sizes sum to {total}, expected {n}"
            )));
        }
        let n_clusters = blocks.iter().map(|b| b.cluster + 1).max().unwrap_or(0);
        if blocks.iter().any(|b| b.size == 0) {
            return Err(Error::validation("Jordan blocks must be non-empty"));
        }
        let mut distinct = vec![None; n_clusters];
        for b in &blocks {
            let slot = &mut distinct[b.cluster];
            if slot.is_none() && b.eigenvalue.im >= 0.0 {
                *slot = Some(b.eigenvalue);
            }
        }
        let distinct_eigenvalues: Vec<Complex<f64>> = distinct
            .into_iter()
            .enumerate()
            .map(|(c, v)| {
                v.ok_or_else(|| {
                    Error::validation(format!("cluster {c} has no representative block"))
                })
            })
            .collect::<Result<_>>()?;

        let p_inv = p
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::validation("P is singular"))?;
        let a_norm = a.norm();
        let j = build_jordan(n, &blocks, None);
        let recon = &p * j * &p_inv;
        let residual = reconstruction_residual(&recon, a);
        let structure = Self {
            p,
            p_inv,
            blocks,
            distinct_eigenvalues,
            a_norm,
            reconstruction_residual: residual,
        };
        structure.check_residual()?;
        Ok(structure)
    }

    fn check_residual(&self) -> Result<()> {
        let bound = RECONSTRUCTION_REJECT * self.a_norm.max(f64::MIN_POSITIVE);
        if self.reconstruction_residual > bound {
            return Err(Error::IllConditionedEigenstructure {
                residual: self.reconstruction_residual,
                bound,
            });
        }
        Ok(())
    }
}

fn build_jordan(n: usize, blocks: &[JordanBlock], shift: Option<&[f64]>) -> CMatrix {
    let mut j = CMatrix::zeros(n, n);
    let mut offset = 0;
    for block in blocks {
        let lambda = match shift {
            Some(q) => block.eigenvalue + Complex::new(q[block.cluster], 0.0),
            None => block.eigenvalue,
        };
        for k in 0..block.size {
            j[(offset + k, offset + k)] = lambda;
            if k + 1 < block.size {
                j[(offset + k, offset + k + 1)] = Complex::new(1.0, 0.0);
            }
        }
        offset += block.size;
    }
    j
}

fn reconstruction_residual(recon: &CMatrix, a: &DMatrix<f64>) -> f64 {
    let mut sum = 0.0;
    for (r, v) in recon.iter().zip(a.iter()) {
        let d = r - Complex::new(*v, 0.0);
        sum += d.norm_sqr();
    }
    sum.sqrt()
}

/// Basis vectors of the (numerical) null space of `m`, taken from singular
/// vectors with singular value at most `tol`.
fn null_basis(m: &CMatrix, tol: f64) -> Vec<CVector> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(i, _)| v_t.row(i).adjoint())
        .collect()
}

fn sigma_max(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Removes the components of `v` along an orthonormal set (two passes for
/// numerical orthogonality).
fn project_out(basis: &[CVector], v: &CVector) -> CVector {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dotc(&r);
            r -= q * c;
        }
    }
    r
}

/// Eigenvalues extracted from the real Schur form.
///
/// A converged quasi-triangular factor can leave a nearly defective real
/// pair inside a 2x2 block; reading both discriminant signs keeps the
/// extraction finite where assuming a complex pair would not.
fn spectrum(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::validation("eigenvalue iteration did not converge"))?;
    let (_, t) = schur.unpack();

    let mut eigs = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let split = i + 1 >= n || {
            let sub = t[(i + 1, i)].abs();
            sub <= f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs())
        };
        if split {
            eigs.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        } else {
            let mid = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let p = 0.5 * (t[(i, i)] - t[(i + 1, i + 1)]);
            let disc = p * p + t[(i, i + 1)] * t[(i + 1, i)];
            if disc >= 0.0 {
                let r = disc.sqrt();
                eigs.push(Complex::new(mid + r, 0.0));
                eigs.push(Complex::new(mid - r, 0.0));
            } else {
                let r = (-disc).sqrt();
                eigs.push(Complex::new(mid, r));
                eigs.push(Complex::new(mid, -r));
            }
            i += 2;
        }
    }
    Ok(eigs)
}

struct Cluster {
    centroid: Complex<f64>,
    multiplicity: usize,
    spread: f64,
}

fn cluster_eigenvalues(eigs: &[Complex<f64>], tol: f64) -> Vec<Cluster> {
    let mut sorted: Vec<Complex<f64>> = eigs.to_vec();
    sorted.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());

    let mut clusters: Vec<(Complex<f64>, Vec<Complex<f64>>)> = Vec::new();
    for lam in sorted {
        match clusters
            .iter_mut()
            .find(|(centroid, _)| (lam - *centroid).norm() <= tol)
        {
            Some((centroid, members)) => {
                members.push(lam);
                let sum: Complex<f64> = members.iter().sum();
                *centroid = sum / Complex::new(members.len() as f64, 0.0);
            }
            None => clusters.push((lam, vec![lam])),
        }
    }

    clusters
        .into_iter()
        .map(|(mut centroid, members)| {
            if centroid.im.abs() <= tol {
                centroid.im = 0.0;
            }
            let spread = members
                .iter()
                .map(|l| (l - centroid).norm())
                .fold(0.0, f64::max);
            Cluster {
                centroid,
                multiplicity: members.len(),
                spread,
            }
        })
        .collect()
}

/// Jordan chains for one eigenvalue cluster: each chain is a list of
/// columns `w_1 .. w_k` with `(A - lambda I) w_j = w_{j-1}` and
/// `(A - lambda I) w_1 = 0`.
fn cluster_chains(
    a: &CMatrix,
    cluster: &Cluster,
    a_norm: f64,
) -> Result<Vec<Vec<CVector>>> {
    let n = a.nrows();
    let lambda = cluster.centroid;
    let mult = cluster.multiplicity;
    let m1 = a - CMatrix::identity(n, n) * lambda;
    let m1_sigma = sigma_max(&m1);

    // Nullities of M^k for k = 1.. until the full algebraic multiplicity is
    // reached. Rank cutoffs widen with k: roundoff grows with the power and
    // the cluster spread keeps "zero" singular values away from zero.
    let mut bases: Vec<Vec<CVector>> = Vec::new();
    let mut nullities: Vec<usize> = vec![0];
    let mut power = m1.clone();
    let scale = (1.0 + a_norm).max(1.0);
    for k in 1..=mult {
        let tol = n as f64 * f64::EPSILON * sigma_max(&power).max(scale.powi(k as i32))
            + 4.0 * k as f64 * cluster.spread * m1_sigma.max(1.0).powi(k as i32 - 1);
        let basis = null_basis(&power, tol);
        let nullity = basis.len();
        if nullity <= *nullities.last().unwrap() {
            return Err(Error::IllConditionedEigenstructure {
                residual: f64::INFINITY,
                bound: RECONSTRUCTION_REJECT * a_norm,
            });
        }
        bases.push(basis);
        nullities.push(nullity);
        if nullity >= mult {
            break;
        }
        power = &power * &m1;
    }
    let max_height = bases.len();
    if nullities[max_height] != mult {
        return Err(Error::IllConditionedEigenstructure {
            residual: f64::INFINITY,
            bound: RECONSTRUCTION_REJECT * a_norm,
        });
    }

    // Select chain tops from the highest height down. At height k the tops
    // must be independent of null(M^{k-1}) and of the height-k vectors of
    // chains already started above.
    let mut chains: Vec<Vec<CVector>> = Vec::new();
    for k in (1..=max_height).rev() {
        let target = (nullities[k] - nullities[k - 1]) - chains.len();
        let mut span: Vec<CVector> = Vec::new();
        if k >= 2 {
            span.extend(bases[k - 2].iter().cloned());
        }
        for chain in &chains {
            // Chains are stored eigenvector-first, so the member of
            // null(M^k) \ null(M^{k-1}) sits at index k - 1.
            let height_k = &chain[k - 1];
            let r = project_out(&span, height_k);
            let norm = r.norm();
            if norm > 1e-12 {
                span.push(r / Complex::new(norm, 0.0));
            }
        }

        let mut picked = 0;
        while picked < target {
            // Greedily take the candidate least represented in the span.
            let best = bases[k - 1]
                .iter()
                .map(|v| project_out(&span, v))
                .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
                .filter(|r| r.norm() > 1e-8);
            let Some(r) = best else {
                return Err(Error::IllConditionedEigenstructure {
                    residual: f64::INFINITY,
                    bound: RECONSTRUCTION_REJECT * a_norm,
                });
            };
            let top = &r / Complex::new(r.norm(), 0.0);
            span.push(top.clone());

            let mut chain = vec![top];
            for _ in 1..k {
                let next = &m1 * chain.last().unwrap();
                chain.push(next);
            }
            // Stored top-down; reverse into eigenvector-first order and
            // normalize the whole chain uniformly (uniform scaling preserves
            // the unit superdiagonal).
            chain.reverse();
            let max_norm = chain.iter().map(|w| w.norm()).fold(0.0, f64::max);
            for w in &mut chain {
                *w /= Complex::new(max_norm, 0.0);
            }
            chains.push(chain);
            picked += 1;
        }
    }
    Ok(chains)
}

/// Computes the Jordan-form eigenstructure of `a`, treating eigenvalues
/// within `cluster_tol` of each other as one distinct eigenvalue.
pub fn eigen_structure(a: &DMatrix<f64>, cluster_tol: f64) -> Result<EigenStructure> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::validation("matrix must be square and non-empty"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("matrix must be finite"));
    }
    if !cluster_tol.is_finite() || cluster_tol <= 0.0 {
        return Err(Error::validation("cluster_tol must be positive and finite"));
    }

    let n = a.nrows();
    let a_norm = a.norm();
    let a_complex = a.map(|v| Complex::new(v, 0.0));
    let eigs = spectrum(a)?;
    let clusters = cluster_eigenvalues(&eigs, cluster_tol);

    // Pair complex clusters with their conjugates; each pair shares one
    // cluster index so a real shift keeps the matrix real.
    let mut group_of: Vec<Option<usize>> = vec![None; clusters.len()];
    let mut distinct: Vec<Complex<f64>> = Vec::new();
    let mut rep_of_group: Vec<usize> = Vec::new();
    for i in 0..clusters.len() {
        if group_of[i].is_some() {
            continue;
        }
        let c = &clusters[i];
        if c.centroid.im == 0.0 {
            group_of[i] = Some(distinct.len());
            rep_of_group.push(i);
            distinct.push(c.centroid);
            continue;
        }
        let conj = c.centroid.conj();
        let partner = (0..clusters.len()).find(|&j| {
            j != i && group_of[j].is_none() && (clusters[j].centroid - conj).norm() <= 2.0 * cluster_tol
        });
        let Some(j) = partner else {
            return Err(Error::validation(
                "complex eigenvalue cluster has no conjugate partner; refine cluster_tol",
            ));
        };
        let (rep, twin) = if c.centroid.im > 0.0 { (i, j) } else { (j, i) };
        group_of[rep] = Some(distinct.len());
        group_of[twin] = Some(distinct.len());
        rep_of_group.push(rep);
        distinct.push(clusters[rep].centroid);
    }

    // Chains for each representative; conjugate twins reuse them mirrored.
    let mut columns: Vec<CVector> = Vec::new();
    let mut blocks: Vec<JordanBlock> = Vec::new();
    for (group, &rep) in rep_of_group.iter().enumerate() {
        let chains = cluster_chains(&a_complex, &clusters[rep], a_norm)?;
        let lambda = clusters[rep].centroid;
        for chain in &chains {
            blocks.push(JordanBlock {
                eigenvalue: lambda,
                size: chain.len(),
                cluster: group,
            });
            columns.extend(chain.iter().cloned());
        }
        if lambda.im != 0.0 {
            for chain in &chains {
                blocks.push(JordanBlock {
                    eigenvalue: lambda.conj(),
                    size: chain.len(),
                    cluster: group,
                });
                columns.extend(chain.iter().map(|w| w.map(|z| z.conj())));
            }
        }
    }

    if columns.len() != n {
        return Err(Error::IllConditionedEigenstructure {
            residual: f64::INFINITY,
            bound: RECONSTRUCTION_REJECT * a_norm,
        });
    }

    let p = CMatrix::from_columns(&columns);
    let p_inv = p.clone().lu().try_inverse().ok_or(Error::IllConditionedEigenstructure {
        residual: f64::INFINITY,
        bound: RECONSTRUCTION_REJECT * a_norm,
    })?;
    let j = build_jordan(n, &blocks, None);
    let recon = &p * j * &p_inv;
    let residual = reconstruction_residual(&recon, a);

    let structure = EigenStructure {
        p,
        p_inv,
        blocks,
        distinct_eigenvalues: distinct,
        a_norm,
        reconstruction_residual: residual,
    };
    structure.check_residual()?;
    Ok(structure)
}

/// Applies the eigenvalue shift `q` to the structure, returning the real
/// perturbed matrix `P J~ P^-1`.
pub fn perturb(structure: &EigenStructure, q: &[f64]) -> Result<DMatrix<f64>> {
    if q.len() != structure.n_distinct() {
        return Err(Error::validation(format!(
            "q has length {}, expected {}",
            q.len(),
            structure.n_distinct()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("q must be finite"));
    }
    let n = structure.dimension();
    let j = build_jordan(n, &structure.blocks, Some(q));
    let recon = &structure.p * j * &structure.p_inv;

    let imag_residual = recon.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let bound = REALNESS_REJECT * structure.a_norm.max(1.0);
    if imag_residual > bound {
        return Err(Error::RealnessViolated {
            residual: imag_residual,
            bound,
        });
    }
    Ok(recon.map(|z| z.re))
}

/// Samples `q` with independent entries uniform on `[-eps_a, eps_a]`,
/// deterministically for a given seed.
pub fn sample_q(d: usize, eps_a: f64, seed: u64) -> Result<PerturbationSpec> {
    if d == 0 {
        return Err(Error::validation("d must be positive"));
    }
    if !eps_a.is_finite() || eps_a < 0.0 {
        return Err(Error::validation("eps_a must be non-negative and finite"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-eps_a, eps_a);
    let q = (0..d).map(|_| dist.sample(&mut rng)).collect();
    Ok(PerturbationSpec { q, eps_a, seed })
}
