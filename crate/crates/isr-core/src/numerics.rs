//! Dense linear-algebra primitives with deterministic conventions.
//!
//! Every decomposition here is made reproducible by two rules on top of the
//! underlying solver:
//!
//! * **sign rule** — each eigen/singular vector is flipped so that its entry of
//!   largest magnitude (first such entry on ties) is positive;
//! * **tie rule** — equal eigen/singular values keep the solver's original
//!   column order (stable sort).
//!
//! Subspaces are represented row-wise: an [`OrthonormalBasis`] is a `q x d`
//! matrix whose rows are orthonormal basis vectors of a `q`-dimensional
//! subspace of `R^d`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{IsrError, Result};

/// Max-abs deviation of `basis * basis^T` from the identity tolerated when
/// constructing an [`OrthonormalBasis`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative tolerance below which a singular value counts as zero when
/// determining numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

fn ensure_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IsrError::InvalidMatrix("non-finite entry".into()))
    }
}

/// A `q x d` matrix with orthonormal rows spanning a `q`-dimensional subspace
/// of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    basis: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Validates that `basis` has orthonormal rows (within [`ORTHONORMAL_TOL`])
    /// and wraps it. `q = 0` rows is a valid empty basis.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&basis)?;
        let (q, d) = basis.shape();
        if d == 0 {
            return Err(IsrError::InvalidMatrix("zero ambient dimension".into()));
        }
        if q > d {
            return Err(IsrError::InvalidMatrix(format!(
                "{q} rows exceed ambient dimension {d}"
            )));
        }
        let gram = &basis * basis.transpose();
        for i in 0..q {
            for j in 0..q {
                let want = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - want).abs() > ORTHONORMAL_TOL {
                    return Err(IsrError::InvalidMatrix(format!(
                        "rows not orthonormal: gram[{i},{j}] = {}",
                        gram[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { basis })
    }

    /// Basis of the span of the first `q` coordinate axes of `R^d`.
    pub fn coordinate_axes(q: usize, d: usize) -> Self {
        let mut m = DMatrix::zeros(q, d);
        for i in 0..q {
            m[(i, i)] = 1.0;
        }
        Self { basis: m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.basis
    }

    /// Number of basis vectors `q`.
    pub fn subspace_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Ambient dimension `d`.
    pub fn ambient_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Declared ordering of a list of eigen/singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumOrdering {
    Ascending,
    AscendingAbs,
    Descending,
}

/// An ordered list of eigen- or singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    ordering: SpectrumOrdering,
}

impl Spectrum {
    pub fn new(values: Vec<f64>, ordering: SpectrumOrdering) -> Result<Self> {
        let ok = values.windows(2).all(|w| match ordering {
            SpectrumOrdering::Ascending => w[0] <= w[1],
            SpectrumOrdering::AscendingAbs => w[0].abs() <= w[1].abs(),
            SpectrumOrdering::Descending => w[0] >= w[1],
        });
        if !ok || values.iter().any(|v| !v.is_finite()) {
            return Err(IsrError::InvalidMatrix(
                "spectrum violates its declared ordering or is non-finite".into(),
            ));
        }
        Ok(Self { values, ordering })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ordering(&self) -> SpectrumOrdering {
        self.ordering
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Flips `v` so that its entry of largest magnitude (first on ties) is
/// positive. Zero vectors are left untouched.
fn sign_normalize(v: &mut DVector<f64>) {
    let mut idx = 0;
    let mut best = 0.0_f64;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if best > 0.0 && v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
///
/// The input is symmetrized as `(a + a^T)/2` first; asymmetry beyond a 1e-8
/// relative tolerance is rejected. Returns the eigenvalues ascending and a
/// `d x d` basis whose *rows* are the matching eigenvectors, so that
/// `a = V^T diag(lambda) V`.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<(Spectrum, OrthonormalBasis)> {
    ensure_finite(a)?;
    let d = a.nrows();
    if d == 0 || a.ncols() != d {
        return Err(IsrError::InvalidMatrix(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let asym = (a - a.transpose()).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if asym > 1e-8 * (1.0 + scale) {
        return Err(IsrError::InvalidMatrix(format!(
            "matrix not symmetric: max |a - a^T| = {asym}"
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });

    let mut values = Vec::with_capacity(d);
    let mut rows = DMatrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        values.push(eig.eigenvalues[i]);
        let mut v = eig.eigenvectors.column(i).clone_owned();
        sign_normalize(&mut v);
        rows.row_mut(k).copy_from(&v.transpose());
    }
    Ok((
        Spectrum::new(values, SpectrumOrdering::Ascending)?,
        OrthonormalBasis::new(rows)?,
    ))
}

/// Thin singular value decomposition `a = U^T S V` with the deterministic
/// sign/tie rules.
///
/// `U` is `k x m` (rows are left singular vectors), `V` is `k x n` (rows are
/// right singular vectors), `k = min(m, n)`, and the singular values are
/// nonnegative descending. Each left singular vector is sign-normalized; the
/// paired right vector is flipped with it so the reconstruction is preserved.
pub fn svd(a: &DMatrix<f64>) -> Result<(OrthonormalBasis, Spectrum, OrthonormalBasis)> {
    ensure_finite(a)?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(IsrError::InvalidMatrix("empty matrix".into()));
    }
    let dec = a
        .clone()
        .try_svd_unordered(true, true, f64::EPSILON, 0)
        .ok_or_else(|| IsrError::InvalidMatrix("svd did not converge".into()))?;
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v_t requested");
    let k = dec.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        dec.singular_values[j]
            .partial_cmp(&dec.singular_values[i])
            .expect("finite singular values")
            .then(i.cmp(&j))
    });

    let mut values = Vec::with_capacity(k);
    let mut u_rows = DMatrix::zeros(k, m);
    let mut v_rows = DMatrix::zeros(k, n);
    for (kk, &i) in order.iter().enumerate() {
        values.push(dec.singular_values[i]);
        let mut ui = u.column(i).clone_owned();
        let mut vi = v_t.row(i).transpose();
        // flip the pair together, keyed on the left vector
        let mut idx = 0;
        let mut best = 0.0_f64;
        for (p, x) in ui.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = p;
            }
        }
        if best > 0.0 && ui[idx] < 0.0 {
            ui.neg_mut();
            vi.neg_mut();
        }
        u_rows.row_mut(kk).copy_from(&ui.transpose());
        v_rows.row_mut(kk).copy_from(&vi.transpose());
    }
    Ok((
        OrthonormalBasis::new(u_rows)?,
        Spectrum::new(values, SpectrumOrdering::Descending)?,
        OrthonormalBasis::new(v_rows)?,
    ))
}

/// Full set of right singular vectors of `rows` (a `q x d` matrix, `q <= d`),
/// obtained by zero-padding to square so the orthogonal complement of the row
/// space is represented too. Returns `(singular_values_desc, v_rows d x d)`.
fn full_right_singular(rows: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (q, d) = rows.shape();
    let mut padded = DMatrix::zeros(d, d);
    padded.view_mut((0, 0), (q, d)).copy_from(rows);
    let (_, values, v) = svd(&padded)?;
    Ok((values.values().to_vec(), v.into_matrix()))
}

/// Orthonormal basis of the null space of `rows`.
///
/// A right singular vector belongs to the null space when its singular value
/// is at most `tol` times the largest one; the returned basis has
/// `d - rank(rows)` rows (possibly zero).
pub fn null_space(rows: &DMatrix<f64>, tol: f64) -> Result<OrthonormalBasis> {
    ensure_finite(rows)?;
    let (q, d) = rows.shape();
    if d == 0 {
        return Err(IsrError::InvalidMatrix("zero ambient dimension".into()));
    }
    if q > d {
        return Err(IsrError::InvalidMatrix(format!(
            "{q} rows exceed ambient dimension {d}"
        )));
    }
    if q == 0 {
        return Ok(OrthonormalBasis::coordinate_axes(d, d));
    }
    let (values, v) = full_right_singular(rows)?;
    let sigma_max = values[0];
    let rank = values.iter().filter(|&&s| s > tol * sigma_max).count();
    let mut basis = DMatrix::zeros(d - rank, d);
    for (k, i) in (rank..d).enumerate() {
        basis.row_mut(k).copy_from(&v.row(i));
    }
    OrthonormalBasis::new(basis)
}

/// Principal angles between two subspaces of equal dimension, ascending, in
/// radians.
///
/// Computed as `arccos` of the singular values of `a * b^T` (clamped to
/// `[0, 1]`); all angles lie in `[0, pi/2]`. Note that `arccos` cannot resolve
/// angles below ~1e-8; use [`max_principal_angle`] when testing near-zero
/// angles.
pub fn principal_angles(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<Spectrum> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(IsrError::DimensionMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    if a.subspace_dim() != b.subspace_dim() {
        return Err(IsrError::DimensionMismatch(format!(
            "subspace dimensions differ: {} vs {}",
            a.subspace_dim(),
            b.subspace_dim()
        )));
    }
    if a.subspace_dim() == 0 {
        return Spectrum::new(Vec::new(), SpectrumOrdering::Ascending);
    }
    let m = a.matrix() * b.matrix().transpose();
    let (_, sv, _) = svd(&m)?;
    // descending cosines give ascending angles
    let angles: Vec<f64> = sv
        .values()
        .iter()
        .map(|&s| s.clamp(0.0, 1.0).acos())
        .collect();
    Spectrum::new(angles, SpectrumOrdering::Ascending)
}

/// Largest principal angle between two subspaces of equal dimension, computed
/// through sines so that near-zero angles are resolved accurately.
///
/// The singular values of `b * (I - a^T a)` are exactly the sines of the
/// principal angles.
pub fn max_principal_angle(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() || a.subspace_dim() != b.subspace_dim() {
        return Err(IsrError::DimensionMismatch(
            "max_principal_angle requires equal shapes".into(),
        ));
    }
    if a.subspace_dim() == 0 {
        return Ok(0.0);
    }
    let residual = b.matrix() - (b.matrix() * a.matrix().transpose()) * a.matrix();
    let (_, sv, _) = svd(&residual)?;
    Ok(sv.values()[0].clamp(0.0, 1.0).asin())
}

/// Angle by which two subspaces (of possibly different dimensions) fail to be
/// orthogonal: `arcsin` of the largest singular value of `a * b^T`.
///
/// Zero means the spans are mutually orthogonal; `pi/2` means they intersect.
pub fn subspace_overlap_angle(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(IsrError::DimensionMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    if a.subspace_dim() == 0 || b.subspace_dim() == 0 {
        return Ok(0.0);
    }
    let m = a.matrix() * b.matrix().transpose();
    let (_, sv, _) = svd(&m)?;
    Ok(sv.values()[0].clamp(0.0, 1.0).asin())
}

/// Flag mean of a set of subspaces: the top `r` left singular vectors of the
/// `d x (N*q)` column-concatenation of the transposed bases.
pub fn flag_mean(bases: &[OrthonormalBasis], r: usize) -> Result<OrthonormalBasis> {
    if bases.is_empty() {
        return Err(IsrError::EmptyInput("flag_mean of no bases".into()));
    }
    let d = bases[0].ambient_dim();
    if r > d {
        return Err(IsrError::InvalidParameter(format!(
            "flag mean rank {r} exceeds ambient dimension {d}"
        )));
    }
    for b in bases {
        if b.ambient_dim() != d {
            return Err(IsrError::DimensionMismatch(
                "flag_mean inputs have mixed ambient dimensions".into(),
            ));
        }
    }
    let total_q: usize = bases.iter().map(|b| b.subspace_dim()).sum();
    // zero columns do not perturb left singular vectors; pad so the thin SVD
    // always yields at least r of them
    let cols = total_q.max(d);
    let mut concat = DMatrix::zeros(d, cols);
    let mut at = 0;
    for b in bases {
        for i in 0..b.subspace_dim() {
            concat
                .column_mut(at)
                .copy_from(&b.matrix().row(i).transpose());
            at += 1;
        }
    }
    let (u, _, _) = svd(&concat)?;
    let mut rows = DMatrix::zeros(r, d);
    for i in 0..r {
        rows.row_mut(i).copy_from(&u.matrix().row(i));
    }
    OrthonormalBasis::new(rows)
}

/// Haar-ish random `d x d` orthonormal matrix: QR factorization of a standard
/// Gaussian draw with the triangular factor's diagonal forced positive, which
/// makes the factorization (and hence the output) unique and seed-deterministic.
pub fn random_orthonormal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<OrthonormalBasis> {
    if d == 0 {
        return Err(IsrError::InvalidParameter("dimension must be >= 1".into()));
    }
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    OrthonormalBasis::new(q)
}
