//! Dense discretizations of the linearized operators and their spectra,
//! constrained Rayleigh-quotient minimization, and the angle-lemma bound.

use std::sync::Arc;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Error, Result};
use crate::grid::{Field, Grid};
use crate::operators::{apply_operator, OperatorSpec};

/// Largest grid accepted by [`discretize`].
pub const MAX_DENSE_POINTS: usize = 4096;

/// Relative tolerance on `‖M - Mᵀ‖` for a symmetrized operator.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// A matrix acting on nodal values.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    matrix: Mat<f64>,
    grid: Arc<Grid>,
    symmetrized: bool,
}

impl DenseOperator {
    pub fn from_matrix(grid: &Arc<Grid>, matrix: Mat<f64>, symmetrize: bool) -> Result<Self> {
        let n = grid.n_points();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(usage(format!(
                "matrix is {}x{}, grid has {n} points",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let matrix = if symmetrize {
            Mat::from_fn(n, n, |i, j| 0.5 * (matrix[(i, j)] + matrix[(j, i)]))
        } else {
            matrix
        };
        Ok(Self {
            matrix,
            grid: Arc::clone(grid),
            symmetrized: symmetrize,
        })
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if !f.grid().same_as(&self.grid) {
            return Err(usage("field and operator grids differ"));
        }
        let n = self.size();
        let x = f.values();
        let values = (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * x[j]).sum())
            .collect();
        Field::new(&self.grid, values)
    }

    /// `‖M - Mᵀ‖_F / ‖M‖_F`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.size();
        let mut diff = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = self.matrix[(i, j)];
                diff += (a - self.matrix[(j, i)]).powi(2);
                total += a * a;
            }
        }
        (diff / total.max(f64::MIN_POSITIVE)).sqrt()
    }

    /// The composition `self ∘ self`.
    pub fn squared(&self) -> DenseOperator {
        let matrix = &self.matrix * &self.matrix;
        let symmetrized = self.symmetrized;
        let n = self.size();
        let matrix = if symmetrized {
            Mat::from_fn(n, n, |i, j| 0.5 * (matrix[(i, j)] + matrix[(j, i)]))
        } else {
            matrix
        };
        DenseOperator {
            matrix,
            grid: Arc::clone(&self.grid),
            symmetrized,
        }
    }

    fn require_symmetric(&self) -> Result<()> {
        if self.symmetrized {
            Ok(())
        } else {
            Err(usage("spectral routines need a symmetrized operator"))
        }
    }
}

/// Assembles the matrix of an operator on `grid`.
///
/// Self-adjoint kinds are built as a circulant Fourier multiplier plus a
/// diagonal and then symmetrized; the others are assembled column by column.
pub fn discretize(spec: &OperatorSpec, grid: &Arc<Grid>) -> Result<DenseOperator> {
    spec.validate()?;
    let n = grid.n_points();
    if n > MAX_DENSE_POINTS {
        return Err(config(format!(
            "dense discretization limited to {MAX_DENSE_POINTS} points, got {n}"
        )));
    }
    match spec.local_parts() {
        Some((kinetic, potential)) => {
            let mut unit = vec![0.0; n];
            unit[0] = 1.0;
            let column = grid.apply_multiplier(&unit, |m, _| {
                (kinetic * grid.abs_wavenumber(m)).into()
            });
            let nodes = grid.nodes();
            let matrix = Mat::from_fn(n, n, |i, j| {
                let circulant = column[(i + n - j) % n];
                if i == j {
                    circulant + potential(nodes[i])
                } else {
                    circulant
                }
            });
            DenseOperator::from_matrix(grid, matrix, true)
        }
        None => {
            let mut matrix = Mat::<f64>::zeros(n, n);
            for j in 0..n {
                let mut unit = vec![0.0; n];
                unit[j] = 1.0;
                let column = apply_operator(spec, &Field::from_vec(grid, unit))?;
                for (i, v) in column.values().iter().enumerate() {
                    matrix[(i, j)] = *v;
                }
            }
            DenseOperator::from_matrix(grid, matrix, false)
        }
    }
}

/// Parity classes under `y ↦ -y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

/// Orthonormal basis (columns) of the even or odd nodal vectors. Node `j`
/// reflects to node `N - j`; nodes `0` and `N/2` are fixed.
pub fn parity_basis(n: usize, parity: Parity) -> Mat<f64> {
    let half = n / 2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pairs: Vec<usize> = (1..half).collect();
    match parity {
        Parity::Even => {
            let mut basis = Mat::<f64>::zeros(n, half + 1);
            basis[(0, 0)] = 1.0;
            basis[(half, 1)] = 1.0;
            for (k, &j) in pairs.iter().enumerate() {
                basis[(j, k + 2)] = s;
                basis[(n - j, k + 2)] = s;
            }
            basis
        }
        Parity::Odd => {
            let mut basis = Mat::<f64>::zeros(n, half - 1);
            for (k, &j) in pairs.iter().enumerate() {
                basis[(j, k)] = s;
                basis[(n - j, k)] = -s;
            }
            basis
        }
    }
}

/// Eigenvalues below a continuum threshold with their eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenReport {
    /// Ascending eigenvalues below `continuum_edge - margin`.
    pub discrete_eigenvalues: Vec<f64>,
    pub continuum_edge: f64,
    pub margin: f64,
    /// Unit-L² eigenvectors matching `discrete_eigenvalues`.
    pub eigenvector_fields: Vec<Field>,
    /// Eigenvalues within `margin` of the edge: they cannot be told apart
    /// from the discretized continuum.
    pub edge_ambiguous: Vec<f64>,
    pub warning: Option<String>,
}

/// Serializable view of an [`EigenReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub discrete_eigenvalues: Vec<f64>,
    pub continuum_edge: f64,
    pub margin: f64,
    pub edge_ambiguous: Vec<f64>,
    pub warning: Option<String>,
}

impl EigenReport {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            discrete_eigenvalues: self.discrete_eigenvalues.clone(),
            continuum_edge: self.continuum_edge,
            margin: self.margin,
            edge_ambiguous: self.edge_ambiguous.clone(),
            warning: self.warning.clone(),
        }
    }
}

fn symmetric_eigen(matrix: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    Ok((values, evd.U().to_owned()))
}

/// Default width of the band below the threshold treated as the edge: two
/// continuum spacings `2π/L`.
pub fn default_margin(grid: &Grid) -> f64 {
    2.0 * 2.0 * std::f64::consts::PI / grid.domain_length()
}

/// Eigenpairs of `op` below `threshold - margin`, on the full space or on a
/// parity subspace.
pub fn spectrum_below_continuum(op: &DenseOperator, threshold: f64) -> Result<EigenReport> {
    spectrum_below_continuum_in(op, threshold, None)
}

pub fn spectrum_below_continuum_in(
    op: &DenseOperator,
    threshold: f64,
    parity: Option<Parity>,
) -> Result<EigenReport> {
    op.require_symmetric()?;
    let n = op.size();
    let basis = parity.map(|p| parity_basis(n, p));
    let reduced = match &basis {
        Some(b) => b.transpose() * op.matrix() * b,
        None => op.matrix().clone(),
    };
    let (values, vectors) = symmetric_eigen(&reduced)?;
    let margin = default_margin(op.grid());
    let scale = op.grid().spacing().sqrt();
    let mut discrete = Vec::new();
    let mut fields = Vec::new();
    let mut ambiguous = Vec::new();
    for (k, &lambda) in values.iter().enumerate() {
        if lambda < threshold - margin {
            let col = vectors.col(k);
            let full: Vec<f64> = match &basis {
                Some(b) => (0..n)
                    .map(|i| (0..b.ncols()).map(|c| b[(i, c)] * col[c]).sum::<f64>() / scale)
                    .collect(),
                None => col.iter().map(|v| v / scale).collect(),
            };
            discrete.push(lambda);
            fields.push(Field::new(op.grid(), full)?);
        } else if lambda < threshold + margin {
            ambiguous.push(lambda);
        }
    }
    // The discretized continuum starts at the threshold; a cluster of more
    // than a few eigenvalues inside the edge band means no clean gap.
    let warning = if ambiguous.len() > 4 {
        Some(format!(
            "no spectral gap at {threshold}: {} eigenvalues within ±{margin:.3e}",
            ambiguous.len()
        ))
    } else {
        None
    };
    Ok(EigenReport {
        discrete_eigenvalues: discrete,
        continuum_edge: threshold,
        margin,
        eigenvector_fields: fields,
        edge_ambiguous: ambiguous,
        warning,
    })
}

/// Norm used in the denominator of a Rayleigh quotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayleighNorm {
    L2,
    Hhalf,
    H1,
}

impl RayleighNorm {
    /// Sobolev order of the norm.
    pub fn order(&self) -> f64 {
        match self {
            RayleighNorm::L2 => 0.0,
            RayleighNorm::Hhalf => 0.5,
            RayleighNorm::H1 => 1.0,
        }
    }
}

/// Applies the circulant multiplier `⟨ξ⟩^power` to every column.
fn bessel_columns(grid: &Grid, m: &Mat<f64>, power: f64) -> Mat<f64> {
    let n = m.nrows();
    let mut out = Mat::<f64>::zeros(n, m.ncols());
    for j in 0..m.ncols() {
        let col: Vec<f64> = m.col(j).iter().copied().collect();
        let mapped = grid.apply_multiplier(&col, |k, _| {
            let xi = grid.abs_wavenumber(k);
            (1.0 + xi * xi).powf(0.5 * power).into()
        });
        for (i, v) in mapped.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Relative size below which a constraint direction counts as dependent.
pub const CONSTRAINT_RANK_TOLERANCE: f64 = 1e-10;

/// Orthonormal basis of the complement of the span of `constraints`.
fn complement_basis(constraints: &Mat<f64>) -> Result<Mat<f64>> {
    let n = constraints.nrows();
    let k = constraints.ncols();
    if k == 0 {
        return Ok(Mat::identity(n, n));
    }
    let qr = constraints.qr();
    let r = qr.thin_R();
    let largest = (0..k).fold(0.0_f64, |m, i| m.max(r[(i, i)].abs()));
    for i in 0..k {
        if r[(i, i)].abs() <= CONSTRAINT_RANK_TOLERANCE * largest.max(f64::MIN_POSITIVE) {
            return Err(usage("constraints are linearly dependent on the grid"));
        }
    }
    let q = qr.compute_Q();
    Ok(q.subcols(k, n - k).to_owned())
}

/// Minimizes `⟨op f, f⟩ / ‖f‖²_norm` over `f` L²-orthogonal to every
/// constraint. The `H^s` cases are reduced to ordinary eigenproblems by the
/// change of variables `f = ⟨D⟩^{-s} g`.
pub fn constrained_min_rayleigh(
    op: &DenseOperator,
    constraints: &[Field],
    norm: RayleighNorm,
) -> Result<f64> {
    Ok(constrained_min_rayleigh_pair(op, constraints, norm)?.0)
}

/// Like [`constrained_min_rayleigh`] but also returns the minimizer.
pub fn constrained_min_rayleigh_pair(
    op: &DenseOperator,
    constraints: &[Field],
    norm: RayleighNorm,
) -> Result<(f64, Field)> {
    op.require_symmetric()?;
    let grid = op.grid();
    let n = op.size();
    for c in constraints {
        if !c.grid().same_as(grid) {
            return Err(usage("constraint and operator grids differ"));
        }
    }
    let raw = Mat::from_fn(n, constraints.len(), |i, j| constraints[j].values()[i]);
    let s = norm.order();
    let (matrix, cons) = if s == 0.0 {
        (op.matrix().clone(), raw)
    } else {
        // M' = B M B and c' = B c with B = ⟨D⟩^{-s}; B is symmetric.
        let left = bessel_columns(grid, op.matrix(), -s);
        let both = bessel_columns(grid, &left.transpose().to_owned(), -s);
        let sym = Mat::from_fn(n, n, |i, j| 0.5 * (both[(i, j)] + both[(j, i)]));
        (sym, bessel_columns(grid, &raw, -s))
    };
    let z = complement_basis(&cons)?;
    let reduced = z.transpose() * &matrix * &z;
    let reduced = Mat::from_fn(reduced.nrows(), reduced.ncols(), |i, j| {
        0.5 * (reduced[(i, j)] + reduced[(j, i)])
    });
    let (values, vectors) = symmetric_eigen(&reduced)?;
    let g = &z * vectors.col(0);
    let g_vec: Vec<f64> = g.iter().copied().collect();
    let f_vec = if s == 0.0 {
        g_vec
    } else {
        grid.apply_multiplier(&g_vec, |k, _| {
            let xi = grid.abs_wavenumber(k);
            (1.0 + xi * xi).powf(-0.5 * s).into()
        })
    };
    Ok((values[0], Field::new(grid, f_vec)?))
}

/// `μ⊥ - (μ⊥ - μ₁) sin²β` where `cos β = ⟨f, e₁⟩` after normalization.
pub fn angle_lemma_bound(mu1: f64, mu_perp: f64, e1: &Field, f: &Field) -> Result<f64> {
    e1.check_same_grid(f)?;
    let ne = e1.norm_l2();
    let nf = f.norm_l2();
    if ne == 0.0 || nf == 0.0 {
        return Err(usage("angle lemma needs nonzero directions"));
    }
    let cos = e1.dot(f) / (ne * nf);
    Ok(mu_perp - (mu_perp - mu1) * (1.0 - cos * cos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::operators::apply_operator;
    use crate::soliton::{closed_form_table, eigenfunction_field, profile, EigenSign};
    use proptest::prelude::*;

    #[test]
    fn dense_matches_matrix_free() {
        let g = make_grid(256, 64.0).unwrap();
        let f = g.sample(|y| (-(y - 1.0) * (y - 1.0) / 3.0).exp() * (1.3 * y).sin());
        for spec in [
            OperatorSpec::L,
            OperatorSpec::Lc { c: 1.4 },
            OperatorSpec::Ltilde,
            OperatorSpec::P,
            OperatorSpec::DgammaInvL { gamma: 0.2 },
        ] {
            let d = discretize(&spec, &g).unwrap();
            let a = d.apply(&f).unwrap();
            let b = apply_operator(&spec, &f).unwrap();
            assert!((&a - &b).norm_l2() <= 1e-10 * b.norm_l2(), "{spec:?}");
        }
    }

    #[test]
    fn symmetry_and_identity() {
        let g = make_grid(128, 32.0).unwrap();
        let l = discretize(&OperatorSpec::L, &g).unwrap();
        assert!(l.symmetrized());
        assert!(l.asymmetry() <= SYMMETRY_TOLERANCE);
        let lt = discretize(&OperatorSpec::Ltilde, &g).unwrap();
        let d = discretize(&OperatorSpec::Lc { c: 1.0 }, &g).unwrap();
        // 𝓛̃ = 𝓛 + D - diag(yQ'); D = 𝓛 - 1 + Q.
        let nodes = g.nodes();
        let mut worst = 0.0_f64;
        for i in 0..128 {
            for j in 0..128 {
                let mut dd = l.matrix()[(i, j)];
                if i == j {
                    dd += -1.0 + profile::q(nodes[i]);
                }
                let mut expected = l.matrix()[(i, j)] + dd;
                if i == j {
                    expected -= nodes[i] * profile::q_prime(nodes[i]);
                }
                worst = worst.max((lt.matrix()[(i, j)] - expected).abs());
                worst = worst.max((d.matrix()[(i, j)] - l.matrix()[(i, j)]).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
        let big = make_grid(8192, 64.0).unwrap();
        assert!(matches!(discretize(&OperatorSpec::L, &big), Err(Error::Config(_))));
    }

    #[test]
    fn kernel_vector_in_dense_form() {
        let g = make_grid(1024, 256.0).unwrap();
        let l = discretize(&OperatorSpec::L, &g).unwrap();
        let qp = g.sample(profile::q_prime);
        assert!(l.apply(&qp).unwrap().norm_l2() < 1e-3);
    }

    #[test]
    fn parity_bases_are_orthonormal_and_complementary() {
        let n = 16;
        let e = parity_basis(n, Parity::Even);
        let o = parity_basis(n, Parity::Odd);
        assert_eq!(e.ncols() + o.ncols(), n);
        let gram = e.transpose() * &e;
        for i in 0..e.ncols() {
            for j in 0..e.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-15);
            }
        }
        let cross = e.transpose() * &o;
        assert!(cross.norm_max() < 1e-15);
    }

    #[test]
    fn angle_bound_edge_cases() {
        let g = make_grid(4096, 512.0).unwrap();
        let (em, lm) = eigenfunction_field(&g, EigenSign::Minus);
        let lp = closed_form_table().lambda_plus;
        assert!((angle_lemma_bound(lm, lp, &em, &em).unwrap() - lp).abs() < 1e-14);
        let odd = g.sample(profile::q_prime);
        assert!((angle_lemma_bound(lm, lp, &em, &odd).unwrap() - lm).abs() < 1e-14);
        let yqp = g.sample(profile::y_q_prime);
        let b = angle_lemma_bound(lm, lp, &em, &yqp).unwrap();
        let t = closed_form_table();
        let exact = lp - (lp - lm) * (1.0 - t.cos2_beta);
        assert!(exact.abs() < 1e-14);
        assert!(b.abs() < 1e-6, "{b}");
        assert!(matches!(
            angle_lemma_bound(lm, lp, &em, &g.zeros()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn constraints_must_be_independent() {
        let g = make_grid(64, 32.0).unwrap();
        let l = discretize(&OperatorSpec::L, &g).unwrap();
        let q = g.sample(profile::q);
        let r = constrained_min_rayleigh(&l, &[q.clone(), q.scale(2.0)], RayleighNorm::L2);
        assert!(matches!(r, Err(Error::Usage(_))));
        let p = discretize(&OperatorSpec::P, &g).unwrap();
        assert!(constrained_min_rayleigh(&p, &[q], RayleighNorm::L2).is_err());
    }

    #[test]
    fn unconstrained_minimum_is_lowest_eigenvalue() {
        let g = make_grid(512, 128.0).unwrap();
        let l = discretize(&OperatorSpec::L, &g).unwrap();
        let report = spectrum_below_continuum(&l, 1.0).unwrap();
        let (min, f) = constrained_min_rayleigh_pair(&l, &[], RayleighNorm::L2).unwrap();
        assert!((min - report.discrete_eigenvalues[0]).abs() < 1e-10);
        let rq = l.apply(&f).unwrap().dot(&f) / f.dot(&f);
        assert!((rq - min).abs() < 1e-10);
    }

    #[test]
    fn sobolev_rayleigh_minimizer_is_consistent() {
        let g = make_grid(256, 64.0).unwrap();
        let lt = discretize(&OperatorSpec::Ltilde, &g).unwrap();
        let cons = [g.sample(profile::q_prime), g.sample(profile::y_q_prime)];
        let (min, f) = constrained_min_rayleigh_pair(&lt, &cons, RayleighNorm::Hhalf).unwrap();
        let num = lt.apply(&f).unwrap().dot(&f);
        let den = crate::grid::sobolev_norm(&f, 0.5).powi(2);
        assert!((num / den - min).abs() < 1e-8 * min.abs().max(1.0));
        for c in &cons {
            assert!(c.dot(&f).abs() < 1e-10 * f.norm_l2() * c.norm_l2());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn adding_constraints_never_lowers_minimum(a in -2.0..2.0f64, b in 0.3..3.0f64) {
            let g = make_grid(128, 32.0).unwrap();
            let l = discretize(&OperatorSpec::L, &g).unwrap();
            let c1 = g.sample(profile::q_prime);
            let c2 = g.sample(|y| (-(y - a) * (y - a) / b).exp());
            let one = constrained_min_rayleigh(&l, &[c1.clone()], RayleighNorm::L2).unwrap();
            let two = constrained_min_rayleigh(&l, &[c1, c2], RayleighNorm::L2).unwrap();
            prop_assert!(two >= one - 1e-10);
        }
    }
}
