//! Graded operators over the form spaces of an oriented complex: exterior
//! derivative, Dirac operator, Laplacian, grading involution, block split and
//! supertrace.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex::{permutation_sign, OrientedComplex};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE, ZERO};

/// Tolerance for self-adjointness at construction time.
pub const ASSEMBLY_TOL: f64 = 1e-12;
/// Tolerance for self-adjointness along trajectories.
pub const TRAJECTORY_TOL: f64 = 1e-9;
/// Entries of blocks with degree jump >= 2 above this are structure violations.
pub const SPLIT_TOL: f64 = 1e-9;
/// Default kernel tolerance for Betti numbers.
pub const KERNEL_TOL: f64 = 1e-8;
/// Required ratio between the smallest nonzero eigenvalue and the kernel tolerance.
pub const GAP_FACTOR: f64 = 1e3;

/// Form degree of every matrix index, contiguous and ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grading {
    degrees: Vec<usize>,
    offsets: Vec<usize>,
}

impl Grading {
    /// Grading with the given block sizes (an f-vector).
    pub fn from_block_sizes(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut degrees = Vec::new();
        let mut acc = 0;
        for (p, &n) in sizes.iter().enumerate() {
            offsets.push(acc);
            degrees.extend(std::iter::repeat_n(p, n));
            acc += n;
        }
        offsets.push(acc);
        Self { degrees, offsets }
    }

    pub fn of_complex(c: &OrientedComplex) -> Self {
        Self::from_block_sizes(c.f_vector())
    }

    /// Rebuilds a grading from a per-index degree list, validating contiguity.
    pub fn from_degrees(degrees: &[usize]) -> Result<Self> {
        if degrees.windows(2).any(|w| w[1] < w[0] || w[1] > w[0] + 1) {
            return Err(Error::Usage("grading degrees must be contiguous and ascending".into()));
        }
        if degrees.first().is_some_and(|&d| d != 0) {
            return Err(Error::Usage("grading must start at degree 0".into()));
        }
        let top = degrees.last().map_or(0, |&d| d + 1);
        let sizes: Vec<usize> = (0..top)
            .map(|p| degrees.iter().filter(|&&d| d == p).count())
            .collect();
        Ok(Self::from_block_sizes(&sizes))
    }

    pub fn size(&self) -> usize {
        self.degrees.len()
    }

    /// Number of degree blocks.
    pub fn num_degrees(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn degree_of(&self, index: usize) -> usize {
        self.degrees[index]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Index range of block `p`; empty past the top degree.
    pub fn range(&self, p: usize) -> std::ops::Range<usize> {
        if p >= self.num_degrees() {
            return self.size()..self.size();
        }
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn block_size(&self, p: usize) -> usize {
        self.range(p).len()
    }

    /// Whether index `i` belongs to an odd-degree (fermionic) block.
    pub fn is_odd(&self, i: usize) -> bool {
        self.degrees[i] % 2 == 1
    }
}

/// A dense complex square matrix together with its form-degree grading.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedOperator {
    entries: CMatrix,
    grading: Arc<Grading>,
}

impl GradedOperator {
    pub fn new(entries: CMatrix, grading: Arc<Grading>) -> Result<Self> {
        if entries.nrows() != grading.size() || entries.ncols() != grading.size() {
            return Err(Error::Usage(format!(
                "matrix is {}x{} but grading has size {}",
                entries.nrows(),
                entries.ncols(),
                grading.size()
            )));
        }
        Ok(Self { entries, grading })
    }

    /// Constructor for internal callers that already guarantee matching sizes.
    pub(crate) fn from_parts(entries: CMatrix, grading: Arc<Grading>) -> Self {
        debug_assert_eq!(entries.nrows(), grading.size());
        Self { entries, grading }
    }

    pub fn zeros(grading: Arc<Grading>) -> Self {
        let n = grading.size();
        Self::from_parts(CMatrix::zeros(n, n), grading)
    }

    pub fn identity(grading: Arc<Grading>) -> Self {
        let n = grading.size();
        Self::from_parts(CMatrix::identity(n, n), grading)
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn grading(&self) -> &Arc<Grading> {
        &self.grading
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// The `(row degree, column degree)` block as an owned matrix.
    pub fn block(&self, row_degree: usize, col_degree: usize) -> CMatrix {
        let r = self.grading.range(row_degree);
        let c = self.grading.range(col_degree);
        self.entries
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_parts(self.entries.adjoint(), self.grading.clone())
    }

    pub fn hermitian_residual(&self) -> f64 {
        linalg::hermitian_residual(&self.entries)
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.entries)
    }

    /// Ascending eigenvalues (Hermitian part).
    pub fn spectrum(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.entries)
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.entries)
    }

    /// Product with another operator on the same grading.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_parts(&self.entries * &other.entries, self.grading.clone())
    }

    /// Keeps only the blocks whose degree jump `row - col` equals `jump`.
    pub fn degree_part(&self, jump: i64) -> Self {
        let g = &self.grading;
        let m = CMatrix::from_fn(self.size(), self.size(), |r, c| {
            if g.degree_of(r) as i64 - g.degree_of(c) as i64 == jump {
                self.entries[(r, c)]
            } else {
                ZERO
            }
        });
        Self::from_parts(m, g.clone())
    }

    /// Serializable dump in the `{"n","grading","re","im"}` layout.
    pub fn to_dump(&self) -> MatrixDump {
        let n = self.size();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let z = self.entries[(r, c)];
                re.push(z.re);
                im.push(z.im);
            }
        }
        MatrixDump {
            n,
            grading: self.grading.degrees().to_vec(),
            re,
            im,
        }
    }

    pub fn from_dump(dump: &MatrixDump) -> Result<Self> {
        let n = dump.n;
        if dump.re.len() != n * n || dump.im.len() != n * n || dump.grading.len() != n {
            return Err(Error::Usage("matrix dump has inconsistent lengths".into()));
        }
        let grading = Arc::new(Grading::from_degrees(&dump.grading)?);
        let m = CMatrix::from_fn(n, n, |r, c| {
            Complex64::new(dump.re[r * n + c], dump.im[r * n + c])
        });
        Self::new(m, grading)
    }
}

/// Matrix dump: row-major real and imaginary parts plus per-index degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDump {
    pub n: usize,
    pub grading: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Signed incidence operator `d` mapping `p`-forms to `(p+1)`-forms.
///
/// For a simplex `j` with orientation `(x_0, ..., x_n)` and its face `i`
/// obtained by dropping `x_k`, the entry is `(-1)^k` times the sign relating
/// the induced order of the face to the face's own orientation.
pub fn exterior_derivative(c: &OrientedComplex) -> GradedOperator {
    let grading = Arc::new(Grading::of_complex(c));
    let n = c.total_dim();
    let mut d = CMatrix::zeros(n, n);
    for (j, s) in c.simplices().iter().enumerate() {
        if s.dim() == 0 {
            continue;
        }
        for k in 0..s.orientation.len() {
            let face_order: Vec<u64> = s
                .orientation
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != k)
                .map(|(_, &v)| v)
                .collect();
            let i = c.index_of(&face_order).expect("clique complex is closed under faces");
            let face = &c.simplices()[i];
            let alternating = if k % 2 == 0 { 1 } else { -1 };
            let sign = alternating * permutation_sign(&face.orientation, &face_order);
            d[(j, i)] = Complex64::new(sign as f64, 0.0);
        }
    }
    GradedOperator::from_parts(d, grading)
}

/// `D = sum_p gamma_p (d_p + d_p^*)`.
///
/// `gamma` has one coupling per exterior-derivative block `d_p`, i.e.
/// `max_dim` entries. An empty slice means all couplings equal one.
pub fn dirac(c: &OrientedComplex, gamma: &[f64]) -> Result<GradedOperator> {
    let d = scaled_exterior_derivative(c, gamma)?;
    let m = d.entries() + d.entries().adjoint();
    Ok(GradedOperator::from_parts(m, d.grading().clone()))
}

/// The exterior derivative with block `d_p` multiplied by `gamma[p]`.
pub fn scaled_exterior_derivative(c: &OrientedComplex, gamma: &[f64]) -> Result<GradedOperator> {
    let blocks = c.max_dim();
    let gamma: Vec<f64> = if gamma.is_empty() {
        vec![1.0; blocks]
    } else {
        gamma.to_vec()
    };
    if gamma.len() != blocks {
        return Err(Error::Validation(format!(
            "expected {blocks} couplings (one per exterior derivative block), got {}",
            gamma.len()
        )));
    }
    if let Some(p) = gamma.iter().position(|&g| g == 0.0) {
        return Err(Error::DegenerateCoupling { degree: p });
    }
    let d = exterior_derivative(c);
    let g = d.grading().clone();
    let scaled = CMatrix::from_fn(d.size(), d.size(), |r, col| {
        let z = d.entries()[(r, col)];
        if z == ZERO {
            z
        } else {
            z * gamma[g.degree_of(col)]
        }
    });
    Ok(GradedOperator::from_parts(scaled, g))
}

/// `L = D^2`.
pub fn laplacian(dirac: &GradedOperator) -> GradedOperator {
    dirac.compose(dirac)
}

/// Grading involution `P` with `(Pf)_x = (-1)^{deg x} f_x`.
pub fn parity(grading: &Arc<Grading>) -> GradedOperator {
    let n = grading.size();
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = if grading.is_odd(i) { -ONE } else { ONE };
    }
    GradedOperator::from_parts(m, grading.clone())
}

/// Splits `X` into its degree-raising, degree-preserving and degree-lowering parts.
///
/// Fails if any block with a degree jump of two or more exceeds [`SPLIT_TOL`].
pub fn split(x: &GradedOperator) -> Result<(GradedOperator, GradedOperator, GradedOperator)> {
    let g = x.grading();
    for p in 0..g.num_degrees() {
        for q in 0..g.num_degrees() {
            if p.abs_diff(q) >= 2 {
                let m = linalg::max_abs(&x.block(p, q));
                if m > SPLIT_TOL {
                    return Err(Error::Structure {
                        row_degree: p,
                        col_degree: q,
                        magnitude: m,
                    });
                }
            }
        }
    }
    Ok((x.degree_part(1), x.degree_part(0), x.degree_part(-1)))
}

/// `sum_p (-1)^p tr(X_pp)`.
pub fn supertrace(x: &GradedOperator) -> Complex64 {
    let g = x.grading();
    (0..x.size())
        .map(|i| {
            let z = x.entries()[(i, i)];
            if g.is_odd(i) {
                -z
            } else {
                z
            }
        })
        .sum()
}

/// Dimension of the kernel of the degree-`p` block of a block-diagonal `L`.
///
/// Every eigenvalue of the block must be either below `tol` or at least
/// `GAP_FACTOR * tol`; anything in between makes the count ambiguous.
pub fn betti(l: &GradedOperator, p: usize, tol: f64) -> Result<usize> {
    if tol <= 0.0 {
        return Err(Error::Usage("kernel tolerance must be positive".into()));
    }
    let block = l.block(p, p);
    let ev = linalg::hermitian_eigenvalues(&block);
    let mut kernel = 0;
    for &lambda in &ev {
        let a = lambda.abs();
        if a < tol {
            kernel += 1;
        } else if a < GAP_FACTOR * tol {
            return Err(Error::Ambiguous(format!(
                "degree {p}: eigenvalue {lambda:e} lies within the gap above tolerance {tol:e}"
            )));
        }
    }
    Ok(kernel)
}

/// All Betti numbers of a block-diagonal Laplacian with the default tolerance.
pub fn betti_numbers(l: &GradedOperator) -> Result<Vec<usize>> {
    (0..l.grading().num_degrees())
        .map(|p| betti(l, p, KERNEL_TOL))
        .collect()
}
