//! Complex vectors and matrices stored as separate real and imaginary arrays.
//!
//! A length-n complex vector is the stacked real vector `(Re v, Im v)` of
//! length 2n; every product is carried out on those real arrays.

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVector {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        check_len("ComplexVector::new", re.len(), im.len())?;
        Ok(Self { re, im })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_real(re: Vec<f64>) -> Self {
        let im = vec![0.0; re.len()];
        Self { re, im }
    }

    /// Standard basis vector `e_j` of length `n`.
    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = Self::zeros(n);
        v.re[j] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn norm(&self) -> f64 {
        cnorm(self)
    }

    /// `⟨self, other⟩ = Σ conj(self_j) other_j`, returned as `(re, im)`.
    pub fn inner(&self, other: &ComplexVector) -> (f64, f64) {
        inner(&self.re, &self.im, &other.re, &other.im)
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexVector) -> Result<Self> {
        check_len("ComplexVector::sub", self.len(), other.len())?;
        Ok(Self {
            re: self.re.iter().zip(&other.re).map(|(a, b)| a - b).collect(),
            im: self.im.iter().zip(&other.im).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &ComplexVector) -> Result<Self> {
        check_len("ComplexVector::add", self.len(), other.len())?;
        Ok(Self {
            re: self.re.iter().zip(&other.re).map(|(a, b)| a + b).collect(),
            im: self.im.iter().zip(&other.im).map(|(a, b)| a + b).collect(),
        })
    }

    /// The stacked real representation `(Re v, Im v)`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend_from_slice(&self.re);
        out.extend_from_slice(&self.im);
        out
    }

    pub fn max_abs_diff(&self, other: &ComplexVector) -> f64 {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// L2 norm of the stacked real representation.
pub fn cnorm(x: &ComplexVector) -> f64 {
    x.re.iter().chain(&x.im).map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn inner(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for j in 0..ar.len() {
        re += ar[j] * br[j] + ai[j] * bi[j];
        im += ar[j] * bi[j] - ai[j] * br[j];
    }
    (re, im)
}

/// Dense complex matrix `A + iB`, both parts row-major `rows × cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_len("ComplexMatrix real part", rows * cols, a.len())?;
        check_len("ComplexMatrix imaginary part", rows * cols, b.len())?;
        Ok(Self { rows, cols, a, b })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            a: vec![0.0; rows * cols],
            b: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for j in 0..n {
            m.a[j * n + j] = 1.0;
        }
        m
    }

    /// Builds a matrix whose `j`-th column is `cols[j]`.
    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            check_len("ComplexMatrix::from_columns", rows, c.len())?;
            for i in 0..rows {
                m.a[i * cols + j] = c.re[i];
                m.b[i * cols + j] = c.im[i];
            }
        }
        Ok(m)
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        (self.a[i * self.cols + j], self.b[i * self.cols + j])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.a[j * self.rows + i] = self.a[i * self.cols + j];
                m.b[j * self.rows + i] = -self.b[i * self.cols + j];
            }
        }
        m
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self> {
        check_len("ComplexMatrix::matmul", self.cols, other.rows)?;
        let mut m = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let (ar, ai) = self.get(i, k);
                for j in 0..other.cols {
                    let (br, bi) = other.get(k, j);
                    m.a[i * other.cols + j] += ar * br - ai * bi;
                    m.b[i * other.cols + j] += ar * bi + ai * br;
                }
            }
        }
        Ok(m)
    }

    /// Largest entrywise modulus of `self − I`.
    pub fn max_dev_from_identity(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (re, im) = self.get(i, j);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((re - target).hypot(im));
            }
        }
        worst
    }
}

/// `(A x_re − B x_im) + i (A x_im + B x_re)`.
pub fn complex_matvec(m: &ComplexMatrix, x: &ComplexVector) -> Result<ComplexVector> {
    check_len("complex_matvec", m.cols, x.len())?;
    let mut out = ComplexVector::zeros(m.rows);
    for i in 0..m.rows {
        let row_a = &m.a[i * m.cols..(i + 1) * m.cols];
        let row_b = &m.b[i * m.cols..(i + 1) * m.cols];
        let mut re = 0.0;
        let mut im = 0.0;
        for j in 0..m.cols {
            re += row_a[j] * x.re[j] - row_b[j] * x.im[j];
            im += row_a[j] * x.im[j] + row_b[j] * x.re[j];
        }
        out.re[i] = re;
        out.im[i] = im;
    }
    Ok(out)
}

/// Product of a complex matrix with a real vector, accumulated into `(out_re, out_im)`.
pub(crate) fn matvec_real_input_acc(
    m: &ComplexMatrix,
    x: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
) {
    for (j, &xj) in x.iter().enumerate() {
        // one-hot and sparse inputs are common
        if xj == 0.0 {
            continue;
        }
        for i in 0..m.rows {
            out_re[i] += m.a[i * m.cols + j] * xj;
            out_im[i] += m.b[i * m.cols + j] * xj;
        }
    }
}

impl TryFrom<(Vec<f64>, Vec<f64>)> for ComplexVector {
    type Error = Error;

    fn try_from((re, im): (Vec<f64>, Vec<f64>)) -> Result<Self> {
        Self::new(re, im)
    }
}
