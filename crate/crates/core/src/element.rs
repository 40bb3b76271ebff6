use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Neg, Sub};

/// Element of the complexification, stored as real and imaginary coefficient
/// vectors over the fixed real basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ElementJson", try_from = "ElementJson")]
pub struct GVector {
    pub re: DVector<f64>,
    pub im: DVector<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<GVector> for ElementJson {
    fn from(v: GVector) -> Self {
        Self { re: v.re.as_slice().to_vec(), im: v.im.as_slice().to_vec() }
    }
}

impl TryFrom<ElementJson> for GVector {
    type Error = String;
    fn try_from(j: ElementJson) -> std::result::Result<Self, String> {
        if j.re.len() != j.im.len() {
            return Err(format!("re has {} entries, im has {}", j.re.len(), j.im.len()));
        }
        Ok(GVector::from_slices(&j.re, &j.im))
    }
}

impl GVector {
    pub fn zeros(n: usize) -> Self {
        Self { re: DVector::zeros(n), im: DVector::zeros(n) }
    }

    pub fn real(re: DVector<f64>) -> Self {
        let n = re.len();
        Self { re, im: DVector::zeros(n) }
    }

    pub fn new(re: DVector<f64>, im: DVector<f64>) -> Self {
        assert_eq!(re.len(), im.len());
        Self { re, im }
    }

    pub fn from_slices(re: &[f64], im: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(re), DVector::from_column_slice(im))
    }

    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = Self::zeros(n);
        v.re[j] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.im.amax() <= tol
    }

    pub fn conj(&self) -> Self {
        Self { re: self.re.clone(), im: -&self.im }
    }

    /// Multiplication by the imaginary unit.
    pub fn mul_i(&self) -> Self {
        Self { re: -&self.im, im: self.re.clone() }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { re: &self.re * c, im: &self.im * c }
    }

    pub fn scale_c(&self, c: Complex<f64>) -> Self {
        Self {
            re: &self.re * c.re - &self.im * c.im,
            im: &self.re * c.im + &self.im * c.re,
        }
    }

    pub fn real_part(&self) -> Self {
        Self::real(self.re.clone())
    }

    pub fn imag_part(&self) -> Self {
        Self::real(self.im.clone())
    }

    /// Largest absolute coefficient, used for coordinate-level residuals.
    pub fn amax(&self) -> f64 {
        self.re.amax().max(self.im.amax())
    }

    pub fn map_real(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Self {
        Self { re: f(&self.re), im: f(&self.im) }
    }

    /// Real vector of length 2n: re followed by im.
    pub fn to_stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&self.re);
        v.rows_mut(n, n).copy_from(&self.im);
        v
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        Self::new(v.rows(0, n).into_owned(), v.rows(n, n).into_owned())
    }

    pub fn axpy(&mut self, c: f64, other: &GVector) {
        self.re.axpy(c, &other.re, 1.0);
        self.im.axpy(c, &other.im, 1.0);
    }
}

impl Add for &GVector {
    type Output = GVector;
    fn add(self, o: &GVector) -> GVector {
        GVector { re: &self.re + &o.re, im: &self.im + &o.im }
    }
}

impl Sub for &GVector {
    type Output = GVector;
    fn sub(self, o: &GVector) -> GVector {
        GVector { re: &self.re - &o.re, im: &self.im - &o.im }
    }
}

impl Add for GVector {
    type Output = GVector;
    fn add(self, o: GVector) -> GVector {
        &self + &o
    }
}

impl Sub for GVector {
    type Output = GVector;
    fn sub(self, o: GVector) -> GVector {
        &self - &o
    }
}

impl Neg for &GVector {
    type Output = GVector;
    fn neg(self) -> GVector {
        GVector { re: -&self.re, im: -&self.im }
    }
}

impl Neg for GVector {
    type Output = GVector;
    fn neg(self) -> GVector {
        -&self
    }
}
