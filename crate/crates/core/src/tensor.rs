//! Constant symmetric positive-definite 2×2 material tensors.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdTensor2 {
    pub m11: f64,
    pub m12: f64,
    pub m22: f64,
}

impl SpdTensor2 {
    pub fn new(m11: f64, m12: f64, m22: f64) -> Result<Self> {
        let t = SpdTensor2 { m11, m12, m22 };
        t.validate()?;
        Ok(t)
    }

    pub fn identity() -> Self {
        SpdTensor2 { m11: 1.0, m12: 0.0, m22: 1.0 }
    }

    /// `sigma · I`.
    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(sigma, 0.0, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.m11.is_finite() && self.m12.is_finite() && self.m22.is_finite();
        if !finite || self.m11 <= 0.0 || self.det() <= 0.0 {
            return Err(Error::NotSpd(format!(
                "[[{}, {}], [{}, {}]]",
                self.m11, self.m12, self.m12, self.m22
            )));
        }
        Ok(())
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m12
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.m11 * v[0] + self.m12 * v[1], self.m12 * v[0] + self.m22 * v[1]]
    }

    /// `a · M b`.
    pub fn form(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let mb = self.apply(b);
        a[0] * mb[0] + a[1] * mb[1]
    }

    pub fn inverse(&self) -> SpdTensor2 {
        let d = self.det();
        SpdTensor2 { m11: self.m22 / d, m12: -self.m12 / d, m22: self.m11 / d }
    }

    pub fn scaled(&self, s: f64) -> SpdTensor2 {
        SpdTensor2 { m11: s * self.m11, m12: s * self.m12, m22: s * self.m22 }
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.m11 + self.m22);
        let disc = (0.25 * (self.m11 - self.m22).powi(2) + self.m12 * self.m12).sqrt();
        (half_tr - disc, half_tr + disc)
    }

    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        hi / lo
    }

    /// The isotropic value `sigma` if `M = sigma I`.
    pub fn as_isotropic(&self) -> Option<f64> {
        (self.m12 == 0.0 && self.m11 == self.m22).then_some(self.m11)
    }

    /// Returns `gamma` with `self = gamma · other`, if the tensors are proportional.
    pub fn ratio_to(&self, other: &SpdTensor2) -> Option<f64> {
        let g = self.m11 / other.m11;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-13 * (a.abs() + b.abs()).max(1e-300);
        (close(self.m12, g * other.m12) && close(self.m22, g * other.m22)).then_some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_indefinite_tensors() {
        assert!(SpdTensor2::new(1.0, 2.0, 1.0).is_err());
        assert!(SpdTensor2::new(-1.0, 0.0, -1.0).is_err());
        assert!(SpdTensor2::new(2.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn proportional_tensors() {
        let a = SpdTensor2::new(2.0, 0.3, 1.0).unwrap();
        assert_eq!(a.scaled(2.5).ratio_to(&a), Some(2.5));
        assert_eq!(SpdTensor2::identity().ratio_to(&a), None);
    }

    proptest! {
        #[test]
        fn positive_definite_form(a in 0.1f64..5.0, b in 0.1f64..5.0, t in -0.99f64..0.99,
                                  x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let m = SpdTensor2::new(a, t * (a * b).sqrt(), b).unwrap();
            prop_assume!(x.abs() + y.abs() > 1e-3);
            prop_assert!(m.form([x, y], [x, y]) > 0.0);
            let inv = m.inverse();
            let v = inv.apply(m.apply([x, y]));
            prop_assert!((v[0] - x).abs() < 1e-9 * (1.0 + x.abs()) && (v[1] - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }
}
