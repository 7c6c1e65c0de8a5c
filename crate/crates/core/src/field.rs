//! Nodal fields on a subdomain and on a boundary loop.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::mesh::{BoundaryTag, Subdomain};

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub subdomain: Subdomain,
    pub values: Vec<f64>,
}

/// Values at the vertices of a boundary loop, in loop order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField {
    pub tag: BoundaryTag,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(subdomain: Subdomain, values: Vec<f64>) -> Self {
        ScalarField { subdomain, values }
    }

    pub fn zeros(space: &P1Space) -> Self {
        ScalarField::new(space.subdomain(), vec![0.0; space.num_dofs()])
    }

    pub fn interpolate(space: &P1Space, f: impl Fn([f64; 2]) -> f64) -> Self {
        ScalarField::new(space.subdomain(), space.interpolate(f))
    }

    pub fn constant(space: &P1Space, c: f64) -> Self {
        ScalarField::new(space.subdomain(), vec![c; space.num_dofs()])
    }

    pub fn check(&self, space: &P1Space) -> Result<()> {
        if self.subdomain != space.subdomain() || self.values.len() != space.num_dofs() {
            return Err(Error::InvalidInput(format!(
                "field on {:?} with {} values does not match the {:?} space with {} vertices",
                self.subdomain,
                self.values.len(),
                space.subdomain(),
                space.num_dofs()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field has non-finite values".into()));
        }
        Ok(())
    }

    pub fn trace(&self, space: &P1Space, tag: BoundaryTag) -> Result<BoundaryField> {
        Ok(BoundaryField { tag, values: space.trace(&self.values, tag)? })
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField::new(self.subdomain, self.values.iter().map(|v| s * v).collect())
    }

    pub fn axpy(&self, s: f64, other: &ScalarField) -> ScalarField {
        ScalarField::new(
            self.subdomain,
            self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV with header `vertex_index,x,y,value`; the index is the global mesh vertex.
    pub fn write_csv<W: Write>(&self, space: &P1Space, mut w: W) -> Result<()> {
        self.check(space)?;
        writeln!(w, "vertex_index,x,y,value")?;
        for (l, v) in self.values.iter().enumerate() {
            let p = space.points()[l];
            writeln!(w, "{},{:e},{:e},{:e}", space.global_indices()[l], p[0], p[1], v)?;
        }
        Ok(())
    }
}

impl BoundaryField {
    pub fn new(tag: BoundaryTag, values: Vec<f64>) -> Self {
        BoundaryField { tag, values }
    }

    pub fn zeros(space: &P1Space, tag: BoundaryTag) -> Result<Self> {
        Ok(BoundaryField::new(tag, vec![0.0; space.boundary(tag)?.len()]))
    }

    /// Samples `f(x, outward normal)` at the loop vertices; the normal at a
    /// vertex is the normalized sum of its two edge normals.
    pub fn from_fn(space: &P1Space, tag: BoundaryTag, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> Result<Self> {
        let part = space.boundary(tag)?;
        let n = part.len();
        let values = (0..n)
            .map(|k| {
                let (a, b) = (part.normals[(k + n - 1) % n], part.normals[k]);
                let s = [a[0] + b[0], a[1] + b[1]];
                let len = s[0].hypot(s[1]);
                f(space.points()[part.vertices[k]], [s[0] / len, s[1] / len])
            })
            .collect();
        Ok(BoundaryField::new(tag, values))
    }

    pub fn check(&self, space: &P1Space) -> Result<()> {
        let n = space.boundary(self.tag)?.len();
        if self.values.len() != n || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "boundary field on {:?} needs {n} finite values, got {}",
                self.tag,
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn integral(&self, space: &P1Space) -> Result<f64> {
        self.check(space)?;
        Ok(space.boundary(self.tag)?.integrate(&self.values))
    }

    pub fn l2_norm(&self, space: &P1Space) -> Result<f64> {
        self.check(space)?;
        Ok(space.boundary(self.tag)?.l2_norm(&self.values))
    }

    pub fn scaled(&self, s: f64) -> BoundaryField {
        BoundaryField::new(self.tag, self.values.iter().map(|v| s * v).collect())
    }

    pub fn axpy(&self, s: f64, other: &BoundaryField) -> BoundaryField {
        BoundaryField::new(self.tag, self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Discrete L² norm `sqrt(uᵀ M u)` of a nodal field.
pub fn l2_norm(mass: &crate::sparse::CsrMatrix, u: &[f64]) -> f64 {
    crate::sparse::dot(u, &mass.mul_vec(u)).max(0.0).sqrt()
}
