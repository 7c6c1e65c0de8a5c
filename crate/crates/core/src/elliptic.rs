//! Second-order operators `Δ_M = −div M∇` on one subdomain: assembly,
//! Dirichlet/Neumann/mixed solves, the variational conormal derivative and
//! the discrete Green identity.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::field::{BoundaryField, ScalarField};
use crate::mesh::{BoundaryTag, Mesh2D, Subdomain};
use crate::sparse::{dot, CsrMatrix, SparseLu, TripletBuilder};
use crate::tensor::SpdTensor2;

/// Relative tolerance of the Neumann compatibility gate.
pub const COMPAT_TOL: f64 = 1e-8;

pub struct EllipticSystem {
    space: Arc<P1Space>,
    tensor: SpdTensor2,
    stiffness: CsrMatrix,
    mass: CsrMatrix,
    boundary_lu: HashMap<BoundaryTag, SparseLu>,
    neumann_lu: OnceLock<SparseLu>,
    interior_mass_lu: OnceLock<SparseLu>,
    dirichlet_lu: OnceLock<SparseLu>,
    mixed_lu: Mutex<HashMap<BoundaryTag, Arc<SparseLu>>>,
}

pub fn assemble(mesh: &Mesh2D, m: SpdTensor2, subdomain: Subdomain) -> Result<EllipticSystem> {
    m.validate()?;
    EllipticSystem::on_space(Arc::new(P1Space::new(mesh, subdomain)?), m)
}

fn cached<'a>(cell: &'a OnceLock<SparseLu>, build: impl FnOnce() -> Result<SparseLu>) -> Result<&'a SparseLu> {
    if let Some(lu) = cell.get() {
        return Ok(lu);
    }
    let lu = build()?;
    Ok(cell.get_or_init(|| lu))
}

#[derive(Clone, Copy, Debug)]
pub struct GreenResidual {
    pub residual: f64,
    /// Sum of the magnitudes of the three terms.
    pub scale: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct PoincareProbe {
    /// Smallest nonzero eigenvalue of `K x = μ M x`.
    pub mu1: f64,
    /// Best constant in `‖u‖_{H¹} ≤ C ‖M^{1/2}∇u‖` on mean-zero fields.
    pub constant: f64,
    /// Best constant in `‖u‖_{L²} ≤ C ‖M^{1/2}∇u‖` on mean-zero fields.
    pub gradient_constant: f64,
}

impl EllipticSystem {
    /// Assembles on an existing space, so several tensors can share one numbering.
    pub fn on_space(space: Arc<P1Space>, m: SpdTensor2) -> Result<Self> {
        m.validate()?;
        let stiffness = space.stiffness(&m);
        let mass = space.mass();
        let mut boundary_lu = HashMap::new();
        for part in space.boundary_parts() {
            boundary_lu.insert(part.tag, SparseLu::new(&part.mass)?);
        }
        Ok(EllipticSystem {
            space,
            tensor: m,
            stiffness,
            mass,
            boundary_lu,
            neumann_lu: OnceLock::new(),
            interior_mass_lu: OnceLock::new(),
            dirichlet_lu: OnceLock::new(),
            mixed_lu: Mutex::new(HashMap::new()),
        })
    }

    pub fn space(&self) -> &Arc<P1Space> {
        &self.space
    }

    pub fn tensor(&self) -> SpdTensor2 {
        self.tensor
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn boundary_mass(&self, tag: BoundaryTag) -> Result<&CsrMatrix> {
        Ok(&self.space.boundary(tag)?.mass)
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        crate::field::l2_norm(&self.mass, u)
    }

    /// Load vector `∫ g φ + Σ ∫_∂ u1 φ dσ`.
    pub fn load(&self, g: &ScalarField, fluxes: &[&BoundaryField]) -> Result<Vec<f64>> {
        g.check(&self.space)?;
        let mut f = self.mass.mul_vec(&g.values);
        for b in fluxes {
            b.check(&self.space)?;
            let part = self.space.boundary(b.tag)?;
            self.space.scatter_add(b.tag, &part.mass.mul_vec(&b.values), &mut f)?;
        }
        Ok(f)
    }

    /// Interior-consistent discrete source `g ≈ Δ_M u`: boundary values are
    /// extrapolated from the lumped Laplacian of neighbouring interior
    /// vertices, interior values solve `M_II g_I = (K u)_I − M_IB g_B`.
    pub fn recover_source(&self, u: &ScalarField) -> Result<ScalarField> {
        u.check(&self.space)?;
        let ku = self.stiffness.mul_vec(&u.values);
        Ok(ScalarField::new(u.subdomain, self.source_from_action(&ku)?))
    }

    /// Source recovery from a precomputed operator action `K u`; shared with
    /// vector systems that apply it componentwise.
    pub(crate) fn source_from_action(&self, ku: &[f64]) -> Result<Vec<f64>> {
        let n = self.space.num_dofs();
        let lumped = self.mass.mul_vec(&vec![1.0; n]);
        let interior = self.space.interior_vertices();
        let boundary = self.space.boundary_vertices();
        let mut is_interior = vec![false; n];
        for &i in &interior {
            is_interior[i] = true;
        }
        let mut g = vec![0.0; n];
        for &b in &boundary {
            let (mut sum, mut cnt) = (0.0, 0usize);
            for (j, _) in self.stiffness.row(b) {
                if is_interior[j] {
                    sum += ku[j] / lumped[j];
                    cnt += 1;
                }
            }
            if cnt > 0 {
                g[b] = sum / cnt as f64;
            }
        }
        if !interior.is_empty() {
            let mib = self.mass.submatrix(&interior, &boundary);
            let gb: Vec<f64> = boundary.iter().map(|&b| g[b]).collect();
            let corr = mib.mul_vec(&gb);
            let rhs: Vec<f64> = interior.iter().zip(&corr).map(|(&i, c)| ku[i] - c).collect();
            let lu = cached(&self.interior_mass_lu, || {
                SparseLu::new(&self.mass.submatrix(&interior, &interior))
            })?;
            for (&i, v) in interior.iter().zip(lu.solve(&rhs)?) {
                g[i] = v;
            }
        }
        Ok(g)
    }

    /// Boundary density `b` with `∫_∂ φ_a b dσ = r_a` for the loop vertices of `tag`.
    pub(crate) fn flux_from_residual(&self, r: &[f64], tag: BoundaryTag) -> Result<Vec<f64>> {
        let part = self.space.boundary(tag)?;
        let rb: Vec<f64> = part.vertices.iter().map(|&v| r[v]).collect();
        self.boundary_lu[&tag].solve(&rb)
    }

    /// Variationally consistent conormal trace `ν·M∇u` on `tag`:
    /// `∫_∂ v b dσ = ∫ ∇v·M∇u − ∫ v Δ_M u` for all test `v`. Without an
    /// explicit source, `Δ_M u` is recovered by [`Self::recover_source`].
    pub fn conormal_derivative(
        &self,
        u: &ScalarField,
        source: Option<&ScalarField>,
        tag: BoundaryTag,
    ) -> Result<BoundaryField> {
        u.check(&self.space)?;
        self.space.boundary(tag)?;
        let recovered;
        let g = match source {
            Some(g) => {
                g.check(&self.space)?;
                g
            }
            None => {
                recovered = self.recover_source(u)?;
                &recovered
            }
        };
        let ku = self.stiffness.mul_vec(&u.values);
        let mg = self.mass.mul_vec(&g.values);
        let r: Vec<f64> = ku.iter().zip(&mg).map(|(a, b)| a - b).collect();
        Ok(BoundaryField::new(tag, self.flux_from_residual(&r, tag)?))
    }

    pub fn solve_dirichlet(&self, g: &ScalarField, bc: &[BoundaryField]) -> Result<ScalarField> {
        g.check(&self.space)?;
        let n = self.space.num_dofs();
        let mut u = vec![0.0; n];
        for part in self.space.boundary_parts() {
            let data = bc
                .iter()
                .find(|b| b.tag == part.tag)
                .ok_or_else(|| Error::InvalidInput(format!("missing Dirichlet data on {:?}", part.tag)))?;
            data.check(&self.space)?;
            for (k, &v) in part.vertices.iter().enumerate() {
                u[v] = data.values[k];
            }
        }
        let interior = self.space.interior_vertices();
        let boundary = self.space.boundary_vertices();
        let f = self.mass.mul_vec(&g.values);
        let ub: Vec<f64> = boundary.iter().map(|&b| u[b]).collect();
        let kib = self.stiffness.submatrix(&interior, &boundary).mul_vec(&ub);
        let rhs: Vec<f64> = interior.iter().zip(&kib).map(|(&i, c)| f[i] - c).collect();
        let lu = cached(&self.dirichlet_lu, || SparseLu::new(&self.stiffness.submatrix(&interior, &interior)))?;
        for (&i, v) in interior.iter().zip(lu.solve(&rhs)?) {
            u[i] = v;
        }
        Ok(ScalarField::new(g.subdomain, u))
    }

    /// The Neumann operator: solves `Δ_M u = g`, `ν·M∇u = u1` normalized by
    /// `∫_∂ u dσ = 0`. Data must satisfy `∫_∂ u1 dσ + ∫ g dx = 0`.
    pub fn solve_neumann(&self, g: &ScalarField, u1: &[BoundaryField]) -> Result<ScalarField> {
        for part in self.space.boundary_parts() {
            if !u1.iter().any(|b| b.tag == part.tag) {
                return Err(Error::InvalidInput(format!("missing Neumann data on {:?}", part.tag)));
            }
        }
        let refs: Vec<&BoundaryField> = u1.iter().collect();
        let load = self.load(g, &refs)?;
        let mut scale: f64 = self.mass.mul_vec(&g.values).iter().map(|v| v.abs()).sum();
        for b in u1 {
            scale += self.space.boundary(b.tag)?.mass.mul_vec(&b.values).iter().map(|v| v.abs()).sum::<f64>();
        }
        let u = self.solve_neumann_load(load, scale)?;
        Ok(ScalarField::new(g.subdomain, u))
    }

    /// Neumann solve for an assembled load vector `F_i = ⟨Δ_M u, φ_i⟩ + ⟨u1, φ_i⟩_∂`.
    /// The compatibility defect `Σ F_i` must not exceed `COMPAT_TOL · scale`;
    /// within tolerance it is removed by shifting the volume source by a constant.
    pub fn solve_neumann_load(&self, mut load: Vec<f64>, scale: f64) -> Result<Vec<f64>> {
        let n = self.space.num_dofs();
        let defect: f64 = load.iter().sum();
        let allowed = COMPAT_TOL * scale;
        if defect.abs() > allowed {
            return Err(Error::IncompatibleData { defect: defect.abs(), allowed });
        }
        let w = self.mass.mul_vec(&vec![1.0; n]);
        let area: f64 = w.iter().sum();
        for (f, wi) in load.iter_mut().zip(&w) {
            *f -= defect * wi / area;
        }
        let c = self.boundary_weights();
        let lu = cached(&self.neumann_lu, || {
            let mut b = TripletBuilder::new(n + 1, n + 1);
            b.extend_from(&self.stiffness, 0, 0, 1.0);
            for (i, &ci) in c.iter().enumerate() {
                if ci != 0.0 {
                    b.push(i, n, ci);
                    b.push(n, i, ci);
                }
            }
            SparseLu::new(&b.build())
        })?;
        load.push(0.0);
        let mut x = lu.solve(&load)?;
        x.truncate(n);
        Ok(x)
    }

    /// `∫_∂ φ_i dσ` over every boundary part of the subdomain.
    pub fn boundary_weights(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.space.num_dofs()];
        for part in self.space.boundary_parts() {
            self.space.scatter_add(part.tag, &part.weights(), &mut c).expect("own tag");
        }
        c
    }

    /// Dirichlet data on one tag and conormal data on the other.
    pub fn solve_mixed(&self, g: &ScalarField, dirichlet: &BoundaryField, neumann: &BoundaryField) -> Result<ScalarField> {
        let parts = self.space.boundary_parts();
        if dirichlet.tag == neumann.tag || parts.len() != 2 {
            return Err(Error::InvalidInput(
                "mixed problems need two distinct boundary tags partitioning the boundary".into(),
            ));
        }
        dirichlet.check(&self.space)?;
        let load = self.load(g, &[neumann])?;
        let n = self.space.num_dofs();
        let dpart = self.space.boundary(dirichlet.tag)?;
        let mut u = vec![0.0; n];
        let mut fixed = vec![false; n];
        for (k, &v) in dpart.vertices.iter().enumerate() {
            u[v] = dirichlet.values[k];
            fixed[v] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let kfd = self.stiffness.submatrix(&free, &dpart.vertices).mul_vec(&dirichlet.values);
        let rhs: Vec<f64> = free.iter().zip(&kfd).map(|(&i, c)| load[i] - c).collect();
        let lu = self.mixed_factor(dirichlet.tag, &free)?;
        for (&i, v) in free.iter().zip(lu.solve(&rhs)?) {
            u[i] = v;
        }
        Ok(ScalarField::new(g.subdomain, u))
    }

    /// Factorization of the stiffness block on the vertices not fixed by
    /// Dirichlet data on `tag`; shared by repeated mixed solves.
    pub(crate) fn mixed_factor(&self, tag: BoundaryTag, free: &[usize]) -> Result<Arc<SparseLu>> {
        let mut cache = self.mixed_lu.lock().expect("cache lock");
        if let Some(lu) = cache.get(&tag) {
            return Ok(lu.clone());
        }
        let lu = Arc::new(SparseLu::new(&self.stiffness.submatrix(free, free))?);
        cache.insert(tag, lu.clone());
        Ok(lu)
    }

    /// `|∫_∂ v ν·M∇u dσ − ∫ ∇v·M∇u + ∫ v Δ_M u|` with the source of `u` recovered.
    pub fn green_identity_residual(&self, u: &ScalarField, v: &ScalarField) -> Result<GreenResidual> {
        v.check(&self.space)?;
        let g = self.recover_source(u)?;
        let mut boundary_term = 0.0;
        for part in self.space.boundary_parts() {
            let b = self.conormal_derivative(u, Some(&g), part.tag)?;
            let vt = self.space.trace(&v.values, part.tag)?;
            boundary_term += part.inner(&vt, &b.values);
        }
        let energy = dot(&v.values, &self.stiffness.mul_vec(&u.values));
        let source = dot(&v.values, &self.mass.mul_vec(&g.values));
        Ok(GreenResidual {
            residual: (boundary_term - energy + source).abs(),
            scale: boundary_term.abs() + energy.abs() + source.abs(),
        })
    }

    /// `∫ ∇u·M∇u / ∫ (u − ū)²`; rejects fields in the kernel (constants).
    pub fn rayleigh_quotient(&self, u: &ScalarField) -> Result<f64> {
        u.check(&self.space)?;
        let w = self.mass.mul_vec(&vec![1.0; self.space.num_dofs()]);
        let mean = dot(&w, &u.values) / w.iter().sum::<f64>();
        let centred: Vec<f64> = u.values.iter().map(|x| x - mean).collect();
        let energy = dot(&u.values, &self.stiffness.mul_vec(&u.values));
        let l2 = dot(&centred, &self.mass.mul_vec(&centred));
        let scale = self.stiffness.max_abs() * dot(&u.values, &u.values);
        if l2 <= 0.0 || energy <= 1e-13 * scale {
            return Err(Error::KernelField);
        }
        Ok(energy / l2)
    }

    /// Smallest nonzero generalized eigenvalue of `(K, M)` by inverse
    /// iteration on the mean-zero complement of the constants.
    pub fn poincare_constant_probe(&self) -> Result<PoincareProbe> {
        let n = self.space.num_dofs();
        let w = self.mass.mul_vec(&vec![1.0; n]);
        let mut b = TripletBuilder::new(n + 1, n + 1);
        b.extend_from(&self.stiffness, 0, 0, 1.0);
        for (i, &wi) in w.iter().enumerate() {
            b.push(i, n, wi);
            b.push(n, i, wi);
        }
        let lu = SparseLu::new(&b.build())?;
        let mut x: Vec<f64> = self
            .space
            .points()
            .iter()
            .map(|p| p[0] + 0.37 * p[1] + 0.1 * p[0] * p[1])
            .collect();
        let mut mu = f64::INFINITY;
        for _ in 0..500 {
            let mut rhs = self.mass.mul_vec(&x);
            rhs.push(0.0);
            let mut y = lu.solve(&rhs)?;
            y.truncate(n);
            let ky = dot(&y, &self.stiffness.mul_vec(&y));
            let my = dot(&y, &self.mass.mul_vec(&y));
            if my <= 0.0 || ky <= 0.0 {
                return Err(Error::SingularSystem("inverse iteration collapsed".into()));
            }
            let next = ky / my;
            let s = 1.0 / my.sqrt();
            x = y.iter().map(|v| v * s).collect();
            let done = (next - mu).abs() <= 1e-13 * next;
            mu = next;
            if done {
                break;
            }
        }
        Ok(PoincareProbe {
            mu1: mu,
            constant: ((1.0 + mu) / mu).sqrt(),
            gradient_constant: 1.0 / mu.sqrt(),
        })
    }

    /// Lowest eigenpair of the Dirichlet problem `K_II x = λ M_II x`, with the
    /// eigenvector extended by zero and normalized in L².
    pub fn dirichlet_ground_state(&self) -> Result<(f64, Vec<f64>)> {
        let interior = self.space.interior_vertices();
        let kii = self.stiffness.submatrix(&interior, &interior);
        let mii = self.mass.submatrix(&interior, &interior);
        let lu = cached(&self.dirichlet_lu, || SparseLu::new(&kii))?;
        let mut x = vec![1.0; interior.len()];
        let mut lambda = f64::INFINITY;
        for _ in 0..1000 {
            let y = lu.solve(&mii.mul_vec(&x))?;
            let ky = dot(&y, &kii.mul_vec(&y));
            let my = dot(&y, &mii.mul_vec(&y));
            let next = ky / my;
            x = y.iter().map(|v| v / my.sqrt()).collect();
            let done = (next - lambda).abs() <= 1e-14 * next;
            lambda = next;
            if done {
                break;
            }
        }
        let mut full = vec![0.0; self.space.num_dofs()];
        for (&i, v) in interior.iter().zip(&x) {
            full[i] = *v;
        }
        Ok((lambda, full))
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::norm2;
    use crate::mesh::build_disk_in_disk_mesh;
    use std::f64::consts::PI;

    fn heart(h: f64, m: SpdTensor2) -> EllipticSystem {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, h).unwrap();
        assemble(&mesh, m, Subdomain::Heart).unwrap()
    }

    #[test]
    fn stiffness_is_symmetric_with_constant_kernel() {
        let sys = heart(0.2, SpdTensor2::new(2.0, 0.4, 1.0).unwrap());
        assert!(sys.stiffness().is_symmetric());
        let k1 = sys.stiffness().mul_vec(&vec![1.0; sys.space().num_dofs()]);
        assert!(norm2(&k1) < 1e-12 * sys.stiffness().max_abs());
    }

    #[test]
    fn stiffness_is_linear_in_the_tensor() {
        let a = heart(0.25, SpdTensor2::identity());
        let b = heart(0.25, SpdTensor2::isotropic(2.0).unwrap());
        for (i, j, v) in a.stiffness().iter() {
            assert!((b.stiffness().get(i, j) - 2.0 * v).abs() < 1e-14 * v.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_non_spd_tensor() {
        let mesh = build_disk_in_disk_mesh(1.0, 2.0, 0.3).unwrap();
        let bad = SpdTensor2 { m11: 1.0, m12: 3.0, m22: 1.0 };
        assert!(matches!(assemble(&mesh, bad, Subdomain::Heart), Err(Error::NotSpd(_))));
    }

    #[test]
    fn conormal_of_linear_and_quadratic_fields() {
        let sys = heart(0.05, SpdTensor2::identity());
        let sp = sys.space();
        let x1 = ScalarField::interpolate(sp, |p| p[0]);
        let b = sys.conormal_derivative(&x1, None, BoundaryTag::Inner).unwrap();
        let part = sp.boundary(BoundaryTag::Inner).unwrap();
        let exact: Vec<f64> = part.vertices.iter().map(|&v| sp.points()[v][0]).collect();
        let err = part.l2_norm(&b.values.iter().zip(&exact).map(|(a, e)| a - e).collect::<Vec<_>>());
        assert!(err < 0.05 * (2.0 * PI).sqrt(), "linear conormal error {err}");

        let r2 = ScalarField::interpolate(sp, |p| p[0] * p[0] + p[1] * p[1]);
        let b = sys.conormal_derivative(&r2, None, BoundaryTag::Inner).unwrap();
        let dev = b.values.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
        assert!(dev < 0.2, "quadratic conormal deviation {dev}");
        let c = ScalarField::constant(sp, 3.0);
        assert!(sys.conormal_derivative(&c, None, BoundaryTag::Inner).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn neumann_rejects_incompatible_data() {
        let sys = heart(0.2, SpdTensor2::identity());
        let g = ScalarField::zeros(sys.space());
        let u1 = BoundaryField::new(BoundaryTag::Inner, vec![1.0; sys.space().boundary(BoundaryTag::Inner).unwrap().len()]);
        assert!(matches!(sys.solve_neumann(&g, &[u1]), Err(Error::IncompatibleData { .. })));
    }

    #[test]
    fn poincare_probe_rejects_constants() {
        let sys = heart(0.2, SpdTensor2::identity());
        let c = ScalarField::constant(sys.space(), 1.0);
        assert!(matches!(sys.rayleigh_quotient(&c), Err(Error::KernelField)));
        let p = sys.poincare_constant_probe().unwrap();
        // first nonzero Neumann eigenvalue of the unit disk: j'_{1,1}² ≈ 3.3899
        assert!((p.mu1 - 3.3899).abs() < 0.1, "mu1 = {}", p.mu1);
    }
}
