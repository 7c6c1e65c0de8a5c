//! Closed-form single-mode solutions on concentric disks with isotropic
//! conductivities `M_i = σ_i I`, `M_e = σ_e I`, `M_b = σ_b I`.
//!
//! Data are one angular mode: `f0 = A cos mθ`, `f1 = B cos mθ` on the outer
//! circle, `f = 0` in the torso and `g = G r^m cos mθ` for the fourth-order
//! supplement `(Δ_e)² u_e = g`.
//!
//! * torso: `u_b = (c1 r^m + c2 r^{-m}) cos mθ` (`c1 + c2 log r` for `m = 0`);
//! * heart, extracellular: `u_e = (a r^m + b r^{m+2} + P r^{m+4}) cos mθ`;
//! * heart, intracellular: `u_i = −(α_e/α_i)(σ_e/σ_i) u_e + d r^m cos mθ + const`,
//!   normalized like the Neumann operator and shifted by `h0 = −c0 · mean(u_b)`.

use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::field::ScalarField;
use crate::mesh::Point;
use crate::transmission::{PotentialTriple, TransmissionCoefficients};

/// Highest mode evaluated; `r^{-m}` over- or underflows well before this.
pub const MAX_MODE: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeAmplitudes {
    /// Dirichlet amplitude `A` on the outer circle.
    pub f0: f64,
    /// Conormal amplitude `B` on the outer circle.
    pub f1: f64,
    /// Amplitude `G` of the fourth-order source.
    pub g: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsotropicConductivities {
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub sigma_b: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralDiskOracle {
    m: usize,
    r_inner: f64,
    sig: IsotropicConductivities,
    c1: f64,
    c2: f64,
    a: f64,
    b: f64,
    p: f64,
    /// `u_i` radial coefficients: `ke · u_e + d r^m` plus `shift`.
    ke: f64,
    d: f64,
    shift: f64,
    g: f64,
}

fn polar(x: Point) -> (f64, f64) {
    (x[0].hypot(x[1]), x[1].atan2(x[0]))
}

pub fn spectral_disk_oracle(
    m: usize,
    coeffs: &TransmissionCoefficients,
    sig: IsotropicConductivities,
    r_inner: f64,
    r_outer: f64,
    amp: ModeAmplitudes,
) -> Result<SpectralDiskOracle> {
    if m > MAX_MODE {
        return Err(Error::ModeUnsupported(m));
    }
    if coeffs.alpha_i == 0.0 {
        return Err(Error::AlphaIZero);
    }
    for (name, v) in [("sigma_i", sig.sigma_i), ("sigma_e", sig.sigma_e), ("sigma_b", sig.sigma_b)] {
        if !(v > 0.0) {
            return Err(Error::NotPositive(name.into()));
        }
    }
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(Error::InvalidGeometry(format!("need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")));
    }
    let mf = m as f64;
    let (r1, r2) = (r_inner, r_outer);
    // torso radial part
    let (c1, c2) = if m == 0 {
        let c2 = amp.f1 * r2 / sig.sigma_b;
        (amp.f0 - c2 * r2.ln(), c2)
    } else {
        let s = amp.f1 * r2 / (sig.sigma_b * mf);
        (0.5 * (amp.f0 + s) / r2.powi(m as i32), 0.5 * (amp.f0 - s) * r2.powi(m as i32))
    };
    let rb = |r: f64| if m == 0 { c1 + c2 * r.ln() } else { c1 * r.powi(m as i32) + c2 * r.powi(-(m as i32)) };
    let drb = |r: f64| {
        if m == 0 {
            c2 / r
        } else {
            mf * (c1 * r.powi(m as i32 - 1) - c2 * r.powi(-(m as i32) - 1))
        }
    };
    // torso-side conormal on the heart surface (normal pointing into the heart)
    let q = -sig.sigma_b * drb(r1);
    let p = amp.g / (sig.sigma_e * sig.sigma_e * (8.0 * mf + 16.0) * (4.0 * mf + 4.0));
    let u = rb(r1) - p * r1.powi(m as i32 + 4);
    let v = coeffs.beta_e * q / sig.sigma_e - (mf + 4.0) * p * r1.powi(m as i32 + 3);
    let b = (v - mf * u / r1) / (2.0 * r1.powi(m as i32 + 1));
    let a = (u - b * r1.powi(m as i32 + 2)) / r1.powi(m as i32);

    let ratio = coeffs.alpha_e / coeffs.alpha_i;
    let ke = -ratio * sig.sigma_e / sig.sigma_i;
    let flux = (coeffs.beta_i + ratio * coeffs.beta_e) * q;
    let d = if m == 0 {
        let scale = (coeffs.beta_i.abs() + ratio.abs() * coeffs.beta_e.abs()) * q.abs();
        if flux.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::IncompatibleData { defect: flux.abs(), allowed: 1e-12 * scale });
        }
        0.0
    } else {
        flux / (sig.sigma_i * mf * r1.powi(m as i32 - 1))
    };
    let mut oracle = SpectralDiskOracle { m, r_inner, sig, c1, c2, a, b, p, ke, d, shift: 0.0, g: amp.g };
    // Neumann normalization (zero mean on the heart surface) plus calibration.
    let (mean_ui, mean_ub) = if m == 0 { (ke * oracle.ue_radial(r1), rb(r1)) } else { (0.0, 0.0) };
    oracle.shift = -mean_ui - coeffs.c0 * mean_ub;
    Ok(oracle)
}

impl SpectralDiskOracle {
    pub fn mode(&self) -> usize {
        self.m
    }

    fn ub_radial(&self, r: f64) -> (f64, f64) {
        let m = self.m as i32;
        if self.m == 0 {
            (self.c1 + self.c2 * r.ln(), self.c2 / r)
        } else {
            let mf = self.m as f64;
            (
                self.c1 * r.powi(m) + self.c2 * r.powi(-m),
                mf * (self.c1 * r.powi(m - 1) - self.c2 * r.powi(-m - 1)),
            )
        }
    }

    fn ue_radial(&self, r: f64) -> f64 {
        let m = self.m as i32;
        self.a * r.powi(m) + self.b * r.powi(m + 2) + self.p * r.powi(m + 4)
    }

    fn ue_radial_derivative(&self, r: f64) -> f64 {
        let m = self.m as i32;
        let mf = self.m as f64;
        let lead = if self.m == 0 { 0.0 } else { mf * self.a * r.powi(m - 1) };
        lead + (mf + 2.0) * self.b * r.powi(m + 1) + (mf + 4.0) * self.p * r.powi(m + 3)
    }

    fn angular(&self, theta: f64) -> (f64, f64) {
        let mf = self.m as f64;
        ((mf * theta).cos(), -mf * (mf * theta).sin())
    }

    /// Gradient of `R(r) cos mθ` from `R`, `R'`.
    fn cartesian_grad(&self, x: Point, rr: f64, drr: f64) -> [f64; 2] {
        let (r, th) = polar(x);
        let (c, dc) = self.angular(th);
        if r == 0.0 {
            return if self.m == 1 { [drr, 0.0] } else { [0.0, 0.0] };
        }
        let (gr, gt) = (drr * c, rr * dc / r);
        [gr * th.cos() - gt * th.sin(), gr * th.sin() + gt * th.cos()]
    }

    pub fn u_b(&self, x: Point) -> f64 {
        let (r, th) = polar(x);
        self.ub_radial(r).0 * self.angular(th).0
    }

    pub fn grad_u_b(&self, x: Point) -> [f64; 2] {
        let (r, _) = polar(x);
        let (rr, drr) = self.ub_radial(r);
        self.cartesian_grad(x, rr, drr)
    }

    pub fn u_e(&self, x: Point) -> f64 {
        let (r, th) = polar(x);
        self.ue_radial(r) * self.angular(th).0
    }

    pub fn grad_u_e(&self, x: Point) -> [f64; 2] {
        let (r, _) = polar(x);
        self.cartesian_grad(x, self.ue_radial(r), self.ue_radial_derivative(r))
    }

    pub fn u_i(&self, x: Point) -> f64 {
        let (r, th) = polar(x);
        let m = self.m as i32;
        (self.ke * self.ue_radial(r) + self.d * r.powi(m)) * self.angular(th).0 + self.shift
    }

    /// Fourth-order source `g = G r^m cos mθ`.
    pub fn source(&self, x: Point) -> f64 {
        let (r, th) = polar(x);
        self.g * r.powi(self.m as i32) * self.angular(th).0
    }

    /// `σ_e ν·∇u_e` for the given normal.
    pub fn conormal_u_e(&self, x: Point, normal: [f64; 2]) -> f64 {
        let g = self.grad_u_e(x);
        self.sig.sigma_e * (g[0] * normal[0] + g[1] * normal[1])
    }

    /// `σ_b ν·∇u_b` for the given normal.
    pub fn conormal_u_b(&self, x: Point, normal: [f64; 2]) -> f64 {
        let g = self.grad_u_b(x);
        self.sig.sigma_b * (g[0] * normal[0] + g[1] * normal[1])
    }

    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }

    /// Nodal samples of the three potentials.
    pub fn triple(&self, heart: &P1Space, torso: &P1Space) -> PotentialTriple {
        PotentialTriple {
            u_i: ScalarField::interpolate(heart, |x| self.u_i(x)),
            u_e: ScalarField::interpolate(heart, |x| self.u_e(x)),
            u_b: ScalarField::interpolate(torso, |x| self.u_b(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs() -> TransmissionCoefficients {
        TransmissionCoefficients { alpha_i: 1.0, alpha_e: 0.7, beta_e: -1.0, beta_i: 0.3, gamma: 1.0, c0: 0.4 }
    }

    const SIG: IsotropicConductivities = IsotropicConductivities { sigma_i: 1.3, sigma_e: 0.8, sigma_b: 2.0 };

    /// Five-point Laplacian of `f` at `x` with step `h`.
    fn laplacian(f: &dyn Fn(Point) -> f64, x: Point, h: f64) -> f64 {
        let c = [(1.0, -1.0 / 12.0, 2.0), (1.0, 4.0 / 3.0, 1.0)];
        let mut s = -5.0 * f(x);
        for &(_, w, k) in &c {
            for d in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
                s += w * f([x[0] + k * h * d[0], x[1] + k * h * d[1]]);
            }
        }
        s / (h * h)
    }

    #[test]
    fn radial_solutions_satisfy_their_equations() {
        for m in 0..4 {
            let amp = ModeAmplitudes { f0: 0.7, f1: if m == 0 { 0.0 } else { -0.4 }, g: 1.5 };
            let o = spectral_disk_oracle(m, &coeffs(), SIG, 1.0, 2.0, amp).unwrap();
            let x = [1.5 * 0.3f64.cos(), 1.5 * 0.3f64.sin()];
            assert!(laplacian(&|p| o.u_b(p), x, 1e-3).abs() < 1e-6, "u_b harmonic, m={m}");
            // Δ²u_e = g / σ_e² at an interior point
            let y = [0.3, 0.2];
            let lap = |p: Point| laplacian(&|q| o.u_e(q), p, 1e-2);
            let bi = laplacian(&lap, y, 1e-2);
            assert!((bi - o.source(y) / (SIG.sigma_e * SIG.sigma_e)).abs() < 1e-4 * (1.0 + o.source(y).abs()), "m={m} {bi}");
            // outer boundary data
            let z = [2.0 * 0.9f64.cos(), 2.0 * 0.9f64.sin()];
            let nz = [0.9f64.cos(), 0.9f64.sin()];
            assert!((o.u_b(z) - 0.7 * (m as f64 * 0.9).cos()).abs() < 1e-12);
            assert!((o.conormal_u_b(z, nz) - amp.f1 * (m as f64 * 0.9).cos()).abs() < 1e-12);
            // heart surface transmission conditions
            let w = [0.4f64.cos(), 0.4f64.sin()];
            assert!((o.u_e(w) - o.u_b(w)).abs() < 1e-12);
            let inward = [-w[0], -w[1]];
            let outward = w;
            assert!((o.conormal_u_e(w, outward) - coeffs().beta_e * o.conormal_u_b(w, inward)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_fields() {
        let zero = ModeAmplitudes { f0: 0.0, f1: 0.0, g: 0.0 };
        let o = spectral_disk_oracle(2, &coeffs(), SIG, 1.0, 2.0, zero).unwrap();
        for x in [[0.2, 0.1], [1.5, -0.3]] {
            assert_eq!((o.u_b(x), o.u_e(x), o.u_i(x)), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn unsupported_modes_are_rejected() {
        let amp = ModeAmplitudes { f0: 1.0, f1: 0.0, g: 0.0 };
        assert!(matches!(spectral_disk_oracle(MAX_MODE + 1, &coeffs(), SIG, 1.0, 2.0, amp), Err(Error::ModeUnsupported(_))));
    }
}
