//! Smooth torus deformations: stretch along x, bend about y, twist about x.
//!
//! The full warp is twist(bend(stretch(p))). Each stage has an analytic
//! Jacobian; the chain product gives exact normals via the cofactor matrix.
//! det J = s * (1 + b * z) for a rest point with height z, so the warp is
//! orientation-preserving (genus is preserved) whenever that stays positive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::vec3::{cofactor, mat_mul, mat_vec, normalized, Mat3, Point3};

pub const STRETCH_RANGE: (f64, f64) = (0.7, 1.4);
pub const BEND_RANGE: (f64, f64) = (-0.8, 0.8);
pub const TWIST_RANGE: (f64, f64) = (-1.2, 1.2);

/// Deformation state at one time sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    /// Scale along x, dimensionless.
    pub stretch: f64,
    /// Bend curvature about y, radians per unit length.
    pub bend: f64,
    /// Twist rate about x, radians per unit length.
    pub twist: f64,
}

impl DeformationParams {
    pub const IDENTITY: DeformationParams = DeformationParams {
        stretch: 1.0,
        bend: 0.0,
        twist: 0.0,
    };
}

/// sin(u)/u, exact 1 at u = 0.
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// (cos(u) - 1)/u, exact 0 at u = 0.
fn cosm1_over(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        -u / 2.0 + u * u * u / 24.0
    } else {
        (u.cos() - 1.0) / u
    }
}

/// Warp a rest point: stretch, then bend the x-axis into an arc in the
/// xz-plane, then twist the cross-section about x.
pub fn warp_point(params: &DeformationParams, p: Point3) -> Point3 {
    let (s, b, tau) = (params.stretch, params.bend, params.twist);
    // stretch
    let (x, y, z) = (s * p[0], p[1], p[2]);
    // bend: x' = x sinc(bx) + z sin(bx), z' = x cosm1_over(bx) + z cos(bx)
    let bx = b * x;
    let xb = x * sinc(bx) + z * bx.sin();
    let zb = x * cosm1_over(bx) + z * bx.cos();
    // twist about x by angle tau * x (post-bend x)
    let psi = tau * xb;
    let (sp, cp) = psi.sin_cos();
    [xb, y * cp - zb * sp, y * sp + zb * cp]
}

/// Analytic Jacobian of [`warp_point`] at rest point `p`, as the chain
/// product of the three stage Jacobians.
pub fn warp_jacobian(params: &DeformationParams, p: Point3) -> Mat3 {
    let (s, b, tau) = (params.stretch, params.bend, params.twist);
    let j_stretch = [[s, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    let (x, y, z) = (s * p[0], p[1], p[2]);
    let bx = b * x;
    let (sb, cb) = bx.sin_cos();
    let j_bend = [
        [(1.0 + b * z) * cb, 0.0, sb],
        [0.0, 1.0, 0.0],
        [-(1.0 + b * z) * sb, 0.0, cb],
    ];

    let xb = x * sinc(bx) + z * sb;
    let zb = x * cosm1_over(bx) + z * cb;
    let psi = tau * xb;
    let (sp, cp) = psi.sin_cos();
    // y'' = y cos(psi) - zb sin(psi); z'' = y sin(psi) + zb cos(psi)
    let y2 = y * cp - zb * sp;
    let z2 = y * sp + zb * cp;
    let j_twist = [
        [1.0, 0.0, 0.0],
        [-tau * z2, cp, -sp],
        [tau * y2, sp, cp],
    ];

    mat_mul(&j_twist, &mat_mul(&j_bend, &j_stretch))
}

/// det of the warp Jacobian; closed form `s * (1 + b * z)`.
pub fn warp_det(params: &DeformationParams, p: Point3) -> f64 {
    params.stretch * (1.0 + params.bend * p[2])
}

/// Transform a rest normal by the cofactor of the warp Jacobian and
/// renormalize. Valid for material surface normals under any invertible
/// warp.
pub fn warp_normal(params: &DeformationParams, p: Point3, n_rest: Point3) -> Point3 {
    let j = warp_jacobian(params, p);
    let c = cofactor(&j);
    normalized(mat_vec(&c, n_rest)).expect("cofactor normal degenerate")
}

/// One sinusoidal term of a parameter trajectory over normalized time.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// Cycles over the unit time interval.
    pub frequency: f64,
    pub phase: f64,
}

/// Sum of up to three low-frequency sinusoids around a center value.
/// C1-smooth in t by construction; amplitudes are budgeted so the value
/// stays inside the parameter range.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamTrajectory {
    pub center: f64,
    pub terms: Vec<Sinusoid>,
}

impl ParamTrajectory {
    pub fn value(&self, t: f64) -> f64 {
        let mut v = self.center;
        for s in &self.terms {
            v += s.amplitude * (std::f64::consts::TAU * s.frequency * t + s.phase).sin();
        }
        v
    }

    /// Random trajectory confined to [lo, hi]: center at the midpoint,
    /// total amplitude at most 90% of the half-range.
    pub fn sample(rng: &mut impl Rng, lo: f64, hi: f64) -> ParamTrajectory {
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let n_terms = rng.gen_range(1..=3usize);
        let fractions: Vec<f64> = (0..n_terms).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = fractions.iter().sum();
        let budget = 0.9 * half;
        let terms = fractions
            .into_iter()
            .map(|f| Sinusoid {
                amplitude: budget * f / total,
                frequency: rng.gen_range(0.25..1.0),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        ParamTrajectory { center, terms }
    }
}

/// The three parameter trajectories of one sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeformationTrajectory {
    pub stretch: ParamTrajectory,
    pub bend: ParamTrajectory,
    pub twist: ParamTrajectory,
}

impl DeformationTrajectory {
    pub fn sample(rng: &mut impl Rng) -> DeformationTrajectory {
        DeformationTrajectory {
            stretch: ParamTrajectory::sample(rng, STRETCH_RANGE.0, STRETCH_RANGE.1),
            bend: ParamTrajectory::sample(rng, BEND_RANGE.0, BEND_RANGE.1),
            twist: ParamTrajectory::sample(rng, TWIST_RANGE.0, TWIST_RANGE.1),
        }
    }

    pub fn at(&self, t: f64) -> DeformationParams {
        DeformationParams {
            stretch: self.stretch.value(t),
            bend: self.bend.value(t),
            twist: self.twist.value(t),
        }
    }
}
