//! Cube coordinates, the mollifier `ψ_ε`, the smooth step `Θ_reg` and the
//! boundary-defining functions `ρ_{F,ε}` with their signed extensions.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::signature::{facets, Anchor, Facet, Group, IndexMask, Sheet, Signature};

/// A point of the closed unit cube in `a`-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CubePoint {
    pub a: Vec<f64>,
}

impl CubePoint {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument(format!("cube point {a:?} leaves [0,1]^N")));
        }
        Ok(CubePoint { a })
    }

    pub fn center(dim: usize) -> Self {
        CubePoint { a: vec![0.5; dim] }
    }

    pub fn is_interior(&self) -> bool {
        self.a.iter().all(|&v| v > 0.0 && v < 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierParams {
    pub eps: f64,
}

impl MollifierParams {
    pub const DEFAULT_EPS: f64 = 0.05;

    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.1) {
            return Err(Error::InvalidArgument(format!("mollifier eps {eps} outside (0, 1/10]")));
        }
        Ok(MollifierParams { eps })
    }
}

impl Default for MollifierParams {
    fn default() -> Self {
        MollifierParams { eps: Self::DEFAULT_EPS }
    }
}

/// `x = to_x(a)`: `1 - 1/a` on I1, `a` on I2, `1/(1-a)` on I3.
pub fn to_x(sig: &Signature, p: &CubePoint) -> Vec<f64> {
    p.a.iter()
        .enumerate()
        .map(|(j, &a)| match sig.group(j) {
            Group::I1 => 1.0 - 1.0 / a,
            Group::I2 => a,
            Group::I3 => 1.0 / (1.0 - a),
        })
        .collect()
}

/// Inverse of [`to_x`].
pub fn from_x(sig: &Signature, x: &[f64]) -> Result<CubePoint> {
    let a = x
        .iter()
        .enumerate()
        .map(|(j, &x)| match sig.group(j) {
            Group::I1 => 1.0 / (1.0 - x),
            Group::I2 => x,
            Group::I3 => (x - 1.0) / x,
        })
        .collect();
    CubePoint::new(a)
}

const BUMP_LOWER: f64 = -3.5;
const BUMP_NODES: usize = 32;
/// Intervals of the Hermite table on `[-1, 0]`.
const BUMP_INTERVALS: usize = 4096;

struct BumpTable {
    norm: f64,
    /// Raw moments at `u_i = -1 + i / BUMP_INTERVALS`.
    m0: Vec<f64>,
    m1: Vec<f64>,
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_table() -> &'static BumpTable {
    static TABLE: OnceLock<BumpTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (nodes, weights) = crate::quad::gauss_legendre(BUMP_NODES);
        let (mut m0, mut m1) = (Vec::new(), Vec::new());
        for i in 0..=BUMP_INTERVALS {
            let u = -1.0 + i as f64 / BUMP_INTERVALS as f64;
            let (a, b) = bump_moments_quadrature(&nodes, &weights, u);
            m0.push(a);
            m1.push(b);
        }
        BumpTable { norm: 2.0 * m0[BUMP_INTERVALS], m0, m1 }
    })
}

/// `(∫_{-1}^{u} b, ∫_{-1}^{u} s b)` for `u ≤ 0`, with `b(s) = e^{-1/(1-s²)}`,
/// integrated after the substitution `s = tanh w`.
fn bump_moments_quadrature(nodes: &[f64], weights: &[f64], u: f64) -> (f64, f64) {
    if u <= -1.0 {
        return (0.0, 0.0);
    }
    let upper = u.atanh();
    if upper <= BUMP_LOWER {
        return (0.0, 0.0);
    }
    let mid = 0.5 * (upper + BUMP_LOWER);
    let half = 0.5 * (upper - BUMP_LOWER);
    let (mut m0, mut m1) = (0.0, 0.0);
    for (x, w) in nodes.iter().zip(weights) {
        let v = mid + half * x;
        let c = v.cosh();
        let f = (-c * c).exp() / (c * c);
        m0 += w * f;
        m1 += w * f * v.tanh();
    }
    (half * m0, half * m1)
}

/// Cubic Hermite lookup of the raw moments; the derivatives `b(u)` and `u b(u)` are exact.
fn bump_moments(t: &BumpTable, u: f64) -> (f64, f64) {
    if u <= -1.0 {
        return (0.0, 0.0);
    }
    let x = (u + 1.0) * BUMP_INTERVALS as f64;
    let i = (x.floor() as usize).min(BUMP_INTERVALS - 1);
    let s = x - i as f64;
    let h = 1.0 / BUMP_INTERVALS as f64;
    let (u0, u1) = (-1.0 + i as f64 * h, -1.0 + (i + 1) as f64 * h);
    let (b0, b1) = (bump(u0), bump(u1));
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let m0 = h00 * t.m0[i] + h10 * h * b0 + h01 * t.m0[i + 1] + h11 * h * b1;
    let m1 = h00 * t.m1[i] + h10 * h * u0 * b0 + h01 * t.m1[i + 1] + h11 * h * u1 * b1;
    (m0, m1)
}

/// Normalized moments `(∫_{-1}^{u} b / Z, ∫_{-1}^{u} s b / Z)` for any `u ∈ [-1, 1]`.
fn normalized_moments(u: f64) -> (f64, f64) {
    let t = bump_table();
    if u <= 0.0 {
        let (m0, m1) = bump_moments(t, u);
        (m0 / t.norm, m1 / t.norm)
    } else {
        let (m0, m1) = bump_moments(t, -u);
        (1.0 - m0 / t.norm, m1 / t.norm)
    }
}

/// Smooth step: 0 for `t ≤ -2`, 1 for `t ≥ 0`, the normalized bump integral in between.
pub fn theta_reg(t: f64) -> f64 {
    if t <= -2.0 {
        0.0
    } else if t >= 0.0 {
        1.0
    } else {
        // The tabulated moments can undershoot by round-off in the flat tails.
        normalized_moments(t + 1.0).0.clamp(0.0, 1.0)
    }
}

/// `∫_{-2}^{v} Θ_reg`, clamped to the transition interval.
fn theta_reg_integral(v: f64) -> f64 {
    if v <= -2.0 {
        return 0.0;
    }
    if v >= 0.0 {
        return 1.0 + v;
    }
    let (m0, m1) = normalized_moments(v + 1.0);
    v * m0 - (m1 - m0)
}

/// The mollifier `ψ_ε`.
///
/// `ψ_ε(t) = t - ∫_{1-3ε}^{t} Θ_reg((s - (1-3ε))/ε - 2) ds`, which is the identity up to
/// `1 - 3ε`, constant `1 - 2ε` from `1 - ε` on, nondecreasing and never above `t`.
pub fn psi_eps(mp: &MollifierParams, t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("psi_eps needs t >= 0, got {t}")));
    }
    Ok(psi_unchecked(mp.eps, t))
}

#[inline]
pub(crate) fn psi_unchecked(eps: f64, t: f64) -> f64 {
    let t0 = 1.0 - 3.0 * eps;
    if t <= t0 {
        t
    } else if t >= 1.0 - eps {
        1.0 - 2.0 * eps
    } else {
        t - eps * theta_reg_integral((t - t0) / eps - 2.0)
    }
}

/// Superset expansion of one facet's boundary-defining function.
#[derive(Debug, Clone)]
struct RhoTerm {
    anchor_slot: usize,
    /// `(S0, exponent)` with exponent `(-1)^{|S| - |S0|}`.
    supersets: Vec<(IndexMask, f64)>,
    subset: IndexMask,
}

/// Precomputed facet tables for one signature and mollifier width.
#[derive(Debug, Clone)]
pub struct Geometry {
    sig: Signature,
    mp: MollifierParams,
    facets: Vec<Facet>,
    terms: Vec<RhoTerm>,
    pools: [(IndexMask, IndexMask); 3],
    lower: Vec<Vec<usize>>,
    upper: Vec<Vec<usize>>,
}

fn anchor_slot(a: Anchor) -> usize {
    match a {
        Anchor::Zero => 0,
        Anchor::One => 1,
        Anchor::Infinity => 2,
    }
}

impl Geometry {
    pub fn new(sig: &Signature, mp: MollifierParams) -> Self {
        let facets = facets(sig);
        let pools = [
            sig.pools(Anchor::Zero),
            sig.pools(Anchor::One),
            sig.pools(Anchor::Infinity),
        ];
        let terms = facets
            .iter()
            .map(|f| {
                let pool = sig.pool(f.anchor);
                let supersets = (1..=pool)
                    .filter(|s0| s0 & !pool == 0 && s0 & f.subset == f.subset)
                    .map(|s0| {
                        let diff = (s0.count_ones() - f.subset.count_ones()) as i32;
                        (s0, if diff % 2 == 0 { 1.0 } else { -1.0 })
                    })
                    .collect();
                RhoTerm { anchor_slot: anchor_slot(f.anchor), supersets, subset: f.subset }
            })
            .collect();
        let d = sig.dim();
        let pick = |anchor_of: &dyn Fn(usize) -> Anchor| -> Vec<Vec<usize>> {
            (0..d)
                .map(|j| {
                    facets
                        .iter()
                        .enumerate()
                        .filter(|(_, f)| f.anchor == anchor_of(j) && f.contains(j))
                        .map(|(i, _)| i)
                        .collect()
                })
                .collect()
        };
        let lower = pick(&|j| sig.lower_anchor(j));
        let upper = pick(&|j| sig.upper_anchor(j));
        Geometry { sig: *sig, mp, facets, terms, pools, lower, upper }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn mollifier(&self) -> MollifierParams {
        self.mp
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet_index(&self, facet: &Facet) -> Result<usize> {
        self.facets
            .iter()
            .position(|f| f == facet)
            .ok_or_else(|| Error::InvalidArgument(format!("{facet} is not a facet of {}", self.sig)))
    }

    /// Facets whose product recovers `ψ_ε(a_j)` (anchor reached at `a_j = 0`).
    pub fn lower_facets(&self, j: usize) -> &[usize] {
        &self.lower[j]
    }

    /// Facets whose product recovers `ψ_ε(1 - a_j)` (anchor reached at `a_j = 1`).
    pub fn upper_facets(&self, j: usize) -> &[usize] {
        &self.upper[j]
    }

    /// Evaluates every `ρ_F` at `a` (canonical facet order) in log space.
    pub fn rho_all(&self, a: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.sig.dim();
        let eps = self.mp.eps;
        let mut lo = [0.0f64; crate::signature::MAX_DIM];
        let mut hi = [0.0f64; crate::signature::MAX_DIM];
        for j in 0..d {
            if !(0.0..=1.0).contains(&a[j]) {
                return Err(Error::Domain(format!("coordinate a_{} = {} outside [0,1]", j + 1, a[j])));
            }
            let l = psi_unchecked(eps, a[j]);
            let h = psi_unchecked(eps, 1.0 - a[j]);
            lo[j] = l * l;
            hi[j] = h * h;
        }
        let size = 1usize << d;
        let mut logq = [[0.0f64; 1 << crate::signature::MAX_DIM]; 3];
        for (slot, &(p1, p2)) in self.pools.iter().enumerate() {
            let pool = p1 | p2;
            let mut q = [0.0f64; 1 << crate::signature::MAX_DIM];
            for s in 1..size {
                let s = s as IndexMask;
                if s & !pool != 0 {
                    continue;
                }
                let low = s.trailing_zeros() as usize;
                let rest = s & (s - 1);
                let term = if p1 & (1 << low) != 0 { hi[low] } else { lo[low] };
                q[s as usize] = q[rest as usize] + term;
                logq[slot][s as usize] = q[s as usize].ln();
            }
        }
        for (i, t) in self.terms.iter().enumerate() {
            let lq = &logq[t.anchor_slot];
            if lq[t.subset as usize] == f64::NEG_INFINITY {
                if t.supersets.iter().any(|&(s0, _)| s0 != t.subset && lq[s0 as usize] == f64::NEG_INFINITY) {
                    return Err(Error::Domain(format!(
                        "rho for {} is 0/0 at corner point {a:?}",
                        self.facets[i]
                    )));
                }
                out[i] = 0.0;
                continue;
            }
            let s: f64 = t.supersets.iter().map(|&(s0, e)| e * lq[s0 as usize]).sum();
            out[i] = (0.5 * s).exp();
        }
        Ok(())
    }

    /// Maximum violation of the product identities recovering `ψ_ε(a_j)` and `ψ_ε(1 - a_j)`.
    pub fn product_identity_residual(&self, p: &CubePoint) -> Result<f64> {
        let mut rho = vec![0.0; self.facets.len()];
        self.rho_all(&p.a, &mut rho)?;
        let mut worst = 0.0f64;
        for (j, &a) in p.a.iter().enumerate() {
            let lower: f64 = self.lower[j].iter().map(|&i| rho[i]).product();
            let upper: f64 = self.upper[j].iter().map(|&i| rho[i]).product();
            worst = worst.max((psi_unchecked(self.mp.eps, a) - lower).abs());
            worst = worst.max((psi_unchecked(self.mp.eps, 1.0 - a) - upper).abs());
        }
        Ok(worst)
    }
}

/// `ρ_{F,ε}(p)`.
pub fn rho(sig: &Signature, mp: &MollifierParams, facet: &Facet, p: &CubePoint) -> Result<f64> {
    let g = Geometry::new(sig, *mp);
    let idx = g.facet_index(facet)?;
    let mut out = vec![0.0; g.facets().len()];
    g.rho_all(&p.a, &mut out)?;
    Ok(out[idx])
}

/// `ρ̃_{F,ε}`: `-ρ` when the facet is flipped in `sheet`, `+ρ` otherwise.
pub fn rho_signed(
    sig: &Signature,
    mp: &MollifierParams,
    facet: &Facet,
    p: &CubePoint,
    sheet: &Sheet,
) -> Result<f64> {
    let g = Geometry::new(sig, *mp);
    let idx = g.facet_index(facet)?;
    let mut out = vec![0.0; g.facets().len()];
    g.rho_all(&p.a, &mut out)?;
    Ok(if sheet.contains(idx) { -out[idx] } else { out[idx] })
}

/// Self-test of the product identities at an interior point.
pub fn check_product_identity(sig: &Signature, mp: &MollifierParams, p: &CubePoint) -> Result<f64> {
    Geometry::new(sig, *mp).product_identity_residual(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_table_matches_quadrature() {
        let (nodes, weights) = crate::quad::gauss_legendre(BUMP_NODES);
        let t = bump_table();
        for k in 0..997 {
            let u = -1.0 + (k as f64 + 0.37) / 997.0;
            let (a, b) = bump_moments(t, u);
            let (qa, qb) = bump_moments_quadrature(&nodes, &weights, u);
            assert!((a - qa).abs() < 1e-14 && (b - qb).abs() < 1e-14, "{u}: {a} {qa} {b} {qb}");
        }
    }

    #[test]
    fn theta_midpoint_is_half() {
        assert!((theta_reg(-1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn psi_plateau_is_reached_continuously() {
        let mp = MollifierParams::default();
        let below = psi_unchecked(mp.eps, 1.0 - mp.eps - 1e-12);
        assert!((below - 0.9).abs() < 1e-11);
    }

    #[test]
    fn theta_integral_endpoint() {
        assert!((theta_reg_integral(-1e-14) - 1.0).abs() < 1e-12);
        assert!(theta_reg_integral(-2.0 + 1e-9).abs() < 1e-12);
    }
}
