//! The Pochhammer smoothing `P_{δ,ε}`, the stitched functions `A_j°`, the twist and the
//! fractional-linear maps to `Z_j`, plus runtime validation of the resulting contour.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{theta_reg, CubePoint, Geometry, MollifierParams};
use crate::signature::{Group, Sheet, Signature, MAX_DIM};

/// Regularization knobs of the contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams {
    pub mollifier: MollifierParams,
    /// Pochhammer radius `δ`.
    pub delta: f64,
    /// Smoothing width of the Pochhammer blend, in `(0, δ/2)`.
    pub eps_p: f64,
    /// Twist scale `ϝ`; coordinate `j` (one-based) is rotated by `e^{ij/ϝ}`.
    pub digamma: f64,
    pub twist: TwistKind,
}

/// How the twist phase `e^{iϑ_j}`, `ϑ_j = j/ϝ`, is applied to `A_j°`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwistKind {
    /// `A_j = A_j° e^{iϑ} / (1 - A_j°(1 - e^{iϑ}))`: the Möbius map fixing 0 and 1 that rotates
    /// by `e^{iϑ}` at 0 and by `e^{-iϑ}` at 1, so same-group coordinates stay apart at both
    /// anchors.
    #[default]
    Mobius,
    /// `A_j = A_j° e^{iϑ}`. Kept for diagnostics: `Z_k - Z_j` acquires zeros in the anchor-1
    /// corner collars.
    Rotation,
}

impl ContourParams {
    pub fn new(mollifier: MollifierParams, delta: f64, eps_p: f64, digamma: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1/2)")));
        }
        if !(eps_p > 0.0 && eps_p < delta / 2.0) {
            return Err(Error::InvalidArgument(format!("eps_p {eps_p} outside (0, delta/2)")));
        }
        if !(digamma > 0.0 && digamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("twist scale {digamma} must be positive")));
        }
        Ok(ContourParams { mollifier, delta, eps_p, digamma, twist: TwistKind::Mobius })
    }

    /// `ε_P = δ/4` and `ϝ = 64 N`.
    pub fn with_delta(sig: &Signature, mollifier: MollifierParams, delta: f64) -> Result<Self> {
        Self::new(mollifier, delta, delta / 4.0, 64.0 * sig.dim() as f64)
    }

    pub fn with_twist(mut self, twist: TwistKind) -> Self {
        self.twist = twist;
        self
    }
}

/// `P_{δ,ε}(r) = Θ_reg((|r| - δ)/ε)|r| + (1 - Θ_reg((|r| - δ)/ε)) δ e^{iπ(1 - r/δ)}`.
pub fn pochhammer_p(cp: &ContourParams, r: f64) -> Complex64 {
    let ar = r.abs();
    if ar >= cp.delta {
        return Complex64::new(ar, 0.0);
    }
    let th = theta_reg((ar - cp.delta) / cp.eps_p);
    let circle = Complex64::from_polar(cp.delta, PI * (1.0 - r / cp.delta));
    th * ar + (1.0 - th) * circle
}

/// Contour evaluator with precomputed facet tables and twist phases.
#[derive(Debug, Clone)]
pub struct Contour {
    sig: Signature,
    cp: ContourParams,
    geom: Geometry,
    twist: Vec<Complex64>,
    /// `1 - e^{iϑ_j}` computed without cancellation.
    one_minus_twist: Vec<Complex64>,
}

/// Values of the `2N + N(N-1)/2` integrand factors plus the raw `Z_j`.
#[derive(Debug, Clone, Copy)]
pub struct FactorValues {
    pub dim: usize,
    pub z: [Complex64; MAX_DIM],
    /// Factor order: `z_j`, then `1 - z_j`, then `z_k - z_j` for `j < k`.
    pub factors: [Complex64; 2 * MAX_DIM + MAX_DIM * (MAX_DIM - 1) / 2],
    pub count: usize,
}

impl FactorValues {
    pub fn factors(&self) -> &[Complex64] {
        &self.factors[..self.count]
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z[..self.dim]
    }
}

impl Contour {
    pub fn new(sig: &Signature, cp: ContourParams) -> Self {
        let geom = Geometry::new(sig, cp.mollifier);
        let twist = (0..sig.dim())
            .map(|j| Complex64::from_polar(1.0, (j + 1) as f64 / cp.digamma))
            .collect();
        let one_minus_twist = (0..sig.dim())
            .map(|j| {
                let t = (j + 1) as f64 / cp.digamma;
                Complex64::new(0.0, -2.0 * (0.5 * t).sin()) * Complex64::from_polar(1.0, 0.5 * t)
            })
            .collect();
        Contour { sig: *sig, cp, geom, twist, one_minus_twist }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn params(&self) -> &ContourParams {
        &self.cp
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn facet_count(&self) -> usize {
        self.geom.facets().len()
    }

    pub fn factor_count(&self) -> usize {
        2 * self.sig.dim() + self.sig.pair_count()
    }

    /// Signs `±1` of `ρ̃` for each facet on a sheet.
    pub fn sheet_signs(&self, sheet: Sheet) -> Vec<f64> {
        (0..self.facet_count()).map(|i| if sheet.contains(i) { -1.0 } else { 1.0 }).collect()
    }

    /// Evaluates `ρ_F` at `a` into `rho` (canonical facet order).
    pub fn rho(&self, a: &[f64], rho: &mut [f64]) -> Result<()> {
        self.geom.rho_all(a, rho)
    }

    /// `(A_j°, 1 - A_j°, upper)` from precomputed `ρ` values and per-facet multipliers;
    /// `upper` records which product was used.
    fn a_circ_parts(&self, j: usize, a_j: f64, rho: &[f64], signs: &[f64]) -> (Complex64, Complex64, bool) {
        let prod = |idx: &[usize]| {
            idx.iter()
                .fold(Complex64::new(1.0, 0.0), |acc, &i| acc * pochhammer_p(&self.cp, signs[i] * rho[i]))
        };
        if a_j < 0.5 {
            let lo = prod(self.geom.lower_facets(j));
            (lo, Complex64::new(1.0, 0.0) - lo, false)
        } else {
            let hi = prod(self.geom.upper_facets(j));
            (Complex64::new(1.0, 0.0) - hi, hi, true)
        }
    }

    /// `A_j` from `A_j°`.
    pub fn twisted(&self, j: usize, a0: Complex64) -> Complex64 {
        match self.cp.twist {
            TwistKind::Mobius => a0 * self.twist[j] / (1.0 - a0 * self.one_minus_twist[j]),
            TwistKind::Rotation => a0 * self.twist[j],
        }
    }

    /// Both case formulas for `A_j°`: `(product over lower facets, 1 - product over upper facets)`.
    pub fn a_circ_both(&self, p: &CubePoint, sheet: Sheet, j: usize) -> Result<(Complex64, Complex64)> {
        let mut rho = vec![0.0; self.facet_count()];
        self.rho(&p.a, &mut rho)?;
        let signs = self.sheet_signs(sheet);
        let (lo, _, _) = self.a_circ_parts(j, 0.0, &rho, &signs);
        let (hi, _, _) = self.a_circ_parts(j, 1.0, &rho, &signs);
        Ok((lo, hi))
    }

    /// Factor values at `a` given `ρ` and per-facet sign multipliers.
    pub fn factors_with(&self, a: &[f64], rho: &[f64], signs: &[f64]) -> FactorValues {
        let d = self.sig.dim();
        let one = Complex64::new(1.0, 0.0);
        let mut out = FactorValues {
            dim: d,
            z: [Complex64::new(0.0, 0.0); MAX_DIM],
            factors: [Complex64::new(0.0, 0.0); 2 * MAX_DIM + MAX_DIM * (MAX_DIM - 1) / 2],
            count: self.factor_count(),
        };
        for j in 0..d {
            let (a0, b0, upper) = self.a_circ_parts(j, a[j], rho, signs);
            let (a_tw, b_tw) = match self.cp.twist {
                TwistKind::Mobius => {
                    let den = one - a0 * self.one_minus_twist[j];
                    (a0 * self.twist[j] / den, b0 / den)
                }
                TwistKind::Rotation => {
                    let a_tw = a0 * self.twist[j];
                    // 1 - A°e^{iϑ} = (1 - e^{iϑ}) + (1 - A°)e^{iϑ}, exact when 1 - A° is tiny.
                    let b_tw = if upper { self.one_minus_twist[j] + b0 * self.twist[j] } else { one - a_tw };
                    (a_tw, b_tw)
                }
            };
            let (z, omz) = match self.sig.group(j) {
                Group::I1 => (-b_tw / a_tw, one / a_tw),
                Group::I2 => (a_tw, b_tw),
                Group::I3 => (one / b_tw, -a_tw / b_tw),
            };
            out.z[j] = z;
            out.factors[j] = z;
            out.factors[d + j] = omz;
        }
        let mut f = 2 * d;
        for j in 0..d {
            for k in j + 1..d {
                out.factors[f] = out.z[k] - out.z[j];
                f += 1;
            }
        }
        out
    }

    /// Factor values on a sheet.
    pub fn factors_on_sheet(&self, a: &[f64], sheet: Sheet) -> Result<FactorValues> {
        let mut rho = vec![0.0; self.facet_count()];
        self.rho(a, &mut rho)?;
        Ok(self.factors_with(a, &rho, &self.sheet_signs(sheet)))
    }
}

/// `A_j°` at `p` on `sheet`, using the `a_j < 1/2` case split.
pub fn a_circ(sig: &Signature, cp: &ContourParams, p: &CubePoint, sheet: Sheet, j: usize) -> Result<Complex64> {
    if !p.is_interior() {
        return Err(Error::Domain("a_circ needs an interior point".into()));
    }
    let c = Contour::new(sig, *cp);
    let mut rho = vec![0.0; c.facet_count()];
    c.rho(&p.a, &mut rho)?;
    Ok(c.a_circ_parts(j, p.a[j], &rho, &c.sheet_signs(sheet)).0)
}

/// A point of the regularizing contour.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPoint {
    pub z: Vec<Complex64>,
    /// The twisted values `A_j`.
    pub a_complex: Vec<Complex64>,
    pub sheet: Sheet,
    pub base: CubePoint,
}

const DEGENERACY_TOL: f64 = 1e-13;

/// Evaluates the contour map at `p` on `sheet`.
pub fn z_of(sig: &Signature, cp: &ContourParams, p: &CubePoint, sheet: Sheet) -> Result<ContourPoint> {
    if !p.is_interior() {
        return Err(Error::Domain("z_of needs an interior point".into()));
    }
    let c = Contour::new(sig, *cp);
    let mut rho = vec![0.0; c.facet_count()];
    c.rho(&p.a, &mut rho)?;
    let signs = c.sheet_signs(sheet);
    let fv = c.factors_with(&p.a, &rho, &signs);
    let a_complex = (0..sig.dim()).map(|j| c.twisted(j, c.a_circ_parts(j, p.a[j], &rho, &signs).0)).collect();
    let z = fv.z().to_vec();
    for (j, zj) in z.iter().enumerate() {
        if zj.norm() < DEGENERACY_TOL || (zj - 1.0).norm() < DEGENERACY_TOL {
            return Err(Error::ContourDegenerate(format!("Z_{} = {zj} hits 0 or 1", j + 1)));
        }
        for (k, zk) in z.iter().enumerate().skip(j + 1) {
            if (zk - zj).norm() < DEGENERACY_TOL * (1.0 + zj.norm()) {
                return Err(Error::ContourDegenerate(format!("Z_{} and Z_{} coincide", j + 1, k + 1)));
            }
        }
    }
    Ok(ContourPoint { z, a_complex, sheet, base: p.clone() })
}

/// Minima found by [`validate_contour`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub min_abs_z: f64,
    pub min_abs_z_minus_one: f64,
    /// `+∞` when `N = 1`.
    pub min_pair_separation: f64,
    pub points: usize,
    pub passed: bool,
}

const SEPARATION_FLOOR: f64 = 1e-10;

impl ValidationReport {
    fn empty() -> Self {
        ValidationReport {
            min_abs_z: f64::INFINITY,
            min_abs_z_minus_one: f64::INFINITY,
            min_pair_separation: f64::INFINITY,
            points: 0,
            passed: false,
        }
    }

    fn merge(self, o: Self) -> Self {
        ValidationReport {
            min_abs_z: self.min_abs_z.min(o.min_abs_z),
            min_abs_z_minus_one: self.min_abs_z_minus_one.min(o.min_abs_z_minus_one),
            min_pair_separation: self.min_pair_separation.min(o.min_pair_separation),
            points: self.points + o.points,
            passed: false,
        }
    }
}

/// Per-axis sample coordinates: a uniform midpoint grid plus points at `δ·{1/4, 1/2, 1, 2}`
/// from each face, where the collars are thinnest.
fn axis_samples(grid_density: usize, delta: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..grid_density).map(|k| (k as f64 + 0.5) / grid_density as f64).collect();
    for c in [0.25, 0.5, 1.0, 2.0] {
        let t = c * delta;
        if t < 0.5 {
            v.push(t);
            v.push(1.0 - t);
        }
    }
    v.sort_by(f64::total_cmp);
    v
}

/// Sweeps every sheet over a tensor grid and reports the separation minima.
pub fn validate_contour(sig: &Signature, cp: &ContourParams, grid_density: usize) -> Result<ValidationReport> {
    if grid_density < 8 {
        return Err(Error::InvalidArgument(format!("grid density {grid_density} < 8")));
    }
    let contour = Contour::new(sig, *cp);
    let d = sig.dim();
    let axis = axis_samples(grid_density, cp.delta);
    let per_axis = axis.len();
    let total = per_axis.pow(d as u32);
    let nf = contour.facet_count();
    if nf > 20 {
        return Err(Error::InvalidArgument(format!("{sig} has too many facets to validate")));
    }
    // Points are the outer loop so that the facet tables and ρ are computed once per point.
    let reports: Vec<Result<ValidationReport>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut a = [0.0; MAX_DIM];
            let mut r = idx;
            for slot in a.iter_mut().take(d) {
                *slot = axis[r % per_axis];
                r /= per_axis;
            }
            let a = &a[..d];
            let mut rho = vec![0.0; nf];
            contour.rho(a, &mut rho)?;
            // Sheets only differ on facets with ρ < δ; others give identical values.
            let active: Vec<usize> = (0..nf).filter(|&i| rho[i] < cp.delta).collect();
            let mut rep = ValidationReport::empty();
            let mut signs = vec![1.0; nf];
            for combo in 0..(1u64 << active.len()) {
                for (b, &i) in active.iter().enumerate() {
                    signs[i] = if combo & (1 << b) != 0 { -1.0 } else { 1.0 };
                }
                let fv = contour.factors_with(a, &rho, &signs);
                let z = fv.z();
                for j in 0..d {
                    rep.min_abs_z = rep.min_abs_z.min(z[j].norm());
                    rep.min_abs_z_minus_one = rep.min_abs_z_minus_one.min((z[j] - 1.0).norm());
                    for k in j + 1..d {
                        rep.min_pair_separation = rep.min_pair_separation.min((z[k] - z[j]).norm());
                    }
                }
                rep.points += 1;
            }
            Ok(rep)
        })
        .collect();
    let mut rep = ValidationReport::empty();
    for r in reports {
        rep = rep.merge(r?);
    }
    rep.passed = rep.min_abs_z > SEPARATION_FLOOR
        && rep.min_abs_z_minus_one > SEPARATION_FLOOR
        && rep.min_pair_separation > SEPARATION_FLOOR;
    Ok(rep)
}

/// Default validation grid density by dimension.
pub fn default_grid_density(sig: &Signature) -> usize {
    match sig.dim() {
        1 => 64,
        2 => 24,
        _ => 8,
    }
}

/// Starting radius: half the reciprocal of `Π_F (1 + sup ρ_F)` over a sample grid.
pub fn initial_delta(sig: &Signature, mollifier: MollifierParams) -> Result<f64> {
    let geom = Geometry::new(sig, mollifier);
    let d = sig.dim();
    let axis = axis_samples(8, 0.01);
    let per_axis = axis.len();
    let nf = geom.facets().len();
    let mut sup = vec![0.0f64; nf];
    let mut rho = vec![0.0; nf];
    let mut a = vec![0.0; d];
    for idx in 0..per_axis.pow(d as u32) {
        let mut r = idx;
        for slot in a.iter_mut() {
            *slot = axis[r % per_axis];
            r /= per_axis;
        }
        geom.rho_all(&a, &mut rho)?;
        for (s, &v) in sup.iter_mut().zip(&rho) {
            *s = s.max(v);
        }
    }
    let prod: f64 = sup.iter().map(|s| 1.0 + s).product();
    Ok(0.5 / prod)
}

pub const MAX_LADDER_STEPS: usize = 20;

/// Deterministic ladder: halve `δ` and double `ϝ` until [`validate_contour`] passes.
pub fn auto_tune(sig: &Signature, mollifier: MollifierParams) -> Result<ContourParams> {
    auto_tune_from(sig, mollifier, initial_delta(sig, mollifier)?)
}

/// The same ladder started from a chosen `δ`.
pub fn auto_tune_from(sig: &Signature, mollifier: MollifierParams, delta: f64) -> Result<ContourParams> {
    let mut delta = delta;
    let mut digamma = 64.0 * sig.dim() as f64;
    let density = default_grid_density(sig);
    for _ in 0..MAX_LADDER_STEPS {
        let cp = ContourParams::new(mollifier, delta, delta / 4.0, digamma)?;
        if validate_contour(sig, &cp, density)?.passed {
            return Ok(cp);
        }
        delta *= 0.5;
        digamma *= 2.0;
    }
    Err(Error::TuningFailure { steps: MAX_LADDER_STEPS })
}
