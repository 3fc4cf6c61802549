//! The two sides of the main identity: the regularized sheet sum over the double of the
//! blown-up cube, and the prefactor times the direct integral; plus continuation.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::branch::{nearest_log, transport, BranchCache, BranchState, Endpoint, SheetBranch};
use crate::contour::{auto_tune_from, default_grid_density, initial_delta, validate_contour, Contour, ContourParams};
use crate::error::{Error, Result};
use crate::geometry::MollifierParams;
use crate::oracle::{direct_integral, pow_i0};
use crate::quad::{integrate_cells, CellIntegrand, QuadResult, QuadSpec};
use crate::signature::{facets, prefactor, sheets, Facet, Group, ParamSet, Sheet, Signature, MAX_DIM};

/// Step of the central differences for `∂Z/∂v`, in logit coordinates `v = ln(a / (1 - a))`.
/// Near the blown-down faces `Z` depends on ratios of the `a_k`, which are smooth in `v`
/// but not in `a`.
pub const JACOBIAN_STEP: f64 = 2e-6;
/// Nodes whose nearest branch jumps by more than this from the cell center are reached by
/// continuation along the segment from the center instead.
const MAX_NODE_JUMP: f64 = 0.75 * PI;
/// Below this cell width the nearest branch is accepted without the jump check; the cube
/// corners are blown down, so arguments keep a direction-dependent spread at every scale.
const TINY_CELL: f64 = 1e-7;
/// `|prefactor|` below this makes dividing by it ill-conditioned.
pub const PREFACTOR_FLOOR: f64 = 1e-8;

/// How the sheet integrals are organised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SheetStrategy {
    /// `I_F = e^{iθ_F} I_∅ + ∫ (f_F - e^{iθ_F} f_∅)`; the correction lives in the collars of `F`.
    #[default]
    ControlVariate,
    /// Every sheet integrated over the whole cube.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub strategy: SheetStrategy,
    /// Signatures with `N ≥ 3` are refused unless this is set.
    pub allow_large: bool,
    /// Cells meeting a collar are split until their width is at most this multiple of `δ`.
    pub collar_width: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { strategy: SheetStrategy::ControlVariate, allow_large: false, collar_width: 1.0 }
    }
}

/// Left side of the identity, with its sheet decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedResult {
    pub value: Complex64,
    /// Per-sheet integrals before the orientation sign.
    pub per_sheet: BTreeMap<Sheet, Complex64>,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub contour: ContourParams,
}

/// Central-difference stencil in logit coordinates: `ρ` at `a` and at `a` shifted by
/// `±h` in `v_k`.
struct Stencil {
    dim: usize,
    nf: usize,
    points: Vec<[f64; MAX_DIM]>,
    /// `Π da_k/dv_k`.
    volume: f64,
    rho: Vec<f64>,
}

/// `a` moved by `t` in its logit coordinate, computed from the nearer endpoint.
fn logit_shift(a: f64, t: f64) -> f64 {
    if a <= 0.5 {
        let e = t.exp();
        a * e / (1.0 - a + a * e)
    } else {
        let b = 1.0 - a;
        let e = (-t).exp();
        1.0 - b * e / (1.0 - b + b * e)
    }
}

impl Stencil {
    fn new(contour: &Contour, a: &[f64]) -> Result<Self> {
        let d = a.len();
        let nf = contour.facet_count();
        let mut base = [0.0; MAX_DIM];
        base[..d].copy_from_slice(a);
        let mut points = Vec::with_capacity(2 * d + 1);
        points.push(base);
        let mut volume = 1.0;
        for k in 0..d {
            volume *= a[k] * (1.0 - a[k]);
            let mut p = base;
            p[k] = logit_shift(a[k], JACOBIAN_STEP);
            points.push(p);
            p[k] = logit_shift(a[k], -JACOBIAN_STEP);
            points.push(p);
        }
        let mut rho = vec![0.0; points.len() * nf];
        for (i, p) in points.iter().enumerate() {
            contour.rho(&p[..d], &mut rho[i * nf..(i + 1) * nf])?;
        }
        Ok(Stencil { dim: d, nf, points, volume, rho })
    }

    fn rho_at(&self, i: usize) -> &[f64] {
        &self.rho[i * self.nf..(i + 1) * self.nf]
    }

    /// Whether every stencil point has `ρ_G ≥ δ` for the listed facets.
    fn outside_collars(&self, facets: &[usize], delta: f64) -> bool {
        (0..self.points.len()).all(|i| facets.iter().all(|&g| self.rho_at(i)[g] >= delta))
    }
}

fn determinant(m: &mut [[Complex64; MAX_DIM]; MAX_DIM], n: usize) -> Complex64 {
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let mut det = Complex64::new(1.0, 0.0);
            for c in 0..n {
                let p = (c..n).max_by(|&i, &j| m[i][c].norm().total_cmp(&m[j][c].norm())).unwrap_or(c);
                if m[p][c].norm() == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                if p != c {
                    m.swap(p, c);
                    det = -det;
                }
                det *= m[c][c];
                for r in c + 1..n {
                    let f = m[r][c] / m[c][c];
                    for k in c..n {
                        let v = m[c][k];
                        m[r][k] -= f * v;
                    }
                }
            }
            det
        }
    }
}

/// `Π f^{e}` with logs continued from `reference`, times `det ∂Z/∂a`; `None` when some factor
/// jumps too far from the reference branch.
fn form_on_stencil(
    contour: &Contour,
    exps: &[Complex64],
    st: &Stencil,
    signs: &[f64],
    reference: &[Complex64],
    strict: bool,
) -> Option<(Complex64, Vec<Complex64>)> {
    let d = st.dim;
    let center = contour.factors_with(&st.points[0][..d], st.rho_at(0), signs);
    let mut logsum = Complex64::new(0.0, 0.0);
    let mut logs = Vec::with_capacity(reference.len());
    for ((v, r), e) in center.factors().iter().zip(reference).zip(exps) {
        let (l, jump) = nearest_log(*v, *r);
        if strict && jump.abs() > MAX_NODE_JUMP {
            return None;
        }
        logsum += e * l;
        logs.push(l);
    }
    let mut jac = [[Complex64::new(0.0, 0.0); MAX_DIM]; MAX_DIM];
    for k in 0..d {
        let plus = contour.factors_with(&st.points[1 + 2 * k][..d], st.rho_at(1 + 2 * k), signs);
        let minus = contour.factors_with(&st.points[2 + 2 * k][..d], st.rho_at(2 + 2 * k), signs);
        for j in 0..d {
            jac[j][k] = (plus.z[j] - minus.z[j]) / (2.0 * JACOBIAN_STEP);
        }
    }
    Some((logsum.exp() * determinant(&mut jac, d) / st.volume, logs))
}

/// The pulled-back form at one point of a sheet, with branches continued from the sheet's
/// center along a straight path.
pub fn pullback_form(
    contour: &Contour,
    a: &[f64],
    branch: &SheetBranch,
    params: &ParamSet,
) -> Result<Complex64> {
    if a.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Domain("pullback_form needs an interior point".into()));
    }
    let center = vec![0.5; a.len()];
    let state = transport(
        contour,
        &branch.center,
        Endpoint { a: &center, sheet: branch.sheet },
        Endpoint { a, sheet: branch.sheet },
    )?;
    let st = Stencil::new(contour, a)?;
    let exps = params.factor_exponents();
    form_on_stencil(contour, &exps, &st, &contour.sheet_signs(branch.sheet), &state.logs, true)
        .map(|(v, _)| v)
        .ok_or_else(|| Error::Domain("branch ambiguity at the evaluation point".into()))
}

/// Cube region that contains every point where `ρ_G < δ`.
fn collar_box(contour: &Contour, facet: &Facet) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
    let sig = contour.signature();
    let d = sig.dim();
    let reach = (2.0 * (d as f64).sqrt() * contour.params().delta).min(1.0);
    let (pool1, _) = sig.pools(facet.anchor);
    let mut lo = [0.0; MAX_DIM];
    let mut hi = [1.0; MAX_DIM];
    for j in 0..d {
        if facet.contains(j) {
            if pool1 & (1 << j) != 0 {
                lo[j] = 1.0 - reach;
            } else {
                hi[j] = reach;
            }
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    /// `f_F` on the whole cube.
    Full,
    /// `f_F - c f_∅`.
    Correction(Complex64),
}

struct SheetIntegrand<'a> {
    contour: &'a Contour,
    exps: &'a [Complex64],
    signs: Vec<f64>,
    base_signs: Vec<f64>,
    mode: Mode,
    /// Facets whose collars need forced refinement.
    collars: Vec<([f64; MAX_DIM], [f64; MAX_DIM])>,
    flipped: Vec<usize>,
    min_width: f64,
    root: Vec<Complex64>,
    base_root: Vec<Complex64>,
    sheet: Sheet,
}

#[derive(Debug, Clone)]
struct CellBranches {
    logs: Vec<Complex64>,
    base: Vec<Complex64>,
    center: Vec<f64>,
    width: f64,
}

impl SheetIntegrand<'_> {
    /// The form at a node, branches taken from the cell center; when the nearest branch is
    /// ambiguous the logs are continued along the segment from the center instead.
    fn node_form(&self, st: &Stencil, signs: &[f64], sheet: Sheet, ctx: &CellBranches, logs: &[Complex64]) -> Option<Complex64> {
        let strict = ctx.width > TINY_CELL;
        if let Some((v, _)) = form_on_stencil(self.contour, self.exps, st, signs, logs, strict) {
            return Some(v);
        }
        let carried = self.carry(logs, sheet, &ctx.center, &st.points[0][..st.dim]).ok()?;
        form_on_stencil(self.contour, self.exps, st, signs, &carried, true).map(|v| v.0)
    }

    fn carry(&self, logs: &[Complex64], sheet: Sheet, from: &[f64], to: &[f64]) -> Result<Vec<Complex64>> {
        let s = BranchState { logs: logs.to_vec() };
        Ok(transport(self.contour, &s, Endpoint { a: from, sheet }, Endpoint { a: to, sheet })?.logs)
    }
}

impl CellIntegrand for SheetIntegrand<'_> {
    type Ctx = CellBranches;

    fn root_context(&self, center: &[f64]) -> Result<CellBranches> {
        Ok(CellBranches { logs: self.root.clone(), base: self.base_root.clone(), center: center.to_vec(), width: 1.0 })
    }

    fn child_context(&self, parent: &CellBranches, pc: &[f64], cc: &[f64]) -> Result<CellBranches> {
        let logs = self.carry(&parent.logs, self.sheet, pc, cc)?;
        let base = match self.mode {
            Mode::Full => Vec::new(),
            Mode::Correction(_) => self.carry(&parent.base, Sheet::BASE, pc, cc)?,
        };
        Ok(CellBranches { logs, base, center: cc.to_vec(), width: 0.5 * parent.width })
    }

    fn eval(&self, ctx: &CellBranches, a: &[f64]) -> Result<Option<Complex64>> {
        if let Mode::Correction(_) = self.mode {
            let inside = |(lo, hi): &([f64; MAX_DIM], [f64; MAX_DIM])| (0..a.len()).all(|k| a[k] >= lo[k] && a[k] <= hi[k]);
            if !self.collars.iter().any(inside) {
                return Ok(Some(Complex64::new(0.0, 0.0)));
            }
        }
        let st = Stencil::new(self.contour, a)?;
        match self.mode {
            Mode::Full => Ok(self.node_form(&st, &self.signs, self.sheet, ctx, &ctx.logs)),
            Mode::Correction(c) => {
                if st.outside_collars(&self.flipped, self.contour.params().delta) {
                    return Ok(Some(Complex64::new(0.0, 0.0)));
                }
                let f = self.node_form(&st, &self.signs, self.sheet, ctx, &ctx.logs);
                let g = self.node_form(&st, &self.base_signs, Sheet::BASE, ctx, &ctx.base);
                Ok(match (f, g) {
                    (Some(f), Some(g)) => Some(f - c * g),
                    _ => None,
                })
            }
        }
    }

    fn must_refine(&self, lo: &[f64], hi: &[f64]) -> bool {
        let d = lo.len();
        let width = (0..d).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        if width <= self.min_width {
            return false;
        }
        self.collars
            .iter()
            .any(|(blo, bhi)| (0..d).all(|k| lo[k] < bhi[k] && hi[k] > blo[k]))
    }
}

fn check_dimension(sig: &Signature, params: &ParamSet, options: &EngineOptions) -> Result<()> {
    if params.dim() != sig.dim() {
        return Err(Error::InvalidArgument("parameter dimension does not match the signature".into()));
    }
    if sig.dim() >= 3 && !options.allow_large {
        return Err(Error::InvalidArgument(format!(
            "{sig} has N = {}; regularized integrals for N >= 3 need the explicit opt-in",
            sig.dim()
        )));
    }
    Ok(())
}

struct Prepared<'a> {
    contour: &'a Contour,
    exps: Vec<Complex64>,
    branches: Vec<SheetBranch>,
    base: BranchState,
}

impl<'a> Prepared<'a> {
    fn new(contour: &'a Contour, params: &ParamSet) -> Result<Self> {
        let cache = BranchCache::new(contour)?;
        let branches = sheets(contour.signature())?
            .into_iter()
            .map(|s| cache.get(contour, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared { contour, exps: params.factor_exponents(), branches, base: cache.base().clone() })
    }

    fn integrand(&self, branch: &SheetBranch, mode: Mode, options: &EngineOptions) -> SheetIntegrand<'_> {
        let all = facets(self.contour.signature());
        let flipped: Vec<usize> = branch.sheet.facet_indices().collect();
        let collar_facets: Vec<usize> = match mode {
            Mode::Full => (0..all.len()).collect(),
            Mode::Correction(_) => flipped.clone(),
        };
        SheetIntegrand {
            contour: self.contour,
            exps: &self.exps,
            signs: self.contour.sheet_signs(branch.sheet),
            base_signs: self.contour.sheet_signs(Sheet::BASE),
            mode,
            collars: collar_facets.iter().map(|&g| collar_box(self.contour, &all[g])).collect(),
            flipped,
            min_width: options.collar_width * self.contour.params().delta,
            root: branch.center.logs.clone(),
            base_root: self.base.logs.clone(),
            sheet: branch.sheet,
        }
    }
}

/// `e^{iθ_F}` from the continued branch offsets.
fn sheet_phase(branch: &SheetBranch, exps: &[Complex64]) -> Complex64 {
    (Complex64::new(0.0, 1.0) * branch.phase(exps)).exp()
}

/// Integrates the pulled-back form over every sheet and sums with orientation signs.
pub fn regularized_integral(
    sig: &Signature,
    params: &ParamSet,
    cp: &ContourParams,
    spec: &QuadSpec,
    options: &EngineOptions,
) -> Result<RegularizedResult> {
    check_dimension(sig, params, options)?;
    let contour = Contour::new(sig, *cp);
    let prep = Prepared::new(&contour, params)?;
    let d = sig.dim();
    let mut per_sheet = BTreeMap::new();
    let mut evaluations = 0;
    let (value, error_estimate) = match options.strategy {
        SheetStrategy::Independent => {
            let mut terms = Vec::new();
            let mut err = 0.0;
            for b in &prep.branches {
                let r = integrate_cells(&prep.integrand(b, Mode::Full, options), d, spec)?;
                per_sheet.insert(b.sheet, r.value);
                terms.push(b.sheet.sign() * r.value);
                err += r.error_estimate;
                evaluations += r.evaluations;
            }
            (crate::quad::neumaier_sum(terms), err)
        }
        SheetStrategy::ControlVariate => {
            let base_branch = &prep.branches[0];
            let base = integrate_cells(&prep.integrand(base_branch, Mode::Full, options), d, &spec.with_rel_tol(0.5 * spec.rel_tol))?;
            evaluations += base.evaluations;
            let coeffs: Vec<Complex64> = prep.branches.iter().map(|b| sheet_phase(b, &prep.exps)).collect();
            let sum_coeff = crate::quad::neumaier_sum(
                prep.branches.iter().zip(&coeffs).map(|(b, c)| b.sheet.sign() * c),
            );
            let scale = base.value.norm() * sum_coeff.norm().max(1e-3);
            let n_corr = ((prep.branches.len() - 1).max(1) as f64).sqrt();
            let corr_spec = spec
                .with_rel_tol(spec.rel_tol)
                .with_abs_tol(spec.abs_tol.max(0.5 * spec.rel_tol * scale / n_corr));
            let mut terms = vec![sum_coeff * base.value];
            let mut err = sum_coeff.norm() * base.error_estimate;
            per_sheet.insert(Sheet::BASE, base.value);
            for (b, c) in prep.branches.iter().zip(&coeffs).skip(1) {
                let r = integrate_cells(&prep.integrand(b, Mode::Correction(*c), options), d, &corr_spec)?;
                per_sheet.insert(b.sheet, c * base.value + r.value);
                terms.push(b.sheet.sign() * r.value);
                err += r.error_estimate;
                evaluations += r.evaluations;
            }
            (crate::quad::neumaier_sum(terms), err)
        }
    };
    Ok(RegularizedResult { value, per_sheet, error_estimate, evaluations, contour: *cp })
}

/// Measured branch structure: per-facet windings and the mismatch between the contour's base
/// branch and the `+i0` prescription.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    pub facets: Vec<Facet>,
    /// Windings of each factor around each single facet loop.
    pub facet_windings: Vec<Vec<i64>>,
    /// Windings of each sheet (canonical order), measured by chained crossings.
    pub sheet_windings: Vec<(Sheet, Vec<i64>)>,
    /// `(log_contour - log_{+i0}) / 2πi` at a generic real point of the base sheet.
    pub base_mismatch: Vec<i64>,
}

fn real_probe_point(d: usize) -> Vec<f64> {
    (0..d).map(|j| 0.3 + 0.4 * (j as f64 + 0.5) / d as f64).collect()
}

/// `+i0` arguments of each factor at a real point of the cube.
fn i0_args(sig: &Signature, a: &[f64]) -> Result<Vec<f64>> {
    let d = sig.dim();
    let x: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(j, &a)| match sig.group(j) {
            Group::I1 => 1.0 - 1.0 / a,
            Group::I2 => a,
            Group::I3 => 1.0 / (1.0 - a),
        })
        .collect();
    let arg = |u: f64| -> Result<f64> { Ok(pow_i0(u, Complex64::new(0.0, -1.0))?.ln().re) };
    let mut out = Vec::new();
    for &xj in &x {
        out.push(arg(xj)?);
    }
    for &xj in &x {
        out.push(arg(1.0 - xj)?);
    }
    for j in 0..d {
        for k in j + 1..d {
            out.push(arg(x[k] - x[j])?);
        }
    }
    Ok(out)
}

impl PhaseModel {
    pub fn measure(contour: &Contour) -> Result<Self> {
        let sig = *contour.signature();
        let cache = BranchCache::new(contour)?;
        let fs = facets(&sig);
        let facet_windings = (0..fs.len())
            .map(|g| Ok(cache.get(contour, Sheet::new(1 << g))?.windings))
            .collect::<Result<Vec<_>>>()?;
        let sheet_windings = match sheets(&sig) {
            Ok(all) if all.len() <= 1 << 12 => all
                .into_iter()
                .map(|s| Ok((s, cache.get(contour, s)?.windings)))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let q = real_probe_point(sig.dim());
        let center = vec![0.5; sig.dim()];
        let at_q = transport(
            contour,
            cache.base(),
            Endpoint { a: &center, sheet: Sheet::BASE },
            Endpoint { a: &q, sheet: Sheet::BASE },
        )?;
        let base_mismatch = at_q
            .logs
            .iter()
            .zip(i0_args(&sig, &q)?)
            .map(|(l, arg)| ((l.im - arg) / TAU).round() as i64)
            .collect();
        Ok(PhaseModel { facets: fs, facet_windings, sheet_windings, base_mismatch })
    }

    fn contract(windings: &[i64], exps: &[Complex64]) -> Complex64 {
        windings.iter().zip(exps).map(|(&k, e)| TAU * k as f64 * e).sum()
    }

    /// Measured `θ_{F}` for each single facet.
    pub fn facet_phases(&self, params: &ParamSet) -> Vec<Complex64> {
        let exps = params.factor_exponents();
        self.facet_windings.iter().map(|w| Self::contract(w, &exps)).collect()
    }

    /// `Σ_F (-1)^{|F|} e^{iθ_F}` over all sheets, from the chained sheet windings.
    pub fn sheet_sum(&self, params: &ParamSet) -> Result<Complex64> {
        if self.sheet_windings.is_empty() {
            return Err(Error::InvalidArgument("too many sheets to enumerate".into()));
        }
        let exps = params.factor_exponents();
        let i = Complex64::new(0.0, 1.0);
        Ok(crate::quad::neumaier_sum(
            self.sheet_windings.iter().map(|(s, w)| s.sign() * (i * Self::contract(w, &exps)).exp()),
        ))
    }

    /// `Π_G (-e^{iθ_G/2})`, the phase relating the sheet sum to the product of sines.
    pub fn phi(&self, params: &ParamSet) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        self.facet_phases(params).iter().map(|t| -(0.5 * i * t).exp()).product()
    }

    /// `exp(2πi Σ k_f e_f)`, the base-branch offset against the `+i0` prescription.
    pub fn psi(&self, params: &ParamSet) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        (i * Self::contract(&self.base_mismatch, &params.factor_exponents())).exp()
    }

    /// Predicted `lhs / (prefactor · I)` before calibration.
    pub fn predicted_phase(&self, params: &ParamSet) -> Complex64 {
        self.phi(params) * self.psi(params)
    }
}

/// Both sides of the identity at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub lhs: RegularizedResult,
    /// `prefactor · I`.
    pub rhs: Complex64,
    pub prefactor: Complex64,
    pub direct: QuadResult,
    /// Unit-modulus phase minimising `|lhs - phase · rhs|`.
    pub fitted_phase: Complex64,
    /// Phase predicted from the measured branch structure.
    pub predicted_phase: Complex64,
    pub rel_residual: f64,
}

fn check_prefactor(p: Complex64) -> Result<()> {
    if p.norm() < PREFACTOR_FLOOR {
        return Err(Error::PrefactorNearZero { magnitude: p.norm(), floor: PREFACTOR_FLOOR });
    }
    Ok(())
}

/// Computes both sides of the identity and compares them after fitting a global phase.
pub fn verify_theorem(
    sig: &Signature,
    params: &ParamSet,
    cp: &ContourParams,
    spec: &QuadSpec,
    options: &EngineOptions,
) -> Result<TheoremReport> {
    check_dimension(sig, params, options)?;
    let pre = prefactor(sig, params);
    check_prefactor(pre)?;
    let direct = direct_integral(sig, params, &spec.with_rel_tol(0.1 * spec.rel_tol))?;
    let lhs = regularized_integral(sig, params, cp, spec, options)?;
    let contour = Contour::new(sig, *cp);
    let model = PhaseModel::measure(&contour)?;
    let rhs = pre * direct.value;
    let ratio = lhs.value / rhs;
    let fitted_phase = if ratio.norm() > 0.0 { ratio / ratio.norm() } else { Complex64::new(1.0, 0.0) };
    let rel_residual = (lhs.value - fitted_phase * rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    Ok(TheoremReport {
        lhs,
        rhs,
        prefactor: pre,
        direct,
        fitted_phase,
        predicted_phase: model.predicted_phase(params),
        rel_residual,
    })
}

/// Continuation of the integral beyond its convergent region, calibrated once at a reference
/// parameter point.
#[derive(Debug, Clone)]
pub struct Continuation {
    pub signature: Signature,
    pub contour: ContourParams,
    pub spec: QuadSpec,
    pub options: EngineOptions,
    pub model: PhaseModel,
    /// `lhs / (Φ Ψ · prefactor · I)` at the reference point; ideally 1.
    pub calibration: Complex64,
    pub reference: ParamSet,
}

/// A continued value with its propagated error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuedValue {
    pub value: Complex64,
    pub error_estimate: f64,
    pub prefactor: Complex64,
}

/// A convergent parameter point for a signature: `α = 0.3`, `β = 0.4` on I2, `β = -2.2` on
/// I1, `α = -2.2` on I3 (shifted slightly per index), `γ = 0.05`.
pub fn reference_params(sig: &Signature) -> ParamSet {
    let d = sig.dim();
    let mut alpha = Vec::with_capacity(d);
    let mut beta = Vec::with_capacity(d);
    for j in 0..d {
        let s = 0.02 * j as f64;
        let (a, b) = match sig.group(j) {
            Group::I1 => (0.3 + s, -2.2 - s),
            Group::I2 => (0.3 + s, 0.4 - s),
            Group::I3 => (-2.2 - s, 0.4 - s),
        };
        alpha.push(a);
        beta.push(b);
    }
    let gamma = vec![0.05; sig.pair_count()];
    ParamSet::real(sig, &alpha, &beta, &gamma).expect("consistent dimensions")
}

impl Continuation {
    /// Calibrates the global constant against the direct integral at `reference`. The
    /// constant divides every continued value, so it is computed ten times tighter than `spec`.
    pub fn calibrate(
        sig: &Signature,
        cp: &ContourParams,
        spec: &QuadSpec,
        options: &EngineOptions,
        reference: &ParamSet,
    ) -> Result<Self> {
        let report = verify_theorem(sig, reference, cp, &spec.with_rel_tol(0.1 * spec.rel_tol), options)?;
        let contour = Contour::new(sig, *cp);
        let model = PhaseModel::measure(&contour)?;
        let predicted = model.predicted_phase(reference) * report.rhs;
        Ok(Continuation {
            signature: *sig,
            contour: *cp,
            spec: *spec,
            options: *options,
            model,
            calibration: report.lhs.value / predicted,
            reference: reference.clone(),
        })
    }

    /// `regularized / (c Φ Ψ · prefactor)`.
    pub fn value(&self, params: &ParamSet) -> Result<ContinuedValue> {
        let pre = prefactor(&self.signature, params);
        check_prefactor(pre)?;
        let reg = regularized_integral(&self.signature, params, &self.contour, &self.spec, &self.options)?;
        let denom = self.calibration * self.model.predicted_phase(params) * pre;
        Ok(ContinuedValue {
            value: reg.value / denom,
            error_estimate: reg.error_estimate / denom.norm(),
            prefactor: pre,
        })
    }
}

/// One-shot continuation with the given contour, calibrated at [`reference_params`].
pub fn continued_value(sig: &Signature, params: &ParamSet, cp: &ContourParams, spec: &QuadSpec) -> Result<Complex64> {
    let options = EngineOptions::default();
    let c = Continuation::calibrate(sig, cp, spec, &options, &reference_params(sig))?;
    Ok(c.value(params)?.value)
}

/// Starting `δ` of [`default_contour`]'s ladder when the conservative bound is smaller.
/// Wider collars make the sheet integrands smoother; validation still has the last word.
pub const COARSE_DELTA: f64 = 0.05;

/// Contour for continuation: [`default_contour`] with the larger twist `ϝ = 4N` when that still
/// validates. Near `γ = -1` the pair factors peak in a band of width `~1/ϝ` around the diagonal,
/// so a wider twist keeps the integrand tame.
pub fn continuation_contour(sig: &Signature) -> Result<ContourParams> {
    let cp = default_contour(sig)?;
    let wide = ContourParams::new(cp.mollifier, cp.delta, cp.eps_p, 4.0 * sig.dim() as f64)?.with_twist(cp.twist);
    if validate_contour(sig, &wide, default_grid_density(sig))?.passed {
        Ok(wide)
    } else {
        Ok(cp)
    }
}

/// Validated contour parameters for integration: the tuning ladder started from
/// `max(initial bound, COARSE_DELTA)`.
pub fn default_contour(sig: &Signature) -> Result<ContourParams> {
    let mp = MollifierParams::default();
    auto_tune_from(sig, mp, initial_delta(sig, mp)?.max(COARSE_DELTA))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_3x3() {
        let c = |x: f64| Complex64::new(x, 0.0);
        let mut m = [[c(0.0); MAX_DIM]; MAX_DIM];
        m[0][..3].copy_from_slice(&[c(2.0), c(1.0), c(0.0)]);
        m[1][..3].copy_from_slice(&[c(1.0), c(3.0), c(1.0)]);
        m[2][..3].copy_from_slice(&[c(0.0), c(1.0), c(4.0)]);
        assert!((determinant(&mut m, 3) - c(18.0)).norm() < 1e-12);
    }
}
