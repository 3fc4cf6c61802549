//! Reference values: the direct integral with the `+i0` prescription, complex Gamma and Beta,
//! the closed forms for `N = 1`, and the two-variable Selberg integral.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::CubePoint;
use crate::quad::{integrate_endpoint_singular, QuadResult, QuadSpec};
use crate::signature::{zeta_s, Group, ParamSet, Signature, MAX_DIM};

/// `(u + i0)^s` with the cut along the positive real axis approached from above:
/// `arg u = 0` for `u > 0` and `π` for `u < 0`.
pub fn pow_i0(u: f64, s: Complex64) -> Result<Complex64> {
    if u == 0.0 || u.is_nan() {
        return Err(Error::Domain(format!("pow_i0 at u = {u}")));
    }
    let arg = if u > 0.0 { 0.0 } else { PI };
    Ok((s * Complex64::new(u.abs().ln(), arg)).exp())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_pole(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// Complex Gamma function (Lanczos, with reflection for `Re z < 1/2`).
pub fn gamma_fn(z: Complex64) -> Result<Complex64> {
    if is_pole(z) {
        return Err(Error::Domain(format!("Gamma has a pole at {z}")));
    }
    Ok(gamma_unchecked(z))
}

fn gamma_unchecked(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        let s = (PI * z).sin();
        return PI / (s * gamma_unchecked(1.0 - z));
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * (t.ln() * (z + 0.5) - t).exp() * x
}

/// `B(a, b) = Γ(a)Γ(b)/Γ(a+b)`.
pub fn beta_fn(a: Complex64, b: Complex64) -> Result<Complex64> {
    let s = a + b;
    if is_pole(s) {
        // 1/Γ vanishes there; the Beta value is 0 unless a numerator pole also occurs.
        gamma_fn(a)?;
        gamma_fn(b)?;
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(gamma_fn(a)? * gamma_fn(b)? / gamma_fn(s)?)
}

fn rgamma(z: Complex64) -> Complex64 {
    if is_pole(z) {
        Complex64::new(0.0, 0.0)
    } else {
        1.0 / gamma_unchecked(z)
    }
}

/// Two-variable Selberg integral
/// `∫∫_{[0,1]²} (x y)^{a-1} ((1-x)(1-y))^{b-1} |x - y|^{2c} dx dy`.
pub fn selberg2(a: Complex64, b: Complex64, c: Complex64) -> Result<Complex64> {
    let mut v = Complex64::new(1.0, 0.0);
    for j in 0..2 {
        let jf = j as f64;
        v *= gamma_fn(a + jf * c)? * gamma_fn(b + jf * c)? * gamma_fn(1.0 + (jf + 1.0) * c)?;
        v *= rgamma(a + b + (1.0 + jf) * c) * rgamma(1.0 + c);
    }
    Ok(v)
}

/// `I_{0,1,0}(α, β) = B(1+α, 1+β)`.
pub fn i010_closed(alpha: Complex64, beta: Complex64) -> Result<Complex64> {
    beta_fn(1.0 + alpha, 1.0 + beta)
}

/// `I_{1,0,0}(α, β) = e^{iπα} Γ(1+α)Γ(-1-α-β)/Γ(-β)`.
pub fn i100_closed(alpha: Complex64, beta: Complex64) -> Result<Complex64> {
    let phase = (Complex64::new(0.0, PI) * alpha).exp();
    Ok(phase * gamma_fn(1.0 + alpha)? * gamma_fn(-1.0 - alpha - beta)? * rgamma(-beta))
}

/// `I_{0,0,1}(α, β) = e^{iπβ} Γ(-1-α-β)Γ(1+β)/Γ(-α)`.
pub fn i001_closed(alpha: Complex64, beta: Complex64) -> Result<Complex64> {
    let phase = (Complex64::new(0.0, PI) * beta).exp();
    Ok(phase * gamma_fn(-1.0 - alpha - beta)? * gamma_fn(1.0 + beta)? * rgamma(-alpha))
}

/// `((1 + e^{2πiγ})/2)·S₂(α+1, β+1, γ)`: the symmetric `(0,2,0)` integral.
pub fn selberg_020(alpha: Complex64, beta: Complex64, gamma: Complex64) -> Result<Complex64> {
    let half = 0.5 * (1.0 + (Complex64::new(0.0, 2.0 * PI) * gamma).exp());
    Ok(half * selberg2(alpha + 1.0, beta + 1.0, gamma)?)
}

/// `(ln|u|, arg)` of each coordinate's `x_j`, `1 - x_j` and the log Jacobian, from `a` and `1 - a`.
fn coordinate_logs(g: Group, a: f64, b: f64) -> ((f64, f64), (f64, f64), f64) {
    match g {
        Group::I1 => ((b.ln() - a.ln(), PI), (-a.ln(), 0.0), -2.0 * a.ln()),
        Group::I2 => ((a.ln(), 0.0), (b.ln(), 0.0), 0.0),
        Group::I3 => ((-b.ln(), 0.0), (a.ln() - b.ln(), PI), -2.0 * b.ln()),
    }
}

/// `x_k - x_j` without cancellation for coordinates in the same group; `da` overrides
/// `a_k - a_j` when the caller knows it exactly.
fn difference(sig: &Signature, j: usize, k: usize, a: &[f64], b: &[f64], da: Option<f64>) -> f64 {
    let (gj, gk) = (sig.group(j), sig.group(k));
    let da = da.unwrap_or(if a[j] > 0.5 && a[k] > 0.5 { b[j] - b[k] } else { a[k] - a[j] });
    if gj == gk {
        match gj {
            Group::I1 => da / (a[j] * a[k]),
            Group::I2 => da,
            Group::I3 => da / (b[j] * b[k]),
        }
    } else {
        let x = |i: usize| match sig.group(i) {
            Group::I1 => -b[i] / a[i],
            Group::I2 => a[i],
            Group::I3 => 1.0 / b[i],
        };
        x(k) - x(j)
    }
}

/// The direct integrand in `a`-coordinates including `dx/da`, given `a` and `1 - a`.
pub fn direct_integrand_ab(sig: &Signature, params: &ParamSet, a: &[f64], b: &[f64]) -> Result<Complex64> {
    integrand_with_difference(sig, params, a, b, None)
}

fn integrand_with_difference(
    sig: &Signature,
    params: &ParamSet,
    a: &[f64],
    b: &[f64],
    da01: Option<f64>,
) -> Result<Complex64> {
    let d = sig.dim();
    let mut log = Complex64::new(0.0, 0.0);
    for j in 0..d {
        let ((lx, ax), (l1, a1), lj) = coordinate_logs(sig.group(j), a[j], b[j]);
        log += params.alpha[j] * Complex64::new(lx, ax) + params.beta[j] * Complex64::new(l1, a1) + lj;
    }
    for j in 0..d {
        for k in j + 1..d {
            let u = difference(sig, j, k, a, b, if (j, k) == (0, 1) { da01 } else { None });
            if u == 0.0 {
                return Err(Error::Domain(format!("x_{} = x_{}", j + 1, k + 1)));
            }
            let arg = if u > 0.0 { 0.0 } else { PI };
            log += 2.0 * params.gamma(j, k)? * Complex64::new(u.abs().ln(), arg);
        }
    }
    Ok(log.exp())
}

/// The direct integrand at a cube point, Jacobian included.
pub fn direct_integrand(sig: &Signature, params: &ParamSet, p: &CubePoint) -> Result<Complex64> {
    if !p.is_interior() {
        return Err(Error::Domain("direct integrand needs an interior point".into()));
    }
    let b: Vec<f64> = p.a.iter().map(|a| 1.0 - a).collect();
    direct_integrand_ab(sig, params, &p.a, &b)
}

/// Checks the convergence conditions: `γ > 0`; `α_j, β_j > 0` on I2; `α_j > 0` and
/// `ζ_{j} > 1` on I1; `β_j > 0` and `ζ_{j} > 1` on I3 (real parts).
pub fn convergence_gate(sig: &Signature, params: &ParamSet) -> Result<()> {
    let fail = |msg: String| Err(Error::NotInConvergentRegion(msg));
    for (i, g) in params.gamma_upper().iter().enumerate() {
        if g.re <= 0.0 {
            return fail(format!("Re gamma[{i}] = {} must be > 0", g.re));
        }
    }
    for j in 0..sig.dim() {
        let (al, be) = (params.alpha[j].re, params.beta[j].re);
        let zeta = zeta_s(params, 1 << j).re;
        let name = j + 1;
        match sig.group(j) {
            Group::I2 => {
                if al <= 0.0 {
                    return fail(format!("Re alpha_{name} = {al} must be > 0"));
                }
                if be <= 0.0 {
                    return fail(format!("Re beta_{name} = {be} must be > 0"));
                }
            }
            Group::I1 => {
                if al <= 0.0 {
                    return fail(format!("Re alpha_{name} = {al} must be > 0"));
                }
                if zeta <= 1.0 {
                    return fail(format!("Re zeta_{{{name}}} = {zeta} must be > 1"));
                }
            }
            Group::I3 => {
                if be <= 0.0 {
                    return fail(format!("Re beta_{name} = {be} must be > 0"));
                }
                if zeta <= 1.0 {
                    return fail(format!("Re zeta_{{{name}}} = {zeta} must be > 1"));
                }
            }
        }
    }
    Ok(())
}

/// Endpoint exponents `(at a = 0, at a = 1)` of the integrand in `a`-coordinates.
pub fn exponent_hints(sig: &Signature, params: &ParamSet) -> Vec<(f64, f64)> {
    (0..sig.dim())
        .map(|j| {
            let zeta = zeta_s(params, 1 << j).re;
            let (al, be) = (params.alpha[j].re, params.beta[j].re);
            match sig.group(j) {
                Group::I1 => (zeta - 2.0, al),
                Group::I2 => (al, be),
                Group::I3 => (be, zeta - 2.0),
            }
        })
        .collect()
}

/// The integral over the real domain, where it converges absolutely.
pub fn direct_integral(sig: &Signature, params: &ParamSet, spec: &QuadSpec) -> Result<QuadResult> {
    if params.dim() != sig.dim() {
        return Err(Error::InvalidArgument("parameter dimension does not match the signature".into()));
    }
    convergence_gate(sig, params)?;
    let hints = exponent_hints(sig, params);
    let d = sig.dim();
    debug_assert!(d <= MAX_DIM);
    if d == 2 && sig.group(0) == sig.group(1) {
        return diagonal_split(sig, params, spec, &hints);
    }
    integrate_endpoint_singular(
        |a, b| direct_integrand_ab(sig, params, a, b).unwrap_or(Complex64::new(0.0, 0.0)),
        d,
        spec,
        &hints,
    )
}

/// Two same-group coordinates: each triangle `a_lo < a_hi` is mapped to the square by
/// `a_lo = s t`, `a_hi = s`, which puts the diagonal singularity on the face `t = 1`.
fn diagonal_split(sig: &Signature, params: &ParamSet, spec: &QuadSpec, hints: &[(f64, f64)]) -> Result<QuadResult> {
    let two_gamma = 2.0 * params.gamma(0, 1)?.re;
    let mut total = Vec::new();
    let (mut err, mut evals, mut converged) = (0.0, 0, true);
    for (lo, hi) in [(0usize, 1usize), (1, 0)] {
        let (hl, hh) = (hints[lo], hints[hi]);
        let tri_hints = [(hl.0 + hh.0 + two_gamma + 1.0, hh.1), (hl.0, two_gamma)];
        let r = integrate_endpoint_singular(
            |u, v| {
                let (s, t, bs, bt) = (u[0], u[1], v[0], v[1]);
                let mut a = [0.0; 2];
                let mut b = [0.0; 2];
                a[lo] = s * t;
                b[lo] = bs + s * bt;
                a[hi] = s;
                b[hi] = bs;
                let gap = s * bt;
                let da = if lo == 0 { gap } else { -gap };
                integrand_with_difference(sig, params, &a, &b, Some(da)).map_or(Complex64::new(0.0, 0.0), |f| f * s)
            },
            2,
            spec,
            &tri_hints,
        );
        let r = match r {
            Ok(r) => r,
            Err(Error::NotConverged(r)) => {
                converged = false;
                r
            }
            Err(e) => return Err(e),
        };
        total.push(r.value);
        err += r.error_estimate;
        evals += r.evaluations;
    }
    let result = QuadResult { value: total[0] + total[1], error_estimate: err, evaluations: evals, converged };
    if converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(result))
    }
}
