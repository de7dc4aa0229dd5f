//! Lennard-Jones type force functions `F(r) = G/r^q - H/r^p` with `q > p`.
//!
//! Every such function has a single root `L`, a single minimum `-M` at
//! `r_min`, and an inflection point `r_infl` past the minimum. The map
//! between the canonical coefficients `(G, H, q, p)` and the shape
//! quantities `(L, r_min, M, delta = q - p)` is a bijection, so a force can be
//! designed from its geometry and converted back to coefficients.
//!
//! The coefficients `G` and `H` are stored as natural logarithms. For shapes
//! with `r_min` close to `L` the exponent `p` becomes large and `G`, `H`
//! leave the range of `f64` long before the force itself does.

use thiserror::Error;

use crate::roots::{newton_bisect, Unconverged};

/// Residual tolerance of [`solve_r_eps`] on the decay profile.
pub const R_EPS_TOLERANCE: f64 = 1e-10;
/// Residual tolerance of [`solve_delta`], relative to `M`.
pub const DELTA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LjfError {
    #[error("invalid force parameters: {0}")]
    InvalidParams(String),
    #[error("invalid shape: L = {l} must be below r_min = {r_min}")]
    InvalidShape { l: f64, r_min: f64 },
    #[error("{0} outside the domain")]
    Domain(String),
    #[error("force overflows at r = {r}")]
    Overflow { r: f64 },
    #[error("potential needs exponents different from 1 (q = {q}, p = {p})")]
    UnsupportedExponent { q: f64, p: f64 },
    #[error("r_eps = {r_eps} is not attainable; it must exceed R_eps = {r_lower}")]
    InfeasibleTarget { r_eps: f64, r_lower: f64 },
    #[error("root solver did not converge after {iterations} iterations (last bracket [{lo}, {hi}])")]
    Convergence { lo: f64, hi: f64, iterations: usize },
}

impl From<Unconverged> for LjfError {
    fn from(u: Unconverged) -> Self {
        LjfError::Convergence { lo: u.lo, hi: u.hi, iterations: u.iterations }
    }
}

fn positive(name: &str, v: f64) -> Result<(), LjfError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(LjfError::InvalidParams(format!("{name} = {v} must be a positive finite number")))
    }
}

/// Canonical coefficients of `F(r) = G/r^q - H/r^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjfCanonical {
    ln_g: f64,
    ln_h: f64,
    q: f64,
    p: f64,
}

impl LjfCanonical {
    pub fn new(g: f64, h: f64, q: f64, p: f64) -> Result<Self, LjfError> {
        positive("G", g)?;
        positive("H", h)?;
        Self::from_logs(g.ln(), h.ln(), q, p)
    }

    /// Builds the coefficients from `ln G` and `ln H`.
    pub fn from_logs(ln_g: f64, ln_h: f64, q: f64, p: f64) -> Result<Self, LjfError> {
        if !ln_g.is_finite() || !ln_h.is_finite() {
            return Err(LjfError::InvalidParams("ln G and ln H must be finite".into()));
        }
        positive("q", q)?;
        positive("p", p)?;
        if q <= p {
            return Err(LjfError::InvalidParams(format!("q = {q} must exceed p = {p}")));
        }
        Ok(Self { ln_g, ln_h, q, p })
    }

    pub fn g(&self) -> f64 {
        self.ln_g.exp()
    }

    pub fn h(&self) -> f64 {
        self.ln_h.exp()
    }

    pub fn ln_g(&self) -> f64 {
        self.ln_g
    }

    pub fn ln_h(&self) -> f64 {
        self.ln_h
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.q - self.p
    }

    /// `ln L = (ln G - ln H) / (q - p)`.
    pub fn ln_equilibrium(&self) -> f64 {
        (self.ln_g - self.ln_h) / self.delta()
    }

    /// Unchecked evaluation through the factored form
    /// `F(r) = H r^-p ((L/r)^delta - 1)`, which is exactly zero at `r = L`.
    #[inline]
    pub fn force(&self, r: f64) -> f64 {
        let ln_r = r.ln();
        let ln_l = self.ln_equilibrium();
        (self.ln_h - self.p * ln_r).exp() * (self.delta() * (ln_l - ln_r)).exp_m1()
    }

    /// Unchecked `U(r)` with `-dU/dr = F(r)`; meaningless when `q` or `p` is 1.
    #[inline]
    pub fn potential(&self, r: f64) -> f64 {
        let ln_r = r.ln();
        let rep = (self.ln_g - (self.q - 1.0) * ln_r).exp() / (self.q - 1.0);
        let att = (self.ln_h - (self.p - 1.0) * ln_r).exp() / (self.p - 1.0);
        rep - att
    }
}

/// Geometric description of the same force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjfShape {
    /// Equilibrium distance, `F(L) = 0`.
    pub l: f64,
    /// Location of the strongest attraction.
    pub r_min: f64,
    /// Magnitude of the strongest attraction, `F(r_min) = -M`.
    pub m: f64,
    /// Decay shape `q - p`.
    pub delta: f64,
}

impl LjfShape {
    pub fn new(l: f64, r_min: f64, m: f64, delta: f64) -> Result<Self, LjfError> {
        positive("L", l)?;
        positive("r_min", r_min)?;
        positive("M", m)?;
        positive("delta", delta)?;
        if l >= r_min {
            return Err(LjfError::InvalidShape { l, r_min });
        }
        Ok(Self { l, r_min, m, delta })
    }

    /// Attractive exponent `p = delta / ((r_min/L)^delta - 1)`.
    pub fn attractive_exponent(&self) -> f64 {
        self.delta / (self.delta * (self.r_min / self.l).ln()).exp_m1()
    }

    /// Evaluates the force directly from the shape quantities:
    ///
    /// ```text
    /// F(r) = M (r_min/r)^p ((L/r)^delta - 1) / (1 - (L/r_min)^delta)
    /// ```
    ///
    /// Stays finite for large `delta`, where `G = H L^delta` would not.
    #[inline]
    pub fn force(&self, r: f64) -> f64 {
        let p = self.attractive_exponent();
        let ln_ratio = (self.r_min / self.l).ln();
        let scale = (p * (self.r_min / r).ln()).exp();
        let numer = (self.delta * (self.l / r).ln()).exp_m1();
        let denom = -(-self.delta * ln_ratio).exp_m1();
        self.m * scale * numer / denom
    }
}

/// Shape quantities plus the inflection point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSummary {
    pub shape: LjfShape,
    pub r_infl: f64,
}

/// Checked force evaluation. Positive values repel, negative values attract.
pub fn force_eval(params: &LjfCanonical, r: f64) -> Result<f64, LjfError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(LjfError::Domain(format!("distance r = {r}")));
    }
    let f = params.force(r);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(LjfError::Overflow { r })
    }
}

/// Root, minimum, depth and inflection point of a canonical force.
pub fn shape_from_canonical(params: &LjfCanonical) -> ShapeSummary {
    let (q, p, delta) = (params.q, params.p, params.delta());
    let ln_l = params.ln_equilibrium();
    // ln(q/p) = ln(1 + delta/p), accurate when delta << p
    let ln_r_min = ln_l + (delta / p).ln_1p() / delta;
    let ln_m = params.ln_h - p * ln_r_min + (delta / q).ln();
    let ln_r_infl = ln_r_min + (delta / (p + 1.0)).ln_1p() / delta;
    ShapeSummary {
        shape: LjfShape { l: ln_l.exp(), r_min: ln_r_min.exp(), m: ln_m.exp(), delta },
        r_infl: ln_r_infl.exp(),
    }
}

/// Inverse map: computes `p`, `q`, `H`, `G` in that order.
pub fn canonical_from_shape(shape: &LjfShape) -> Result<LjfCanonical, LjfError> {
    let shape = LjfShape::new(shape.l, shape.r_min, shape.m, shape.delta)?;
    let delta = shape.delta;
    let p = shape.attractive_exponent();
    let q = p + delta;
    // H = M [(q/p)^(1/delta) L]^p / (1 - p/q)
    let ln_r_min = shape.l.ln() + (delta / p).ln_1p() / delta;
    let ln_h = shape.m.ln() + p * ln_r_min - (delta / q).ln();
    let ln_g = ln_h + delta * shape.l.ln();
    LjfCanonical::from_logs(ln_g, ln_h, q, p)
}

/// `U(r) = G/((q-1) r^(q-1)) - H/((p-1) r^(p-1))`, so that `-U'(r) = F(r)`.
pub fn potential_eval(params: &LjfCanonical, r: f64) -> Result<f64, LjfError> {
    if params.q == 1.0 || params.p == 1.0 {
        return Err(LjfError::UnsupportedExponent { q: params.q, p: params.p });
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(LjfError::Domain(format!("distance r = {r}")));
    }
    let u = params.potential(r);
    if u.is_finite() {
        Ok(u)
    } else {
        Err(LjfError::Overflow { r })
    }
}

fn check_profile_args(l: f64, r_min: f64) -> Result<(), LjfError> {
    positive("L", l)?;
    positive("r_min", r_min)?;
    if l >= r_min {
        return Err(LjfError::InvalidShape { l, r_min });
    }
    Ok(())
}

/// Value and derivative (with respect to `ln r`) of the decay profile.
fn profile_in_log(ln_l: f64, ln_r_min: f64, u: f64) -> (f64, f64) {
    let ell = ln_r_min - ln_l;
    let lead = ((ln_r_min - u) / ell).exp();
    let t = lead * (u - ln_l) / ell;
    (t, lead / ell - t / ell)
}

/// The limiting decay profile `T(r) = (r_min/r)^(1/ln(r_min/L)) ln(r/L) / ln(r_min/L)`.
///
/// `-M T(r)` is the force at `r` in the limit `delta -> 0`; it falls from 1
/// at `r_min` towards 0.
pub fn decay_profile(l: f64, r_min: f64, r: f64) -> Result<f64, LjfError> {
    check_profile_args(l, r_min)?;
    if !(r >= r_min) || !r.is_finite() {
        return Err(LjfError::Domain(format!("r = {r} below r_min = {r_min}")));
    }
    Ok(profile_in_log(l.ln(), r_min.ln(), r.ln()).0)
}

/// Solves `T(R) = eps` for `R > r_min`.
///
/// Every `r_eps` reachable by some `delta` lies strictly above this value.
pub fn solve_r_eps(l: f64, r_min: f64, eps: f64) -> Result<f64, LjfError> {
    check_profile_args(l, r_min)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LjfError::Domain(format!("eps = {eps} (must lie in (0, 1))")));
    }
    let (ln_l, ln_r_min) = (l.ln(), r_min.ln());
    let f = |u: f64| {
        let (t, dt) = profile_in_log(ln_l, ln_r_min, u);
        (t - eps, dt)
    };
    let lo = ln_r_min;
    let mut hi = ln_r_min + std::f64::consts::LN_2;
    let mut doublings = 0;
    while f(hi).0 > 0.0 {
        hi += std::f64::consts::LN_2;
        doublings += 1;
        if doublings > 2000 {
            return Err(LjfError::Convergence { lo: lo.exp(), hi: hi.exp(), iterations: doublings });
        }
    }
    let u = newton_bisect(f, lo, hi, 0.25 * R_EPS_TOLERANCE).map_err(|e| LjfError::Convergence {
        lo: e.lo.exp(),
        hi: e.hi.exp(),
        iterations: e.iterations,
    })?;
    let residual = f(u).0;
    if residual.abs() > R_EPS_TOLERANCE {
        return Err(LjfError::Convergence { lo: u.exp(), hi: u.exp(), iterations: crate::roots::MAX_ITERATIONS });
    }
    Ok(u.exp())
}

/// Finds the decay shape `delta` for which the force at `r_eps` equals
/// `-eps M`, given the remaining shape quantities.
pub fn solve_delta(l: f64, r_min: f64, m: f64, eps: f64, r_eps: f64) -> Result<f64, LjfError> {
    positive("M", m)?;
    let r_lower = solve_r_eps(l, r_min, eps)?;
    if !(r_eps > r_lower) || !r_eps.is_finite() {
        return Err(LjfError::InfeasibleTarget { r_eps, r_lower });
    }
    // g(v) = -F_delta(r_eps)/M - eps with delta = e^v; increasing in v
    let g = |v: f64| {
        let shape = LjfShape { l, r_min, m: 1.0, delta: v.exp() };
        -shape.force(r_eps) - eps
    };
    let gd = |v: f64| {
        let h = 1e-6;
        (g(v), (g(v + h) - g(v - h)) / (2.0 * h))
    };
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    let mut expansions = 0;
    while g(lo) >= 0.0 {
        lo -= 1.0;
        expansions += 1;
        if expansions > 700 {
            return Err(LjfError::Convergence { lo: lo.exp(), hi: hi.exp(), iterations: expansions });
        }
    }
    while g(hi) <= 0.0 {
        hi += 1.0;
        expansions += 1;
        if expansions > 700 {
            return Err(LjfError::Convergence { lo: lo.exp(), hi: hi.exp(), iterations: expansions });
        }
    }
    let v = newton_bisect(gd, lo, hi, 1e-3 * DELTA_TOLERANCE).map_err(|e| LjfError::Convergence {
        lo: e.lo.exp(),
        hi: e.hi.exp(),
        iterations: e.iterations,
    })?;
    if g(v).abs() > DELTA_TOLERANCE {
        return Err(LjfError::Convergence { lo: v.exp(), hi: v.exp(), iterations: crate::roots::MAX_ITERATIONS });
    }
    Ok(v.exp())
}
