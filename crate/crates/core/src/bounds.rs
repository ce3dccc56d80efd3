//! Computable quantities from the convergence analysis.
//!
//! The prior-mass exponent `Xi(delta) = -log Pi(||A - A*||_n < delta)` is
//! always evaluated through its closed-form upper bound, and the universal
//! constants in the rate theorems are set to 1, so every rate reported here
//! is a "bound shape" rather than a certified bound.

use crate::error::{Error, Result};
use crate::sampler::Hyperparams;

/// Problem sizes and truth summaries that the bounds depend on.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemProfile {
    pub dims: Vec<usize>,
    pub n: usize,
    pub d_star: usize,
    /// `sum_k ||U*^(k)||_F^2` of a decomposition of the truth.
    pub frob_sq_sum: f64,
    /// Max-norm of the truth, or an upper bound on it.
    pub max2: f64,
    pub hp: Hyperparams,
}

impl ProblemProfile {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad dims {:?}", self.dims)));
        }
        if self.n == 0 || self.d_star == 0 {
            return Err(Error::InvalidArgument("n and d_star must be positive".into()));
        }
        if self.d_star > self.hp.d_max {
            return Err(Error::InvalidArgument(format!(
                "d_star {} exceeds d_max {}",
                self.d_star, self.hp.d_max
            )));
        }
        if !(self.frob_sq_sum >= 0.0 && self.frob_sq_sum.is_finite())
            || !(self.max2 >= 0.0 && self.max2.is_finite())
        {
            return Err(Error::InvalidArgument(
                "frob_sq_sum and max2 must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dim_sum(&self) -> f64 {
        self.dims.iter().sum::<usize>() as f64
    }
}

/// Upper bound on `Xi(r / sqrt(n))`:
///
/// `d* (sum M_k) log[(6/xi) max(sqrt(n) sp^K K (max2/sp + 1)^(K-1) / r, 1)]
///  + d* sum_k ||U*^(k)||_F^2 / (2 sp^2)`.
pub fn xi_upper_bound(profile: &ProblemProfile, r: f64) -> Result<f64> {
    profile.validate()?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let k = profile.order() as i32;
    let sp = profile.hp.sigma_p;
    let d_star = profile.d_star as f64;
    let spread = (profile.n as f64).sqrt() * sp.powi(k) * k as f64 * (profile.max2 / sp + 1.0).powi(k - 1) / r;
    Ok(d_star * profile.dim_sum() * ((6.0 / profile.hp.xi) * spread.max(1.0)).ln()
        + d_star * profile.frob_sq_sum / (2.0 * sp * sp))
}

/// `(C_{n,K}, c_eps)` with `Xi(1/sqrt(n))` replaced by its upper bound.
pub fn constants(profile: &ProblemProfile) -> Result<(f64, f64)> {
    let xi_one = xi_upper_bound(profile, 1.0)?;
    let k = profile.order() as f64;
    let sp = profile.hp.sigma_p;
    let c_nk = 3.0 * k * (profile.n as f64).sqrt()
        * (4.0 * sp * sp * xi_one / profile.d_star as f64).powf(k / 2.0);
    if !(c_nk > 1.0) || !c_nk.is_finite() {
        return Err(Error::DegenerateProfile(format!(
            "C_nK = {c_nk} must exceed 1 for log(C_nK) to be positive"
        )));
    }
    let c_eps = (profile.hp.xi.ln().abs() / c_nk.ln()).min(1.0) / 4.0;
    Ok((c_nk, c_eps))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    /// `(r, bound on Xi(r / sqrt(n)))` for every radius the report used.
    pub xi_at: Vec<(f64, f64)>,
    pub c_nk: f64,
    pub c_eps: f64,
    /// In-sample rate.
    pub t1_bound: f64,
    /// Out-of-sample rate under infinity-norm rejection.
    pub t2_bound: Option<f64>,
    /// Out-of-sample rate under max-norm rejection.
    pub t3_bound: Option<f64>,
    /// `3 K sqrt(n) R^(K/2)`, the max-norm analogue of `C_{n,K}`.
    pub c_nk_max_norm: Option<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `8^K (K + 1)!`
fn combinatorial_term(k: usize) -> f64 {
    8f64.powi(k as i32) * factorial(k + 1)
}

struct Shared {
    xi_one: f64,
    xi_eps: f64,
    r_eps: f64,
    c_nk: f64,
    c_eps: f64,
}

fn shared(profile: &ProblemProfile) -> Result<Shared> {
    let (c_nk, c_eps) = constants(profile)?;
    let r_eps = c_eps.sqrt();
    Ok(Shared {
        xi_one: xi_upper_bound(profile, 1.0)?,
        xi_eps: xi_upper_bound(profile, r_eps)?,
        r_eps,
        c_nk,
        c_eps,
    })
}

fn in_sample(profile: &ProblemProfile, s: &Shared) -> f64 {
    let k = profile.order();
    let log_xi = profile.hp.xi.ln().abs();
    (profile.d_star as f64 * (profile.dim_sum() + 1.0 / log_xi) * s.c_nk.ln()
        + s.xi_eps / s.c_eps
        + (profile.hp.d_max as f64).ln()
        + k as f64
        + combinatorial_term(k))
        / profile.n as f64
}

/// Report with the in-sample rate only; used when no radius is known.
pub fn in_sample_bounds(profile: &ProblemProfile) -> Result<BoundReport> {
    let s = shared(profile)?;
    Ok(BoundReport {
        xi_at: vec![(1.0, s.xi_one), (s.r_eps, s.xi_eps)],
        c_nk: s.c_nk,
        c_eps: s.c_eps,
        t1_bound: in_sample(profile, &s),
        t2_bound: None,
        t3_bound: None,
        c_nk_max_norm: None,
    })
}

/// All three rate expressions; requires the rejection radius `R`.
pub fn theorem_bounds(profile: &ProblemProfile) -> Result<BoundReport> {
    let radius = profile.hp.radius.ok_or_else(|| {
        Error::Config("the out-of-sample bounds need a rejection radius R".into())
    })?;
    let s = shared(profile)?;
    let k = profile.order();
    let kf = k as f64;
    let n = profile.n as f64;
    let d_star = profile.d_star as f64;
    let log_xi = profile.hp.xi.ln().abs();
    let sp = profile.hp.sigma_p;

    let t2 = radius.powi(2).max(1.0) / n
        * (d_star * (profile.dim_sum() + 3.0 / log_xi) * s.c_nk.ln()
            + s.xi_eps / s.c_eps
            + (profile.hp.d_max as f64).ln()
            + combinatorial_term(k));
    let t3 = d_star * profile.dim_sum() / n
        * radius.powf(2.0 * kf).max(1.0)
        * (kf * n.sqrt() * radius.powf(kf / 2.0) * sp.powf(kf) / profile.hp.xi).ln();

    Ok(BoundReport {
        xi_at: vec![(1.0, s.xi_one), (s.r_eps, s.xi_eps)],
        c_nk: s.c_nk,
        c_eps: s.c_eps,
        t1_bound: in_sample(profile, &s),
        t2_bound: Some(t2),
        t3_bound: Some(t3),
        c_nk_max_norm: Some(3.0 * kf * n.sqrt() * radius.powf(kf / 2.0)),
    })
}

/// Dominant-term form of the in-sample rate,
/// `d* (sum M_k) / n * log(K sqrt(n (sum M_k)^K) sp^K / xi)`.
pub fn simplified_in_sample_rate(profile: &ProblemProfile) -> f64 {
    let kf = profile.order() as f64;
    let n = profile.n as f64;
    let m = profile.dim_sum();
    profile.d_star as f64 * m / n
        * (kf * (n * m.powf(kf)).sqrt() * profile.hp.sigma_p.powf(kf) / profile.hp.xi).ln()
}

/// Tail bounds for a chi-square variable with `k` degrees of freedom.
///
/// Returns `(b1, b2)` where `b1 = exp(-x)` bounds
/// `P(chi_k >= k + 2 sqrt(k x) + 2x)` and
/// `b2 = exp(k/2 + (k/2) log(x/k) - x/2)` bounds `P(chi_k >= x)` for `x >= k`.
pub fn chi2_tail_bounds(k: usize, x: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Domain("chi-square needs k >= 1".into()));
    }
    let kf = k as f64;
    if !(x >= kf) {
        return Err(Error::Domain(format!("second chi-square bound needs x >= k, got x = {x}, k = {k}")));
    }
    let b1 = (-x).exp();
    let b2 = (kf / 2.0 + kf / 2.0 * (x / kf).ln() - x / 2.0).exp();
    Ok((b1, b2))
}

/// The first bound alone, `exp(-x)`, which needs only `x >= 0`.
pub fn chi2_shifted_tail_bound(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi-square tail bound needs x >= 0, got {x}")));
    }
    Ok((-x).exp())
}

/// Threshold `k + 2 sqrt(k x) + 2x` at which `exp(-x)` bounds the tail.
pub fn chi2_shifted_threshold(k: usize, x: f64) -> f64 {
    let kf = k as f64;
    kf + 2.0 * (x * kf).sqrt() + 2.0 * x
}

/// Lower bound `(eps / (3 sigma sqrt(d)))^d` on `P(||g|| <= eps)` for
/// `g ~ N(0, sigma^2 I_d)` and `eps <= sigma sqrt(d)`.
pub fn small_ball_lower_bound(d: usize, sigma: f64, eps: f64) -> Result<f64> {
    if d == 0 || !(sigma > 0.0) || !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "small-ball bound needs d >= 1, sigma > 0, eps > 0 (got {d}, {sigma}, {eps})"
        )));
    }
    let scale = sigma * (d as f64).sqrt();
    if eps > scale {
        return Err(Error::Domain(format!("eps = {eps} exceeds sigma * sqrt(d) = {scale}")));
    }
    Ok((eps / (3.0 * scale)).powi(d as i32))
}

/// Closed form of `int_{x >= a} x exp(-c x^(2/K)) dx`:
/// `1/2 sum_{i=1..K} K (K-1) ... (K-i+1) / c^i * a^((K-i) 2/K) * exp(-c a^(2/K))`.
pub fn tail_integral_closed_form(a: f64, c: f64, k: usize) -> Result<f64> {
    if !(a > 0.0) || !(c > 0.0) || k == 0 {
        return Err(Error::Domain(format!("need a > 0, c > 0, K >= 1 (got {a}, {c}, {k})")));
    }
    let kf = k as f64;
    let base = a.powf(2.0 / kf);
    let mut falling = 1.0;
    let mut total = 0.0;
    for i in 1..=k {
        falling *= (k - i + 1) as f64;
        total += falling / c.powi(i as i32) * base.powi((k - i) as i32);
    }
    Ok(0.5 * total * (-c * base).exp())
}

/// Both sides of the generalized Hoelder product inequality for vectors
/// `u^(1), ..., u^(K)` of a common length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderCheck {
    /// `|sum_i prod_k u^(k)_i|`
    pub inner: f64,
    /// `prod_k ||u^(k)||_K`
    pub prod_lk: f64,
    /// `prod_k ||u^(k)||_2`
    pub prod_l2: f64,
}

impl HolderCheck {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.inner <= self.prod_lk * (1.0 + rel_tol) && self.prod_lk <= self.prod_l2 * (1.0 + rel_tol)
    }
}

pub fn holder_product_check(vectors: &[Vec<f64>]) -> Result<HolderCheck> {
    let k = vectors.len();
    if k < 2 {
        return Err(Error::Domain("the product inequality needs K >= 2 vectors".into()));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Structural("vectors differ in length".into()));
    }
    let inner: f64 = (0..d).map(|i| vectors.iter().map(|v| v[i]).product::<f64>()).sum();
    let lp = |v: &[f64], p: f64| v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
    Ok(HolderCheck {
        inner: inner.abs(),
        prod_lk: vectors.iter().map(|v| lp(v, k as f64)).product(),
        prod_l2: vectors.iter().map(|v| lp(v, 2.0)).product(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn profile(dims: &[usize], d_star: usize, n: usize) -> ProblemProfile {
        ProblemProfile {
            dims: dims.to_vec(),
            n,
            d_star,
            frob_sq_sum: 12.0,
            max2: 3f64.sqrt(),
            hp: Hyperparams {
                sigma: 1.0,
                sigma_p: 5.0,
                xi: 0.5,
                d_max: 2 * d_star,
                radius: Some(10.0),
            },
        }
    }

    #[test]
    fn xi_bound_clamps_for_large_radius() {
        let p = profile(&[10, 10, 10], 4, 500);
        let v = xi_upper_bound(&p, 1e30).unwrap();
        let expected = 4.0 * 30.0 * (6.0f64 / 0.5).ln() + 4.0 * 12.0 / 50.0;
        assert!((v - expected).abs() < 1e-10);
    }

    #[test]
    fn xi_bound_formula() {
        let p = profile(&[10, 10, 10], 4, 500);
        let spread = 500f64.sqrt() * 125.0 * 3.0 * (3f64.sqrt() / 5.0 + 1.0).powi(2) / 2.0;
        let expected = 4.0 * 30.0 * (12.0 * spread).ln() + 4.0 * 12.0 / 50.0;
        assert!((xi_upper_bound(&p, 2.0).unwrap() - expected).abs() < 1e-9 * expected);
        assert!(xi_upper_bound(&p, 1.0).unwrap() >= xi_upper_bound(&p, 2.0).unwrap());
        assert!(matches!(xi_upper_bound(&p, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn c_eps_properties() {
        let p = profile(&[10, 10, 10], 4, 500);
        let (c_nk, c_eps) = constants(&p).unwrap();
        assert!(c_nk > 1.0 && c_eps <= 0.25 && c_eps > 0.0);
        let near_one = ProblemProfile {
            hp: Hyperparams { xi: 1.0 - 1e-9, ..p.hp.clone() },
            ..p
        };
        let (_, c_eps) = constants(&near_one).unwrap();
        assert!(c_eps < 1e-9);
    }

    #[test]
    fn missing_radius_is_a_config_error() {
        let mut p = profile(&[10, 10, 10], 4, 500);
        p.hp.radius = None;
        assert!(matches!(theorem_bounds(&p), Err(Error::Config(_))));
        let r = in_sample_bounds(&p).unwrap();
        assert!(r.t2_bound.is_none() && r.t3_bound.is_none());
    }

    #[test]
    fn unit_radius_leaves_t2_unscaled() {
        let mut p = profile(&[10, 10, 10], 4, 500);
        p.hp.radius = Some(1.0);
        let r = theorem_bounds(&p).unwrap();
        let (c_nk, c_eps) = (r.c_nk, r.c_eps);
        let xi_eps = xi_upper_bound(&p, c_eps.sqrt()).unwrap();
        let bracket = 4.0 * (30.0 + 3.0 / 0.5f64.ln().abs()) * c_nk.ln() + xi_eps / c_eps + 8f64.ln()
            + 512.0 * 24.0;
        assert!((r.t2_bound.unwrap() - bracket / 500.0).abs() < 1e-12 * bracket);
    }

    #[test]
    fn chi2_bound_edges() {
        let (_, b2) = chi2_tail_bounds(5, 5.0).unwrap();
        assert!((b2 - 1.0).abs() < 1e-15);
        let (_, b_lo) = chi2_tail_bounds(5, 6.0).unwrap();
        let (_, b_hi) = chi2_tail_bounds(5, 9.0).unwrap();
        assert!(b_hi < b_lo && b_lo < 1.0);
        assert!(matches!(chi2_tail_bounds(5, 4.0), Err(Error::Domain(_))));
    }

    #[test]
    fn small_ball_edges() {
        let d = 3;
        let sigma = 1.5;
        let edge = sigma * (d as f64).sqrt();
        assert!((small_ball_lower_bound(d, sigma, edge).unwrap() - (1.0f64 / 3.0).powi(3)).abs() < 1e-15);
        assert!(small_ball_lower_bound(d, sigma, 0.5).unwrap() < small_ball_lower_bound(d, sigma, 1.0).unwrap());
        assert!(matches!(small_ball_lower_bound(d, sigma, edge * 1.01), Err(Error::Domain(_))));
    }

    #[test]
    fn tail_integral_low_orders() {
        let (a, c) = (0.8, 1.7);
        let k1 = tail_integral_closed_form(a, c, 1).unwrap();
        assert!((k1 - (-c * a * a).exp() / (2.0 * c)).abs() < 1e-15);
        // K = 2 reduces to (a/c + 1/c^2) e^{-ca}
        let k2 = tail_integral_closed_form(1.0, 1.0, 2).unwrap();
        assert!((k2 - 2.0 / std::f64::consts::E).abs() < 1e-15);
        assert!(tail_integral_closed_form(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn holder_on_fixed_vectors() {
        let v = vec![vec![1.0, 2.0, -1.0], vec![0.5, -1.0, 2.0], vec![3.0, 1.0, 1.0]];
        let h = holder_product_check(&v).unwrap();
        assert_eq!(h.inner, (1.5f64 - 2.0 - 2.0).abs());
        assert!(h.holds(1e-12));
        assert!(holder_product_check(&v[..1]).is_err());
    }
}
