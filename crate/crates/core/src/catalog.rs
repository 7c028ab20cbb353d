//! Analytic inequality families: coefficient constructors, closed-form
//! classical bounds, optimal planar measurement angles, and the
//! collective-moment witness conditions that guarantee a violation when the
//! corresponding measurements are performed.
//!
//! Every closed-form bound here is cross-checked against the exhaustive
//! enumeration of [`crate::oracle`] in the test suite; the witnesses are
//! strict inequalities (equality does not certify).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::oracle::{self, BellCandidate};
use crate::scenario::{AngleSet, QuantumData};

/// One analytic family instance: its candidate coefficients, the closed-form
/// classical bound (per particle, so `analytic_bound(N) = N * bound`), and
/// the optimal measurement angles where they are parameter-free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub candidate: BellCandidate,
    /// Classical bound divided by N.
    pub bound_per_particle: f64,
    /// Optimal measurement angles, when independent of the state parameters.
    pub optimal_angles: Option<Vec<f64>>,
    /// Human-readable description of the witness condition.
    pub witness: String,
}

impl CatalogEntry {
    pub fn analytic_bound(&self, n_parties: usize) -> f64 {
        n_parties as f64 * self.bound_per_particle
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("CatalogEntry serializes")
    }
}

fn sym(rows: &[Vec<f64>]) -> SymMat {
    SymMat::from_rows(rows, 1e-12).expect("catalog coefficient matrices are symmetric")
}

/// Names accepted by [`build`].
pub fn names() -> &'static [&'static str] {
    &[
        "singlet_k_family",
        "tura_tight",
        "turalike_k3",
        "singlet_halfinteger_j",
        "singlet_anyj",
        "squeezed_spin_j",
        "squeezed_alt",
    ]
}

/// Builds an entry by name; unspecified parameters take the documented
/// defaults (`k = 3`, `a = 1`, `two_j` as noted per family).
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let get_u32 = |key: &str, default: u32| -> Result<u32> {
        match params.get(key) {
            None => Ok(default),
            Some(&v) => {
                if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                    Err(Error::InvalidData(format!(
                        "parameter {key} = {v} is not a small non-negative integer"
                    )))
                } else {
                    Ok(v as u32)
                }
            }
        }
    };
    match name {
        "singlet_k_family" => singlet_k_family(get_u32("k", 3)? as usize),
        "tura_tight" => Ok(tura_tight()),
        "turalike_k3" => turalike_k3(*params.get("a").unwrap_or(&1.0)),
        "singlet_halfinteger_j" => singlet_halfinteger_j(get_u32("two_j", 1)?),
        "singlet_anyj" => singlet_anyj(get_u32("two_j", 2)?),
        "squeezed_spin_j" => squeezed_spin_j(get_u32("two_j", 1)?),
        "squeezed_alt" => squeezed_alt(get_u32("two_j", 2)?),
        _ => Err(Error::InvalidData(format!(
            "unknown catalog entry '{name}'; known: {:?}",
            names()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Singlet family for k settings (spin-1/2).
// ---------------------------------------------------------------------------

/// The k-setting singlet inequality for spin-1/2: `A_ab = cos(pi (a-b)/k)`,
/// no linear part, classical bound `-N / (4 sin^2(pi/2k))`, maximally
/// violated by many-body singlets measured at `theta_a = a pi / k`.
pub fn singlet_k_family(k: usize) -> Result<CatalogEntry> {
    if k < 2 {
        return Err(Error::InvalidData("singlet_k_family needs k >= 2".into()));
    }
    let a = SymMat::from_fn(k, |p, q| (PI * (p as f64 - q as f64) / k as f64).cos());
    let candidate = BellCandidate::quadratic(1, a)?;
    let mut params = BTreeMap::new();
    params.insert("k".into(), k as f64);
    Ok(CatalogEntry {
        name: "singlet_k_family".into(),
        params,
        candidate,
        bound_per_particle: -1.0 / (4.0 * (PI / (2.0 * k as f64)).sin().powi(2)),
        optimal_angles: Some((0..k).map(|a| a as f64 * PI / k as f64).collect()),
        witness: "(Var(Jx)+Var(Jy))/N < 1/2 - 1/(k^2 sin^2(pi/2k))".into(),
    })
}

/// Witness threshold of the k-setting singlet family on
/// `(Var(Jx) + Var(Jy))/N`; tends to `1/2 - 4/pi^2` as k grows.
pub fn singlet_k_threshold(k: usize) -> f64 {
    let kf = k as f64;
    0.5 - 1.0 / (kf * kf * (PI / (2.0 * kf)).sin().powi(2))
}

/// Strict witness for the k-setting singlet family.
pub fn witness_singlet_k(var_x: f64, var_y: f64, n_parties: usize, k: usize) -> bool {
    (var_x + var_y) / (n_parties as f64) < singlet_k_threshold(k)
}

// ---------------------------------------------------------------------------
// Two-setting spin-1/2 inequality (tightened Tura et al. form).
// ---------------------------------------------------------------------------

/// The tight two-setting spin-1/2 inequality
/// `Ct_00 + Ct_11 - Ct_01 - Ct_10 - M_0 - M_1 >= -N`
/// for measurements at angles `(theta, -theta)`.
pub fn tura_tight() -> CatalogEntry {
    let candidate = BellCandidate::new(
        1,
        sym(&[vec![1.0, -1.0], vec![-1.0, 1.0]]),
        vec![-1.0, -1.0],
        vec![0.0, 0.0],
    )
    .expect("static coefficients");
    CatalogEntry {
        name: "tura_tight".into(),
        params: BTreeMap::new(),
        candidate,
        bound_per_particle: -1.0,
        optimal_angles: None,
        witness: "4 Var(Jy) - <Jx>^2 / (N - 4 Var(Jy)) < 0 at cos(theta) = <Jx>/(N - 4 Var(Jy))"
            .into(),
    }
}

/// Value of the linear counterpart of a candidate: the same coefficients
/// applied to the raw correlations C instead of Ct. The difference to the
/// nonlinear value is `-sum_ab A_ab M_a M_b`.
pub fn linear_value(cand: &BellCandidate, data: &QuantumData) -> Result<f64> {
    if cand.k() != data.scenario().n_settings() {
        return Err(Error::ShapeMismatch(format!(
            "candidate has k = {}, data has k = {}",
            cand.k(),
            data.scenario().n_settings()
        )));
    }
    let c = data.c_matrix();
    Ok(cand.a.dot(&c)
        + crate::linalg::vec_dot(&cand.h, data.m())
        + crate::linalg::vec_dot(&cand.h2, data.m2()))
}

/// Quantum value of the two-setting inequality at measurement angles
/// `(theta, -theta)` for a state with mean spin `jx` along x and transverse
/// variance `var_y` (assuming `<Jy> = 0` and spin-1/2 constituents).
pub fn tura_value(theta: f64, n_parties: usize, jx: f64, var_y: f64) -> f64 {
    let n = n_parties as f64;
    let s2 = theta.sin().powi(2);
    4.0 * s2 * var_y - 2.0 * theta.cos() * jx - n * s2
}

/// Optimal angle `cos(theta) = jx / (N - 4 var_y)`, clamped to `theta = 0`
/// when the quotient exceeds one.
pub fn tura_optimal_theta(n_parties: usize, jx: f64, var_y: f64) -> f64 {
    let denom = n_parties as f64 - 4.0 * var_y;
    if denom <= 0.0 {
        return PI / 2.0;
    }
    let c = jx / denom;
    if c >= 1.0 {
        0.0
    } else {
        c.acos()
    }
}

/// Minimal quantum value of the two-setting inequality over theta.
pub fn tura_value_at_optimum(n_parties: usize, jx: f64, var_y: f64) -> f64 {
    tura_value(tura_optimal_theta(n_parties, jx, var_y), n_parties, jx, var_y)
}

// ---------------------------------------------------------------------------
// Three-setting family with an extra y-axis measurement.
// ---------------------------------------------------------------------------

/// The three-setting spin-1/2 family with parameter `a >= 0`: settings
/// `(theta, -theta, y-axis)`, classical bound `-N (1 + a/2)^2`; reduces to
/// [`tura_tight`] at `a = 0`.
pub fn turalike_k3(a: f64) -> Result<CatalogEntry> {
    if !(a >= 0.0) {
        return Err(Error::InvalidData(format!("parameter a = {a} must be >= 0")));
    }
    let candidate = BellCandidate::new(
        1,
        sym(&[
            vec![1.0, -1.0, a],
            vec![-1.0, 1.0, -a],
            vec![a, -a, a * a],
        ]),
        vec![-(1.0 + a), -(1.0 + a), 0.0],
        vec![0.0; 3],
    )?;
    let mut params = BTreeMap::new();
    params.insert("a".into(), a);
    Ok(CatalogEntry {
        name: "turalike_k3".into(),
        params,
        candidate,
        bound_per_particle: -(1.0 + a / 2.0).powi(2),
        optimal_angles: None,
        witness: "max_theta [(1+a) m_x cos(theta) + (1-chi2)(a/2 + sin(theta))^2] / (1+a/2)^2 > 1"
            .into(),
    })
}

/// Angles `(theta, -theta, pi/2)` of the three-setting family.
pub fn turalike_angles(theta: f64) -> Result<AngleSet> {
    AngleSet::new(vec![theta, -theta, PI / 2.0])
}

/// Violation ratio `|<B>/B_c|` of the three-setting family on squeezed-state
/// data with Rabi contrast `m_x` and scaled variance `chi2`; values above
/// one certify a violation and measure the tolerated white-noise fraction.
pub fn turalike_ratio(theta: f64, a: f64, m_x: f64, chi2: f64) -> f64 {
    ((1.0 + a) * m_x * theta.cos() + (1.0 - chi2) * (a / 2.0 + theta.sin()).powi(2))
        / (1.0 + a / 2.0).powi(2)
}

/// Maximizes [`turalike_ratio`] over `a >= 0` at fixed angle: bracket by
/// doubling up to `a = 1e4`, then golden-section refine. The endpoints
/// `a = 0` and `a = 1` always take part in the final comparison.
pub fn optimal_a(theta: f64, m_x: f64, chi2: f64) -> (f64, f64) {
    let f = |a: f64| turalike_ratio(theta, a, m_x, chi2);
    // Coarse scan over a doubling grid to bracket the global maximum.
    let mut grid = vec![0.0, 0.5, 1.0];
    let mut a = 2.0;
    while a <= 1e4 {
        grid.push(a);
        a *= 2.0;
    }
    let mut best_i = 0;
    for (i, &g) in grid.iter().enumerate() {
        if f(g) > f(grid[best_i]) {
            best_i = i;
        }
    }
    let lo = if best_i == 0 { 0.0 } else { grid[best_i - 1] };
    let hi = if best_i + 1 < grid.len() {
        grid[best_i + 1]
    } else {
        grid[best_i] * 2.0
    };
    // Golden-section search for the maximum on [lo, hi].
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo, hi);
    let (mut x1, mut x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-12 * (1.0 + hi.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let a_star = 0.5 * (lo + hi);
    let mut best = a_star;
    for c in [0.0, 1.0] {
        if f(c) > f(best) {
            best = c;
        }
    }
    (best, f(best))
}

/// Wineland spin-squeezing criterion `m_x^2 > chi2`.
pub fn wineland(m_x: f64, chi2: f64) -> bool {
    m_x * m_x > chi2
}

// ---------------------------------------------------------------------------
// Three-setting singlet inequality for half-integer spins.
// ---------------------------------------------------------------------------

/// Three-setting singlet inequality valid for half-integer spins:
/// `A = [[2,1,-1],[1,2,1],[-1,1,2]]`, `h2 = (3,3,3)`, bound `+N/4`
/// (the effective quadratic form is `-(s0 - s1 + s2)^2`, whose maximum over
/// half-integer outcomes is `-1/4`). Optimal angles `(pi/3, 0, -pi/3)`.
pub fn singlet_halfinteger_j(two_j: u32) -> Result<CatalogEntry> {
    if two_j % 2 == 0 || two_j == 0 {
        return Err(Error::InvalidData(format!(
            "singlet_halfinteger_j needs a half-integer spin (odd two_j), got two_j = {two_j}"
        )));
    }
    let candidate = BellCandidate::new(
        two_j,
        sym(&[
            vec![2.0, 1.0, -1.0],
            vec![1.0, 2.0, 1.0],
            vec![-1.0, 1.0, 2.0],
        ]),
        vec![0.0; 3],
        vec![3.0; 3],
    )?;
    let mut params = BTreeMap::new();
    params.insert("two_j".into(), two_j as f64);
    Ok(CatalogEntry {
        name: "singlet_halfinteger_j".into(),
        params,
        candidate,
        bound_per_particle: 0.25,
        optimal_angles: Some(vec![PI / 3.0, 0.0, -PI / 3.0]),
        witness: "Var(Jx) + Var(Jy) < N/18".into(),
    })
}

/// Strict witness of the half-integer three-setting singlet inequality.
pub fn witness_singlets_1(var_x: f64, var_y: f64, n_parties: usize) -> bool {
    var_x + var_y < n_parties as f64 / 18.0
}

// ---------------------------------------------------------------------------
// Three-setting singlet family for arbitrary spin.
// ---------------------------------------------------------------------------

/// Three-setting singlet inequality valid for every spin j:
/// effective quadratic `At = 2j [[-2j,1,-2j],[1,0,1],[-2j,1,-2j]]` with
/// `h2 = 8j^2 (1,1,1) + (1,0,1)`, classical bound 0, optimal angles
/// `(arccos(1/4j), 0, -arccos(1/4j))`.
pub fn singlet_anyj(two_j: u32) -> Result<CatalogEntry> {
    if two_j == 0 {
        return Err(Error::InvalidScenario("two_j must be >= 1".into()));
    }
    let j = two_j as f64 / 2.0;
    let candidate = BellCandidate::new(
        two_j,
        sym(&[
            vec![4.0 * j * j + 1.0, 2.0 * j, -4.0 * j * j],
            vec![2.0 * j, 8.0 * j * j, 2.0 * j],
            vec![-4.0 * j * j, 2.0 * j, 4.0 * j * j + 1.0],
        ]),
        vec![0.0; 3],
        vec![8.0 * j * j + 1.0, 8.0 * j * j, 8.0 * j * j + 1.0],
    )?;
    let t = (1.0 / (4.0 * j)).acos();
    let mut params = BTreeMap::new();
    params.insert("two_j".into(), two_j as f64);
    Ok(CatalogEntry {
        name: "singlet_anyj".into(),
        params,
        candidate,
        bound_per_particle: 0.0,
        optimal_angles: Some(vec![t, 0.0, -t]),
        witness: "Var(Jx)(2+8j^2+1/8j^2) + Var(Jy)(1+16j^2-1/8j^2) < sum_i <Sx_i^2>".into(),
    })
}

/// Strict witness of the any-spin singlet family; `sum_sx2` is the summed
/// per-particle second moment along x.
pub fn witness_singlets_2(
    var_x: f64,
    var_y: f64,
    sum_sx2: f64,
    _n_parties: usize,
    two_j: u32,
) -> bool {
    let j = two_j as f64 / 2.0;
    let j2 = j * j;
    var_x * (2.0 + 8.0 * j2 + 1.0 / (8.0 * j2)) + var_y * (1.0 + 16.0 * j2 - 1.0 / (8.0 * j2))
        - sum_sx2
        < 0.0
}

// ---------------------------------------------------------------------------
// SU(2)-invariant witness for generic singlet-type candidates.
// ---------------------------------------------------------------------------

/// Threshold on `Var(Jx)/N` below which an SU(2)-invariant state violates
/// the candidate at the given angles:
/// `[ (j(j+1)/3) sum_ab cos(theta_a - theta_b) At_ab - E_max(At) ]
///  / [ sum_ab cos(theta_a - theta_b) A_ab ]`.
/// Returns `None` when the denominator is not positive (no violation
/// direction at these angles).
pub fn su2_threshold(cand: &BellCandidate, angles: &AngleSet) -> Result<Option<f64>> {
    if angles.len() != cand.k() {
        return Err(Error::ShapeMismatch(format!(
            "candidate has k = {}, angle set has {}",
            cand.k(),
            angles.len()
        )));
    }
    let k = cand.k();
    let th = angles.as_slice();
    let at = cand.a_tilde();
    let mut num_quad = 0.0;
    let mut denom = 0.0;
    for a in 0..k {
        for b in 0..k {
            let c = (th[a] - th[b]).cos();
            num_quad += at.get(a, b) * c;
            denom += cand.a.get(a, b) * c;
        }
    }
    if denom <= 0.0 {
        return Ok(None);
    }
    let j = cand.two_j() as f64 / 2.0;
    let emax = oracle::e_max(&BellCandidate::quadratic(cand.two_j(), at)?)?.value;
    Ok(Some((j * (j + 1.0) / 3.0 * num_quad - emax) / denom))
}

/// Strict SU(2)-invariant witness: `Var(Jx)/N` below the threshold.
pub fn witness_su2(
    cand: &BellCandidate,
    angles: &AngleSet,
    var_x: f64,
    n_parties: usize,
) -> Result<bool> {
    Ok(match su2_threshold(cand, angles)? {
        None => false,
        Some(t) => var_x / (n_parties as f64) < t,
    })
}

// ---------------------------------------------------------------------------
// Two-setting squeezing inequality for arbitrary spin.
// ---------------------------------------------------------------------------

/// The spin-j generalization of the two-setting squeezing inequality:
/// `Tr(A Ct) + 2 M2_0 + 2 M2_1 - M_0 - M_1 >= 0` (per-particle energy
/// `-(s0+s1)(s0+s1-1) <= 0` for any spin, since `s0+s1` is an integer).
pub fn squeezed_spin_j(two_j: u32) -> Result<CatalogEntry> {
    if two_j == 0 {
        return Err(Error::InvalidScenario("two_j must be >= 1".into()));
    }
    let candidate = BellCandidate::new(
        two_j,
        sym(&[vec![1.0, -1.0], vec![-1.0, 1.0]]),
        vec![-1.0, -1.0],
        vec![2.0, 2.0],
    )?;
    let mut params = BTreeMap::new();
    params.insert("two_j".into(), two_j as f64);
    Ok(CatalogEntry {
        name: "squeezed_spin_j".into(),
        params,
        candidate,
        bound_per_particle: 0.0,
        optimal_angles: None,
        witness: "4 Var(Jy) - <Jx>^2 / (4 [N sx2 - Var(Jy)]) < 0 (cos(theta) clamped to <= 1)"
            .into(),
    })
}

/// Quantum value of [`squeezed_spin_j`] at angles `(theta, -theta)`:
/// `4 Var(Jy) sin^2 + 4 N sx2 cos^2 - 2 <Jx> cos`.
pub fn squeezed_spin_j_value(theta: f64, n_parties: usize, jx: f64, var_y: f64, sx2: f64) -> f64 {
    let n = n_parties as f64;
    4.0 * var_y * theta.sin().powi(2) - 2.0 * jx * theta.cos()
        + 4.0 * n * sx2 * theta.cos().powi(2)
}

/// Optimal angle `cos(theta) = <Jx> / (4 N sx2 - 4 Var(Jy))`, clamped.
pub fn squeezed_spin_j_optimal_theta(n_parties: usize, jx: f64, var_y: f64, sx2: f64) -> f64 {
    let denom = 4.0 * (n_parties as f64 * sx2 - var_y);
    if denom <= 0.0 {
        return PI / 2.0;
    }
    let c = jx / denom;
    if c >= 1.0 {
        0.0
    } else {
        c.acos()
    }
}

/// Minimal quantum value over theta; negative certifies a violation.
pub fn squeezed_spin_j_value_at_optimum(
    n_parties: usize,
    jx: f64,
    var_y: f64,
    sx2: f64,
) -> f64 {
    squeezed_spin_j_value(
        squeezed_spin_j_optimal_theta(n_parties, jx, var_y, sx2),
        n_parties,
        jx,
        var_y,
        sx2,
    )
}

/// Strict witness for [`squeezed_spin_j`].
pub fn witness_squeezed_spin_j(n_parties: usize, jx: f64, var_y: f64, sx2: f64) -> bool {
    squeezed_spin_j_value_at_optimum(n_parties, jx, var_y, sx2) < 0.0
}

// ---------------------------------------------------------------------------
// Alternative two-setting squeezing inequality.
// ---------------------------------------------------------------------------

/// A second two-setting squeezing inequality,
/// `Tr(A Ct) + M2_0 + M2_1 - 2 M_0 - 2 M_1 >= B_c`, with per-particle energy
/// `-2 (s0 s1 - s0 - s1)`. The enumerated bound is `-2 N j^2` for j >= 1;
/// for j = 1/2 the alphabet has no outcome at `s = 1`, the minimum of
/// `s0 s1 - s0 - s1` is `-3/4`, and the tight bound is `-3N/2` instead.
pub fn squeezed_alt(two_j: u32) -> Result<CatalogEntry> {
    if two_j == 0 {
        return Err(Error::InvalidScenario("two_j must be >= 1".into()));
    }
    let j = two_j as f64 / 2.0;
    let candidate = BellCandidate::new(
        two_j,
        sym(&[vec![1.0, -1.0], vec![-1.0, 1.0]]),
        vec![-2.0, -2.0],
        vec![1.0, 1.0],
    )?;
    let bound_per_particle = if two_j == 1 { -1.5 } else { -2.0 * j * j };
    let mut params = BTreeMap::new();
    params.insert("two_j".into(), two_j as f64);
    Ok(CatalogEntry {
        name: "squeezed_alt".into(),
        params,
        candidate,
        bound_per_particle,
        optimal_angles: None,
        witness:
            "2 [2 Var(Jy) - N sy2] - 2 <Jx>^2 / (N sx2 + N sy2 - 2 Var(Jy)) < B_c (clamped theta)"
                .into(),
    })
}

/// Quantum value of [`squeezed_alt`] at angles `(theta, -theta)`.
pub fn squeezed_alt_value(
    theta: f64,
    n_parties: usize,
    jx: f64,
    var_y: f64,
    sx2: f64,
    sy2: f64,
) -> f64 {
    let n = n_parties as f64;
    let (s2, c2) = (theta.sin().powi(2), theta.cos().powi(2));
    4.0 * var_y * s2 - 4.0 * jx * theta.cos() + 2.0 * n * (sx2 * c2 - sy2 * s2)
}

/// Optimal angle `cos(theta) = <Jx> / (N sx2 + N sy2 - 2 Var(Jy))`, clamped.
pub fn squeezed_alt_optimal_theta(
    n_parties: usize,
    jx: f64,
    var_y: f64,
    sx2: f64,
    sy2: f64,
) -> f64 {
    let n = n_parties as f64;
    let denom = n * sx2 + n * sy2 - 2.0 * var_y;
    if denom <= 0.0 {
        return PI / 2.0;
    }
    let c = jx / denom;
    if c >= 1.0 {
        0.0
    } else {
        c.acos()
    }
}

/// Minimal quantum value of [`squeezed_alt`] over theta.
pub fn squeezed_alt_value_at_optimum(
    n_parties: usize,
    jx: f64,
    var_y: f64,
    sx2: f64,
    sy2: f64,
) -> f64 {
    squeezed_alt_value(
        squeezed_alt_optimal_theta(n_parties, jx, var_y, sx2, sy2),
        n_parties,
        jx,
        var_y,
        sx2,
        sy2,
    )
}
