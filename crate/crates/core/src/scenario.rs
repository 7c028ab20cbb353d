//! Measurement scenarios, the coarse-grained moment data fed to the search,
//! and generators that produce such data from collective spin-moment models.
//!
//! Outcomes of a d-outcome measurement are the spin values
//! s in {-j, -j+1, ..., j} with d = 2j + 1. Internally every outcome is
//! stored as the integer 2s, so strategy enumeration and the classical
//! bounds computed from it stay exact in quarter-integer units; conversion
//! to floating point happens only when a cost or moment is evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, SymMat};

/// Absolute tolerance for symmetry checks on k x k moment matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on eigenvalues for positive-semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

/// An (N, k, d) measurement scenario: `n_parties` subsystems, `n_settings`
/// settings per subsystem, and outcomes `{-j, ..., j}` with `d = two_j + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "N")]
    n_parties: usize,
    #[serde(rename = "k")]
    n_settings: usize,
    two_j: u32,
}

impl Scenario {
    pub fn new(n_parties: usize, n_settings: usize, two_j: u32) -> Result<Self> {
        if n_parties < 2 {
            return Err(Error::InvalidScenario(format!(
                "need at least 2 parties, got {n_parties}"
            )));
        }
        if n_settings < 1 {
            return Err(Error::InvalidScenario("need at least 1 setting".into()));
        }
        if two_j < 1 {
            return Err(Error::InvalidScenario(
                "two_j = 0 means single-outcome measurements, which carry no information".into(),
            ));
        }
        Ok(Scenario {
            n_parties,
            n_settings,
            two_j,
        })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn n_settings(&self) -> usize {
        self.n_settings
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    /// Number of outcomes d = 2j + 1.
    pub fn n_outcomes(&self) -> usize {
        self.two_j as usize + 1
    }

    /// The spin length j as a float (exact: a half-integer).
    pub fn spin_j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    /// Outcomes in the exact 2s encoding: -two_j, -two_j + 2, ..., two_j.
    pub fn outcomes_2s(&self) -> Vec<i32> {
        let tj = self.two_j as i32;
        (0..=tj).map(|i| -tj + 2 * i).collect()
    }

    /// Number of hidden-strategy configurations d^k, or None on overflow.
    pub fn n_configs(&self) -> Option<u128> {
        let d = self.n_outcomes() as u128;
        let mut acc: u128 = 1;
        for _ in 0..self.n_settings {
            acc = acc.checked_mul(d)?;
        }
        Some(acc)
    }
}

/// The outcome alphabet (-j, -j+1, ..., j) as floats; each value is a
/// half-integer and therefore exact in binary floating point.
pub fn outcome_values(two_j: u32) -> Result<Vec<f64>> {
    if two_j < 1 {
        return Err(Error::InvalidScenario(
            "two_j = 0 means single-outcome measurements, which carry no information".into(),
        ));
    }
    let tj = two_j as i32;
    Ok((0..=tj).map(|i| (-tj + 2 * i) as f64 / 2.0).collect())
}

/// A set of k measurement angles in the xy-plane, wrapped into (-pi, pi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleSet(Vec<f64>);

impl AngleSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidData("empty angle set".into()));
        }
        let wrapped = angles
            .into_iter()
            .map(|a| {
                if !a.is_finite() {
                    return Err(Error::InvalidData("non-finite measurement angle".into()));
                }
                let mut w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                    - std::f64::consts::PI;
                if w == -std::f64::consts::PI {
                    w = std::f64::consts::PI;
                }
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AngleSet(wrapped))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Unit vector (cos theta_a, sin theta_a) of setting `a`.
    pub fn direction(&self, a: usize) -> [f64; 2] {
        [self.0[a].cos(), self.0[a].sin()]
    }
}

/// First and second moments of the collective spin, plus summed per-particle
/// second moments, for spin measurements in the xy-plane. This is everything
/// needed to produce [`QuantumData`] at arbitrary planar angles.
///
/// `mean` is (<Jx>, <Jy>); `cov` is the 2x2 covariance of (Jx, Jy) with the
/// symmetrized cross term; `single2` is the 2x2 matrix of summed
/// per-particle second moments, so that `n^T single2 n = sum_i <(n.S_i)^2>`
/// for a unit vector n in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveMomentModel {
    pub n_parties: usize,
    pub two_j: u32,
    pub mean: [f64; 2],
    pub cov: SymMat,
    pub single2: SymMat,
}

#[derive(Serialize, Deserialize)]
struct MomentModelWire {
    #[serde(rename = "N")]
    n: usize,
    two_j: u32,
    mean: [f64; 2],
    cov: Vec<Vec<f64>>,
    single2: Vec<Vec<f64>>,
}

impl Serialize for CollectiveMomentModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MomentModelWire {
            n: self.n_parties,
            two_j: self.two_j,
            mean: self.mean,
            cov: self.cov.rows(),
            single2: self.single2.rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CollectiveMomentModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = MomentModelWire::deserialize(deserializer)?;
        let cov = SymMat::from_rows(&wire.cov, SYMMETRY_TOL).map_err(serde::de::Error::custom)?;
        let single2 =
            SymMat::from_rows(&wire.single2, SYMMETRY_TOL).map_err(serde::de::Error::custom)?;
        CollectiveMomentModel::new(wire.n, wire.two_j, wire.mean, cov, single2)
            .map_err(serde::de::Error::custom)
    }
}

impl CollectiveMomentModel {
    pub fn new(
        n_parties: usize,
        two_j: u32,
        mean: [f64; 2],
        cov: SymMat,
        single2: SymMat,
    ) -> Result<Self> {
        if n_parties < 2 || two_j < 1 {
            return Err(Error::InvalidScenario(format!(
                "moment model needs N >= 2 and two_j >= 1, got N={n_parties}, two_j={two_j}"
            )));
        }
        if cov.dim() != 2 || single2.dim() != 2 {
            return Err(Error::ShapeMismatch(
                "cov and single2 must be 2x2 matrices".into(),
            ));
        }
        let n = n_parties as f64;
        let j = two_j as f64 / 2.0;
        if !mean.iter().all(|x| x.is_finite()) || vec_norm(&mean) > n * j * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvalidData(format!(
                "collective mean spin length {} exceeds N*j = {}",
                vec_norm(&mean),
                n * j
            )));
        }
        if cov.min_eigenvalue()? < -PSD_TOL {
            return Err(Error::InvalidData(
                "collective covariance is not positive semi-definite".into(),
            ));
        }
        // 0 <= n^T single2 n <= N j^2 for every direction n.
        let s2_eigs = single2.eigenvalues()?;
        if s2_eigs[0] < -PSD_TOL || s2_eigs[1] > n * j * j + PSD_TOL {
            return Err(Error::InvalidData(format!(
                "per-particle second moments out of range: eigenvalues {:?} not within [0, N*j^2 = {}]",
                s2_eigs,
                n * j * j
            )));
        }
        if two_j == 1 {
            // Operator identity for spin-1/2: every planar second moment is N/4.
            let q = n / 4.0;
            if single2.get(0, 0) != q
                || single2.get(1, 1) != q
                || single2.get(0, 1) != 0.0
            {
                return Err(Error::InvalidData(format!(
                    "for two_j = 1 the per-particle second moments are fixed to (N/4)*I = {q}*I"
                )));
            }
        }
        Ok(CollectiveMomentModel {
            n_parties,
            two_j,
            mean,
            cov,
            single2,
        })
    }

    pub fn var_x(&self) -> f64 {
        self.cov.get(0, 0)
    }

    pub fn var_y(&self) -> f64 {
        self.cov.get(1, 1)
    }

    pub fn mean_x(&self) -> f64 {
        self.mean[0]
    }

    /// Summed per-particle <Sx^2>.
    pub fn sum_sx2(&self) -> f64 {
        self.single2.get(0, 0)
    }
}

/// The permutationally-averaged data a Bell candidate is evaluated against:
/// first moments `M_a`, the connected two-body matrix
/// `Ct_ab = C_ab - M_a M_b`, and summed second moments `M2_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumData {
    scenario: Scenario,
    m: Vec<f64>,
    ct: SymMat,
    m2: Vec<f64>,
    c: Option<SymMat>,
}

#[derive(Serialize, Deserialize)]
struct QuantumDataWire {
    #[serde(rename = "N")]
    n: usize,
    two_j: u32,
    k: usize,
    #[serde(rename = "M")]
    m: Vec<f64>,
    #[serde(rename = "Ct")]
    ct: Vec<Vec<f64>>,
    #[serde(rename = "M2")]
    m2: Vec<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<Vec<f64>>>,
}

impl Serialize for QuantumData {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        QuantumDataWire {
            n: self.scenario.n_parties(),
            two_j: self.scenario.two_j(),
            k: self.scenario.n_settings(),
            m: self.m.clone(),
            ct: self.ct.rows(),
            m2: self.m2.clone(),
            c: self.c.as_ref().map(|c| c.rows()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuantumData {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = QuantumDataWire::deserialize(deserializer)?;
        let scenario = Scenario::new(wire.n, wire.k, wire.two_j).map_err(serde::de::Error::custom)?;
        let ct = SymMat::from_rows(&wire.ct, SYMMETRY_TOL).map_err(serde::de::Error::custom)?;
        let c = wire
            .c
            .map(|c| SymMat::from_rows(&c, SYMMETRY_TOL))
            .transpose()
            .map_err(serde::de::Error::custom)?;
        QuantumData::new(scenario, wire.m, ct, wire.m2, c).map_err(serde::de::Error::custom)
    }
}

impl QuantumData {
    pub fn new(
        scenario: Scenario,
        m: Vec<f64>,
        ct: SymMat,
        m2: Vec<f64>,
        c: Option<SymMat>,
    ) -> Result<Self> {
        let k = scenario.n_settings();
        if m.len() != k || m2.len() != k || ct.dim() != k {
            return Err(Error::ShapeMismatch(format!(
                "expected k = {k} entries in M, M2 and a {k}x{k} Ct matrix"
            )));
        }
        let n = scenario.n_parties() as f64;
        let j = scenario.spin_j();
        let slack = 1e-9 * (1.0 + n * j);
        for (a, &ma) in m.iter().enumerate() {
            if !ma.is_finite() || ma.abs() > n * j + slack {
                return Err(Error::InvalidData(format!(
                    "M[{a}] = {ma} outside [-N*j, N*j] = [{}, {}]",
                    -n * j,
                    n * j
                )));
            }
        }
        for (a, &m2a) in m2.iter().enumerate() {
            if !m2a.is_finite() || m2a < -slack || m2a > n * j * j + slack {
                return Err(Error::InvalidData(format!(
                    "M2[{a}] = {m2a} outside [0, N*j^2 = {}]",
                    n * j * j
                )));
            }
        }
        if let Some(cm) = &c {
            if cm.dim() != k {
                return Err(Error::ShapeMismatch("C matrix has wrong dimension".into()));
            }
            for a in 0..k {
                for b in 0..k {
                    let expect = cm.get(a, b) - m[a] * m[b];
                    let got = ct.get(a, b);
                    let scale = 1.0 + expect.abs().max(got.abs());
                    if (expect - got).abs() > 1e-9 * scale {
                        return Err(Error::InvalidData(format!(
                            "Ct[{a}][{b}] = {got} does not match C - M M^T = {expect}"
                        )));
                    }
                }
            }
        }
        Ok(QuantumData {
            scenario,
            m,
            ct,
            m2,
            c,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn ct(&self) -> &SymMat {
        &self.ct
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// The raw (disconnected) correlation matrix C = Ct + M M^T, either as
    /// stored or reconstructed.
    pub fn c_matrix(&self) -> SymMat {
        match &self.c {
            Some(c) => c.clone(),
            None => {
                let k = self.scenario.n_settings();
                SymMat::from_fn(k, |a, b| self.ct.get(a, b) + self.m[a] * self.m[b])
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("QuantumData serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Evaluates a moment model at planar measurement angles, producing the
/// coarse-grained data. With n_a = (cos theta_a, sin theta_a):
/// `M_a = mean . n_a`, `Ct_ab = n_a^T (cov - single2) n_b`,
/// `M2_a = n_a^T single2 n_a`.
pub fn data_from_moments(model: &CollectiveMomentModel, angles: &AngleSet) -> Result<QuantumData> {
    let k = angles.len();
    let scenario = Scenario::new(model.n_parties, k, model.two_j)?;
    let dirs: Vec<[f64; 2]> = (0..k).map(|a| angles.direction(a)).collect();
    let m: Vec<f64> = dirs
        .iter()
        .map(|n| model.mean[0] * n[0] + model.mean[1] * n[1])
        .collect();
    let diff = model.cov.add_scaled(&model.single2, -1.0);
    let ct = SymMat::from_fn(k, |a, b| diff.bilinear(&dirs[a], &dirs[b]));
    let m2: Vec<f64> = dirs.iter().map(|n| model.single2.quad_form(n)).collect();
    QuantumData::new(scenario, m, ct, m2, None)
}

/// Moment model of an SU(2)-invariant state: zero mean spin, isotropic
/// collective variance, and `sum_i <(n.S_i)^2> = N j (j+1) / 3` in every
/// direction. `su2_variance = 0` is a perfect many-body singlet.
pub fn singlet_model(
    n_parties: usize,
    two_j: u32,
    su2_variance: f64,
) -> Result<CollectiveMomentModel> {
    if !(su2_variance >= 0.0) {
        return Err(Error::InvalidData(format!(
            "su2_variance must be >= 0, got {su2_variance}"
        )));
    }
    let n = n_parties as f64;
    let j = two_j as f64 / 2.0;
    let cov = SymMat::identity(2).scaled(su2_variance);
    let single2 = SymMat::identity(2).scaled(n * j * (j + 1.0) / 3.0);
    CollectiveMomentModel::new(n_parties, two_j, [0.0, 0.0], cov, single2)
}

/// Data of an SU(2)-invariant state measured at the given planar angles.
/// For `su2_variance = 0` this is exactly the singlet data
/// `Ct_ab = -(N j (j+1)/3) cos(theta_a - theta_b)`, `M_a = 0`,
/// `M2_a = N j (j+1) / 3`.
pub fn singlet_data(
    n_parties: usize,
    two_j: u32,
    angles: &AngleSet,
    su2_variance: f64,
) -> Result<QuantumData> {
    data_from_moments(&singlet_model(n_parties, two_j, su2_variance)?, angles)
}

/// Parameters of a planar spin-squeezed moment model: mean spin along x with
/// Rabi contrast `m_x = 2<Jx>/N`, squeezed transverse variance
/// `chi2 = 4 Var(Jy)/N`, and per-particle second moments `sx2`, `sy2`
/// (per particle, i.e. `<Sx^2>` of one spin).
///
/// Unspecified fields fall back to modeling defaults: `var_x` to
/// `N * chi2 / 4` (isotropic transverse noise; the two-setting quantum
/// values do not depend on it at the optimal angle), `sx2` to `j^2` and
/// `sy2` to `j/2` (fully-stretched-state values), and both cross moments
/// to zero (principal axes aligned with x/y).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SqueezedParams {
    pub m_x: f64,
    pub chi2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sx2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sy2: Option<f64>,
    /// Symmetrized collective cross covariance (1/2)<{dJx, dJy}>.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_xy: Option<f64>,
}

impl SqueezedParams {
    pub fn new(m_x: f64, chi2: f64) -> Self {
        SqueezedParams {
            m_x,
            chi2,
            var_x: None,
            sx2: None,
            sy2: None,
            cov_xy: None,
        }
    }
}

/// Builds the squeezed-state moment model. Rejects `m_x` outside `[0, 2j]`
/// and `chi2` outside `[0, 4j^2]`.
pub fn squeezed_model(
    n_parties: usize,
    two_j: u32,
    params: &SqueezedParams,
) -> Result<CollectiveMomentModel> {
    let n = n_parties as f64;
    let j = two_j as f64 / 2.0;
    if !(params.m_x >= 0.0 && params.m_x <= 2.0 * j) {
        return Err(Error::InvalidData(format!(
            "m_x = {} outside [0, 2j = {}]",
            params.m_x,
            2.0 * j
        )));
    }
    if !(params.chi2 >= 0.0) {
        return Err(Error::InvalidData("chi2 must be >= 0".into()));
    }
    if params.chi2 > 4.0 * j * j {
        return Err(Error::InvalidData(format!(
            "chi2 = {} exceeds the physical maximum 4j^2 = {}",
            params.chi2,
            4.0 * j * j
        )));
    }
    let var_y = n * params.chi2 / 4.0;
    let var_x = params.var_x.unwrap_or(var_y);
    let mut cov = SymMat::zeros(2);
    cov.set_sym(0, 0, var_x);
    cov.set_sym(1, 1, var_y);
    cov.set_sym(0, 1, params.cov_xy.unwrap_or(0.0));
    let (sx2, sy2) = if two_j == 1 {
        (0.25, 0.25)
    } else {
        (params.sx2.unwrap_or(j * j), params.sy2.unwrap_or(j / 2.0))
    };
    let mut single2 = SymMat::zeros(2);
    single2.set_sym(0, 0, n * sx2);
    single2.set_sym(1, 1, n * sy2);
    CollectiveMomentModel::new(n_parties, two_j, [n * params.m_x / 2.0, 0.0], cov, single2)
}

/// Squeezed-state data at the given planar angles (see [`squeezed_model`]).
pub fn squeezed_data(
    n_parties: usize,
    two_j: u32,
    params: &SqueezedParams,
    angles: &AngleSet,
) -> Result<QuantumData> {
    data_from_moments(&squeezed_model(n_parties, two_j, params)?, angles)
}

/// Mixes the data with the maximally-mixed point: `M -> (1-r) M`,
/// `C -> (1-r) C`, `M2 -> (1-r) M2 + r N j(j+1)/3`, and `Ct` recomputed
/// from the noisy C and M. `r = 1` is the fully depolarized limit.
pub fn apply_white_noise(data: &QuantumData, r: f64) -> Result<QuantumData> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidData(format!(
            "noise fraction r = {r} outside [0, 1]"
        )));
    }
    let scenario = data.scenario();
    let n = scenario.n_parties() as f64;
    let j = scenario.spin_j();
    let c = data.c_matrix();
    let m: Vec<f64> = data.m().iter().map(|x| (1.0 - r) * x).collect();
    let c_noisy = c.scaled(1.0 - r);
    let mixed_m2 = n * j * (j + 1.0) / 3.0;
    let m2: Vec<f64> = data
        .m2()
        .iter()
        .map(|x| (1.0 - r) * x + r * mixed_m2)
        .collect();
    let k = scenario.n_settings();
    let ct = SymMat::from_fn(k, |a, b| c_noisy.get(a, b) - m[a] * m[b]);
    QuantumData::new(scenario, m, ct, m2, Some(c_noisy))
}
