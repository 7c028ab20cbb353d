//! Exact classical side: exhaustive enumeration of local hidden-variable
//! strategies, classical bounds, extremal deterministic data, and violation
//! certificates.
//!
//! Every bound that comes out of this module is computed by brute-force
//! enumeration of the d^k per-particle strategies in the exact 2s integer
//! encoding, so certificates do not inherit any error from the solver that
//! proposed a candidate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vec_dot, SymMat};
use crate::scenario::{QuantumData, Scenario, SYMMETRY_TOL};

/// Default cap on the number of enumerated strategy configurations.
pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

/// Coefficients (A, h, h2) of a candidate inequality
/// `Tr(A Ct) + h . M + h2 . M2 >= -N E_max(A, h, h2)`,
/// with `E(s) = s^T A s - h . s - h2 . s^2` maximized over the d^k
/// per-particle strategies. `A` is symmetric; positive semi-definiteness is
/// required for the bound to be valid but is not enforced by the type (the
/// exact certificate recomputes everything regardless).
#[derive(Debug, Clone, PartialEq)]
pub struct BellCandidate {
    two_j: u32,
    pub a: SymMat,
    pub h: Vec<f64>,
    pub h2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BellCandidateWire {
    k: usize,
    two_j: u32,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    h: Vec<f64>,
    h2: Vec<f64>,
}

impl Serialize for BellCandidate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BellCandidateWire {
            k: self.k(),
            two_j: self.two_j,
            a: self.a.rows(),
            h: self.h.clone(),
            h2: self.h2.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BellCandidate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = BellCandidateWire::deserialize(deserializer)?;
        if wire.a.len() != wire.k {
            return Err(serde::de::Error::custom(format!(
                "A is {}x{} but k = {}",
                wire.a.len(),
                wire.a.first().map_or(0, Vec::len),
                wire.k
            )));
        }
        let a = SymMat::from_rows(&wire.a, SYMMETRY_TOL).map_err(serde::de::Error::custom)?;
        BellCandidate::new(wire.two_j, a, wire.h, wire.h2).map_err(serde::de::Error::custom)
    }
}

impl BellCandidate {
    pub fn new(two_j: u32, a: SymMat, h: Vec<f64>, h2: Vec<f64>) -> Result<Self> {
        if two_j < 1 {
            return Err(Error::InvalidScenario("candidate needs two_j >= 1".into()));
        }
        let k = a.dim();
        if k == 0 {
            return Err(Error::ShapeMismatch("candidate needs k >= 1".into()));
        }
        if h.len() != k || h2.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "h and h2 must have length k = {k}, got {} and {}",
                h.len(),
                h2.len()
            )));
        }
        if h.iter().chain(h2.iter()).any(|x| !x.is_finite()) || a.max_abs().is_nan() {
            return Err(Error::InvalidData("candidate has non-finite entries".into()));
        }
        Ok(BellCandidate { two_j, a, h, h2 })
    }

    /// Candidate with only a quadratic part.
    pub fn quadratic(two_j: u32, a: SymMat) -> Result<Self> {
        let k = a.dim();
        Self::new(two_j, a, vec![0.0; k], vec![0.0; k])
    }

    pub fn zero(two_j: u32, k: usize) -> Self {
        BellCandidate {
            two_j,
            a: SymMat::zeros(k),
            h: vec![0.0; k],
            h2: vec![0.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.a.dim()
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    /// Same coefficients, evaluated over a different outcome alphabet.
    pub fn with_two_j(&self, two_j: u32) -> Result<Self> {
        Self::new(two_j, self.a.clone(), self.h.clone(), self.h2.clone())
    }

    /// The per-particle energy `E(s) = s^T A s - h.s - h2.s^2` of one
    /// strategy in the 2s encoding, computed as an exact quarter-integer
    /// combination of the coefficients.
    pub fn energy_2s(&self, strategy: &[i32]) -> f64 {
        let k = self.k();
        debug_assert_eq!(strategy.len(), k);
        let mut quad = 0.0;
        for a in 0..k {
            let ta = strategy[a] as f64;
            let mut row = 0.0;
            for b in 0..k {
                row += self.a.get(a, b) * strategy[b] as f64;
            }
            quad += ta * row;
            quad -= 2.0 * self.h[a] * ta;
            quad -= self.h2[a] * ta * ta;
        }
        quad / 4.0
    }

    /// All candidates scaled by `x`.
    pub fn scaled(&self, x: f64) -> BellCandidate {
        BellCandidate {
            two_j: self.two_j,
            a: self.a.scaled(x),
            h: self.h.iter().map(|v| v * x).collect(),
            h2: self.h2.iter().map(|v| v * x).collect(),
        }
    }

    /// `A - diag(h2)`: the part of the coefficients that determines the
    /// per-particle energy together with `h`. Invariant under the
    /// reparameterization `(A, h2) -> (A + diag(delta), h2 + delta)`.
    pub fn a_tilde(&self) -> SymMat {
        let mut t = self.a.clone();
        for a in 0..self.k() {
            t.set_sym(a, a, t.get(a, a) - self.h2[a]);
        }
        t
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("BellCandidate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Checks the enumeration cap and returns the exact number of configurations.
pub fn check_enum_cap(k: usize, two_j: u32, cap: u64) -> Result<u64> {
    let d = two_j as u128 + 1;
    let mut acc: u128 = 1;
    for _ in 0..k {
        acc = acc.checked_mul(d).ok_or(Error::EnumerationCap {
            configs: u128::MAX,
            cap,
        })?;
        if acc > cap as u128 {
            return Err(Error::EnumerationCap { configs: acc, cap });
        }
    }
    Ok(acc as u64)
}

/// Visits every strategy `s in {-j..j}^k` (2s encoding) in lexicographic
/// order: the first setting varies slowest, outcomes ascend.
pub fn for_each_strategy(
    k: usize,
    two_j: u32,
    cap: u64,
    mut f: impl FnMut(&[i32]),
) -> Result<()> {
    check_enum_cap(k, two_j, cap)?;
    let tj = two_j as i32;
    let d = two_j as usize + 1;
    let mut idx = vec![0usize; k];
    let mut strat = vec![-tj; k];
    loop {
        f(&strat);
        // Odometer increment, last coordinate fastest.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < d {
                strat[pos] = -tj + 2 * idx[pos] as i32;
                break;
            }
            idx[pos] = 0;
            strat[pos] = -tj;
        }
    }
}

/// Result of the exhaustive maximization of the per-particle energy.
#[derive(Debug, Clone)]
pub struct EmaxResult {
    pub value: f64,
    /// All strategies attaining the maximum, in lexicographic order.
    pub maximizers: Vec<Vec<i32>>,
}

/// Exhaustive `E_max(A, h, h2) = max_s E(s)` with the full (exact-tie)
/// maximizer set.
pub fn e_max(cand: &BellCandidate) -> Result<EmaxResult> {
    e_max_with_cap(cand, DEFAULT_ENUM_CAP)
}

pub fn e_max_with_cap(cand: &BellCandidate, cap: u64) -> Result<EmaxResult> {
    let mut best = f64::NEG_INFINITY;
    let mut maximizers: Vec<Vec<i32>> = Vec::new();
    for_each_strategy(cand.k(), cand.two_j(), cap, |s| {
        let e = cand.energy_2s(s);
        if e > best {
            best = e;
            maximizers.clear();
            maximizers.push(s.to_vec());
        } else if e == best {
            maximizers.push(s.to_vec());
        }
    })?;
    Ok(EmaxResult {
        value: best,
        maximizers,
    })
}

/// Classical bound `B_c = -N E_max(A, h, h2)`.
pub fn classical_bound(cand: &BellCandidate, n_parties: usize) -> Result<f64> {
    Ok(-(n_parties as f64) * e_max(cand)?.value)
}

pub fn classical_bound_with_cap(cand: &BellCandidate, n_parties: usize, cap: u64) -> Result<f64> {
    Ok(-(n_parties as f64) * e_max_with_cap(cand, cap)?.value)
}

/// The value `Tr(A Ct) + h . M + h2 . M2` of the candidate on the data.
pub fn quantum_value(cand: &BellCandidate, data: &QuantumData) -> Result<f64> {
    if cand.k() != data.scenario().n_settings() {
        return Err(Error::ShapeMismatch(format!(
            "candidate has k = {} but data has k = {}",
            cand.k(),
            data.scenario().n_settings()
        )));
    }
    Ok(cand.a.dot(data.ct()) + vec_dot(&cand.h, data.m()) + vec_dot(&cand.h2, data.m2()))
}

/// An exact violation certificate. `margin = classical_bound -
/// quantum_value`; `violated` uses the extensive tolerance `1e-9 * N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedViolation {
    pub quantum_value: f64,
    pub classical_bound: f64,
    pub margin: f64,
    pub violated: bool,
}

/// Certification tolerance, scaled by N because every term of the
/// inequality is extensive.
pub fn certification_tol(n_parties: usize) -> f64 {
    1e-9 * n_parties as f64
}

/// Exact certificate of `cand` against `data`, independent of how the
/// candidate was produced.
pub fn certify(cand: &BellCandidate, data: &QuantumData) -> Result<CertifiedViolation> {
    certify_with_cap(cand, data, DEFAULT_ENUM_CAP)
}

pub fn certify_with_cap(
    cand: &BellCandidate,
    data: &QuantumData,
    cap: u64,
) -> Result<CertifiedViolation> {
    if cand.two_j() != data.scenario().two_j() {
        return Err(Error::ShapeMismatch(format!(
            "candidate alphabet two_j = {} but data has two_j = {}",
            cand.two_j(),
            data.scenario().two_j()
        )));
    }
    let n = data.scenario().n_parties();
    let qv = quantum_value(cand, data)?;
    let bc = classical_bound_with_cap(cand, n, cap)?;
    Ok(CertifiedViolation {
        quantum_value: qv,
        classical_bound: bc,
        margin: bc - qv,
        violated: qv < bc - certification_tol(n),
    })
}

/// One component of a local-variable mixture: a weight and one deterministic
/// strategy table per party (`tables[party][setting]`, 2s encoding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvComponent {
    pub weight: f64,
    pub tables: Vec<Vec<i32>>,
}

/// A local-variable model: a normalized mixture of deterministic per-party
/// strategy tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LvModel {
    scenario: Scenario,
    mixture: Vec<LvComponent>,
}

#[derive(Serialize, Deserialize)]
struct LvModelWire {
    #[serde(rename = "N")]
    n: usize,
    k: usize,
    two_j: u32,
    mixture: Vec<LvComponent>,
}

impl Serialize for LvModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        LvModelWire {
            n: self.scenario.n_parties(),
            k: self.scenario.n_settings(),
            two_j: self.scenario.two_j(),
            mixture: self.mixture.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LvModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = LvModelWire::deserialize(deserializer)?;
        let scenario = Scenario::new(wire.n, wire.k, wire.two_j).map_err(serde::de::Error::custom)?;
        LvModel::new(scenario, wire.mixture).map_err(serde::de::Error::custom)
    }
}

impl LvModel {
    pub fn new(scenario: Scenario, mixture: Vec<LvComponent>) -> Result<Self> {
        if mixture.is_empty() {
            return Err(Error::InvalidData("LV model needs at least one component".into()));
        }
        let mut total = 0.0;
        for comp in &mixture {
            if !(comp.weight >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "negative mixture weight {}",
                    comp.weight
                )));
            }
            total += comp.weight;
            validate_table(&comp.tables, scenario)?;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidData(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(LvModel { scenario, mixture })
    }

    /// Builds the model after rescaling the weights to sum to one.
    pub fn normalized(scenario: Scenario, mut mixture: Vec<LvComponent>) -> Result<Self> {
        let total: f64 = mixture.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidData("mixture weights sum to zero".into()));
        }
        for comp in &mut mixture {
            comp.weight /= total;
        }
        Self::new(scenario, mixture)
    }

    /// A single deterministic table with weight one.
    pub fn deterministic(scenario: Scenario, tables: Vec<Vec<i32>>) -> Result<Self> {
        Self::new(
            scenario,
            vec![LvComponent {
                weight: 1.0,
                tables,
            }],
        )
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn mixture(&self) -> &[LvComponent] {
        &self.mixture
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("LvModel serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn validate_table(tables: &[Vec<i32>], scenario: Scenario) -> Result<()> {
    if tables.len() != scenario.n_parties() {
        return Err(Error::ShapeMismatch(format!(
            "strategy table covers {} parties, scenario has {}",
            tables.len(),
            scenario.n_parties()
        )));
    }
    let tj = scenario.two_j() as i32;
    for (i, row) in tables.iter().enumerate() {
        if row.len() != scenario.n_settings() {
            return Err(Error::ShapeMismatch(format!(
                "party {i} has {} settings, scenario has {}",
                row.len(),
                scenario.n_settings()
            )));
        }
        for &t in row {
            if t.abs() > tj || (t - tj).rem_euclid(2) != 0 {
                return Err(Error::InvalidData(format!(
                    "outcome 2s = {t} is not in the alphabet of two_j = {tj}"
                )));
            }
        }
    }
    Ok(())
}

/// Exact moments of one deterministic strategy table:
/// `M_a = sum_i s_a^i`, `C_ab = sum_{i != j} s_a^i s_b^j`,
/// `M2_a = sum_i (s_a^i)^2`, `Ct = C - M M^T`.
pub fn extremal_lv_data(tables: &[Vec<i32>], scenario: Scenario) -> Result<QuantumData> {
    validate_table(tables, scenario)?;
    let k = scenario.n_settings();
    // Column sums in the 2s encoding stay integer-exact.
    let mut sum_2s = vec![0i64; k];
    let mut sum_sq = vec![0i64; k];
    let mut cross = vec![0i64; k * k]; // sum over ordered pairs i != j of t_a^i t_b^j
    let mut per_party = vec![0i64; k * k]; // sum_i t_a^i t_b^i
    for row in tables {
        for a in 0..k {
            sum_2s[a] += row[a] as i64;
            sum_sq[a] += (row[a] as i64) * (row[a] as i64);
            for b in 0..k {
                per_party[a * k + b] += (row[a] as i64) * (row[b] as i64);
            }
        }
    }
    for a in 0..k {
        for b in 0..k {
            cross[a * k + b] = sum_2s[a] * sum_2s[b] - per_party[a * k + b];
        }
    }
    let m: Vec<f64> = sum_2s.iter().map(|&t| t as f64 / 2.0).collect();
    let m2: Vec<f64> = sum_sq.iter().map(|&t| t as f64 / 4.0).collect();
    let c = SymMat::from_fn(k, |a, b| cross[a * k + b] as f64 / 4.0);
    let ct = SymMat::from_fn(k, |a, b| c.get(a, b) - m[a] * m[b]);
    QuantumData::new(scenario, m, ct, m2, Some(c))
}

/// Moments of a mixture model: the weighted average of the extremal moments
/// of each component, with `Ct` re-derived from the averaged C and M.
pub fn lv_moment_data(model: &LvModel) -> Result<QuantumData> {
    let scenario = model.scenario();
    let k = scenario.n_settings();
    let mut m = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    let mut c = SymMat::zeros(k);
    for comp in model.mixture() {
        let data = extremal_lv_data(&comp.tables, scenario)?;
        for a in 0..k {
            m[a] += comp.weight * data.m()[a];
            m2[a] += comp.weight * data.m2()[a];
        }
        c.add_scaled_mut(&data.c_matrix(), comp.weight);
    }
    let ct = SymMat::from_fn(k, |a, b| c.get(a, b) - m[a] * m[b]);
    QuantumData::new(scenario, m, ct, m2, Some(c))
}

/// A random mixture of at most `max_components` deterministic tables,
/// reproducible from the RNG state.
pub fn random_lv_model(
    scenario: Scenario,
    max_components: usize,
    rng: &mut impl rand::Rng,
) -> Result<LvModel> {
    let n_comp = rng.random_range(1..=max_components.max(1));
    let outcomes = scenario.outcomes_2s();
    let mixture: Vec<LvComponent> = (0..n_comp)
        .map(|_| {
            let tables: Vec<Vec<i32>> = (0..scenario.n_parties())
                .map(|_| {
                    (0..scenario.n_settings())
                        .map(|_| outcomes[rng.random_range(0..outcomes.len())])
                        .collect()
                })
                .collect();
            LvComponent {
                weight: rng.random_range(0.05..1.0),
                tables,
            }
        })
        .collect();
    LvModel::normalized(scenario, mixture)
}

/// [`random_lv_model`] with a self-contained seeded generator
/// (`chacha12`), for reproducible model files.
pub fn seeded_lv_model(
    scenario: Scenario,
    max_components: usize,
    seed: u64,
) -> Result<LvModel> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    random_lv_model(scenario, max_components, &mut rng)
}
