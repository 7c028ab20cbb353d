//! Search formulated directly on the permutationally-averaged pair
//! probability distribution: for any PSD matrix `M` indexed by
//! (setting, outcome) pairs, local-variable data satisfy
//! `sum M(s,t|a,b) Pbar(s,t|a,b) >= -E_max(M) / (N-1)` with
//! `E_max(M) = max_s sum_ab M(s_a, s_b|a,b)`. Minimizing the left-hand side
//! plus the bound over the PSD cone is the arbitrary-outcome generalization
//! of the moment-based search, and for d = 2 the two are equivalent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::optimizer::SolverConfig;
use crate::oracle::{self, LvModel};
use crate::scenario::{QuantumData, Scenario};

/// The averaged pair distribution `Pbar(s,t|a,b)`, stored as a 4-index
/// table with layout `[a][b][s][t]` (outcome indices ascend with the 2s
/// encoding). As a `(k d) x (k d)` matrix with row index `a*d + s` it is
/// symmetric by pair symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    scenario: Scenario,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PairDistributionWire {
    k: usize,
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    table: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Serialize for PairDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (k, d) = (self.scenario.n_settings(), self.scenario.n_outcomes());
        let table = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| {
                        (0..d)
                            .map(|s| (0..d).map(|t| self.get(a, b, s, t)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        PairDistributionWire {
            k,
            d,
            n: self.scenario.n_parties(),
            table,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PairDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = PairDistributionWire::deserialize(deserializer)?;
        if wire.d == 0 {
            return Err(serde::de::Error::custom("d must be >= 2"));
        }
        let scenario = Scenario::new(wire.n, wire.k, wire.d as u32 - 1)
            .map_err(serde::de::Error::custom)?;
        let (k, d) = (wire.k, wire.d);
        let mut table = vec![0.0; k * k * d * d];
        if wire.table.len() != k {
            return Err(serde::de::Error::custom("table has wrong first dimension"));
        }
        for (a, block_a) in wire.table.iter().enumerate() {
            if block_a.len() != k {
                return Err(serde::de::Error::custom("table has wrong second dimension"));
            }
            for (b, block_b) in block_a.iter().enumerate() {
                if block_b.len() != d {
                    return Err(serde::de::Error::custom("table has wrong outcome dimension"));
                }
                for (s, row) in block_b.iter().enumerate() {
                    if row.len() != d {
                        return Err(serde::de::Error::custom("table has wrong outcome dimension"));
                    }
                    for (t, &v) in row.iter().enumerate() {
                        table[((a * k + b) * d + s) * d + t] = v;
                    }
                }
            }
        }
        PairDistribution::new(scenario, table).map_err(serde::de::Error::custom)
    }
}

impl PairDistribution {
    /// Validates non-negativity, per-(a,b) normalization, pair symmetry
    /// `Pbar(s,t|a,b) = Pbar(t,s|b,a)`, and no-signaling of the averaged
    /// single-party marginals.
    pub fn new(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        let (k, d) = (scenario.n_settings(), scenario.n_outcomes());
        if table.len() != k * k * d * d {
            return Err(Error::ShapeMismatch(format!(
                "table has {} entries, expected (k d)^2 = {}",
                table.len(),
                k * k * d * d
            )));
        }
        let idx = |a: usize, b: usize, s: usize, t: usize| ((a * k + b) * d + s) * d + t;
        for (i, &v) in table.iter().enumerate() {
            if !v.is_finite() || v < -1e-10 {
                return Err(Error::InvalidData(format!(
                    "pair distribution entry {i} = {v} is negative or non-finite"
                )));
            }
        }
        for a in 0..k {
            for b in 0..k {
                let total: f64 = (0..d)
                    .flat_map(|s| (0..d).map(move |t| (s, t)))
                    .map(|(s, t)| table[idx(a, b, s, t)])
                    .sum();
                if (total - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidData(format!(
                        "pair distribution for settings ({a},{b}) sums to {total}"
                    )));
                }
                for s in 0..d {
                    for t in 0..d {
                        let diff = table[idx(a, b, s, t)] - table[idx(b, a, t, s)];
                        if diff.abs() > 1e-10 {
                            return Err(Error::InvalidData(format!(
                                "pair symmetry violated at (s={s},t={t}|a={a},b={b}): {diff}"
                            )));
                        }
                    }
                }
            }
        }
        // No-signaling of the averaged marginals: sum_t Pbar(s,t|a,b) must
        // not depend on b.
        for a in 0..k {
            for s in 0..d {
                let reference: f64 = (0..d).map(|t| table[idx(a, 0, s, t)]).sum();
                for b in 1..k {
                    let marg: f64 = (0..d).map(|t| table[idx(a, b, s, t)]).sum();
                    if (marg - reference).abs() > 1e-9 {
                        return Err(Error::InvalidData(format!(
                            "averaged marginal of (s={s}|a={a}) depends on the partner setting: {reference} vs {marg}"
                        )));
                    }
                }
            }
        }
        Ok(PairDistribution { scenario, table })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, s: usize, t: usize) -> f64 {
        let (k, d) = (self.scenario.n_settings(), self.scenario.n_outcomes());
        self.table[((a * k + b) * d + s) * d + t]
    }

    /// The distribution as a symmetric `(k d) x (k d)` matrix with row index
    /// `a*d + s`.
    pub fn as_matrix(&self) -> SymMat {
        let (k, d) = (self.scenario.n_settings(), self.scenario.n_outcomes());
        SymMat::from_fn(k * d, |row, col| {
            let (a, s) = (row / d, row % d);
            let (b, t) = (col / d, col % d);
            0.5 * (self.get(a, b, s, t) + self.get(b, a, t, s))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("PairDistribution serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Exact averaged pair distribution of a local-variable mixture.
pub fn pbar_from_lv(model: &LvModel) -> Result<PairDistribution> {
    let scenario = model.scenario();
    let (n, k, d) = (
        scenario.n_parties(),
        scenario.n_settings(),
        scenario.n_outcomes(),
    );
    let tj = scenario.two_j() as i32;
    let outcome_index = |t: i32| ((t + tj) / 2) as usize;
    let mut table = vec![0.0; k * k * d * d];
    let idx = |a: usize, b: usize, s: usize, t: usize| ((a * k + b) * d + s) * d + t;
    let pair_weight = 1.0 / (n as f64 * (n as f64 - 1.0));
    for comp in model.mixture() {
        for i in 0..n {
            for jj in 0..n {
                if i == jj {
                    continue;
                }
                for a in 0..k {
                    let s = outcome_index(comp.tables[i][a]);
                    for b in 0..k {
                        let t = outcome_index(comp.tables[jj][b]);
                        table[idx(a, b, s, t)] += comp.weight * pair_weight;
                    }
                }
            }
        }
    }
    PairDistribution::new(scenario, table)
}

/// Linear bijection between d = 2 moment data and the averaged pair
/// distribution:
/// `Pbar(s,t|a,b) = 1/4 [1 + 4 s M_a / N + 4 t M_b / N + 16 s t C_ab / (N(N-1))]`
/// with outcomes `s, t = +-1/2`. Fails if the data lie outside the
/// pair-marginal polytope (a negative entry).
pub fn pbar_from_binary_moments(data: &QuantumData) -> Result<PairDistribution> {
    let scenario = data.scenario();
    if scenario.two_j() != 1 {
        return Err(Error::InvalidScenario(format!(
            "moment-to-pair conversion is defined for two_j = 1, got {}",
            scenario.two_j()
        )));
    }
    let (n, k) = (scenario.n_parties() as f64, scenario.n_settings());
    let c = data.c_matrix();
    let mut table = vec![0.0; k * k * 4];
    let idx = |a: usize, b: usize, s: usize, t: usize| ((a * k + b) * 2 + s) * 2 + t;
    for a in 0..k {
        for b in 0..k {
            for (si, s) in [(0usize, -0.5), (1, 0.5)] {
                for (ti, t) in [(0usize, -0.5), (1, 0.5)] {
                    let v = 0.25
                        * (1.0
                            + 4.0 * s * data.m()[a] / n
                            + 4.0 * t * data.m()[b] / n
                            + 16.0 * s * t * c.get(a, b) / (n * (n - 1.0)));
                    if v < -1e-12 {
                        return Err(Error::NegativePairProbability {
                            a,
                            b,
                            s: if si == 0 { -1 } else { 1 },
                            t: if ti == 0 { -1 } else { 1 },
                            value: v,
                        });
                    }
                    table[idx(a, b, si, ti)] = v.max(0.0);
                }
            }
        }
    }
    PairDistribution::new(scenario, table)
}

/// Inverse of [`pbar_from_binary_moments`]: recovers `(M, C)` from a d = 2
/// averaged pair distribution.
pub fn binary_moments_from_pbar(pbar: &PairDistribution) -> Result<(Vec<f64>, SymMat)> {
    let scenario = pbar.scenario();
    if scenario.two_j() != 1 {
        return Err(Error::InvalidScenario(
            "moment recovery is defined for two_j = 1".into(),
        ));
    }
    let (n, k) = (scenario.n_parties() as f64, scenario.n_settings());
    let outcomes = [-0.5, 0.5];
    let m: Vec<f64> = (0..k)
        .map(|a| {
            let mut acc = 0.0;
            for (si, s) in outcomes.iter().enumerate() {
                for t in 0..2 {
                    acc += s * pbar.get(a, 0, si, t);
                }
            }
            n * acc
        })
        .collect();
    let c = SymMat::from_fn(k, |a, b| {
        let mut acc = 0.0;
        for (si, s) in outcomes.iter().enumerate() {
            for (ti, t) in outcomes.iter().enumerate() {
                acc += s * t * pbar.get(a, b, si, ti);
            }
        }
        n * (n - 1.0) * acc
    });
    Ok((m, c))
}

/// Moment data `(M, Ct, M2)` equivalent to a d = 2 pair distribution.
pub fn binary_data_from_pbar(pbar: &PairDistribution) -> Result<QuantumData> {
    let scenario = pbar.scenario();
    let (m, c) = binary_moments_from_pbar(pbar)?;
    let k = scenario.n_settings();
    let n = scenario.n_parties() as f64;
    let ct = SymMat::from_fn(k, |a, b| c.get(a, b) - m[a] * m[b]);
    let m2 = vec![n / 4.0; k];
    QuantumData::new(scenario, m, ct, m2, Some(c))
}

/// A candidate for the pair-distribution search: a symmetric PSD
/// `(k d) x (k d)` matrix with entries `M(s,t|a,b)` at `(a*d+s, b*d+t)`.
#[derive(Debug, Clone)]
pub struct PbarCandidate {
    pub k: usize,
    pub d: usize,
    pub m: SymMat,
}

impl PbarCandidate {
    pub fn new(k: usize, d: usize, m: SymMat) -> Result<Self> {
        if m.dim() != k * d {
            return Err(Error::ShapeMismatch(format!(
                "matrix has dimension {}, expected k*d = {}",
                m.dim(),
                k * d
            )));
        }
        if m.min_eigenvalue()? < -1e-10 {
            return Err(Error::InvalidData(
                "pair candidate matrix is not positive semi-definite".into(),
            ));
        }
        Ok(PbarCandidate { k, d, m })
    }
}

/// Exhaustive `E_max(M) = max over outcome assignments s of
/// sum_ab M(s_a, s_b | a, b)`, with all maximizing assignments (outcome
/// indices) in lexicographic order.
pub fn e_max_pbar(cand: &PbarCandidate) -> Result<(f64, Vec<Vec<usize>>)> {
    e_max_pbar_matrix(&cand.m, cand.k, cand.d, oracle::DEFAULT_ENUM_CAP)
}

fn e_max_pbar_matrix(
    m: &SymMat,
    k: usize,
    d: usize,
    cap: u64,
) -> Result<(f64, Vec<Vec<usize>>)> {
    oracle::check_enum_cap(k, d as u32 - 1, cap)?;
    let mut assignment = vec![0usize; k];
    let mut best = f64::NEG_INFINITY;
    let mut maximizers = Vec::new();
    loop {
        let mut val = 0.0;
        for a in 0..k {
            for b in 0..k {
                val += m.get(a * d + assignment[a], b * d + assignment[b]);
            }
        }
        if val > best {
            best = val;
            maximizers.clear();
            maximizers.push(assignment.clone());
        } else if val == best {
            maximizers.push(assignment.clone());
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok((best, maximizers));
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < d {
                break;
            }
            assignment[pos] = 0;
        }
    }
}

/// The cost `L(M) = <M, Pbar> + E_max(M) / (N - 1)`; non-negative whenever
/// the distribution descends from a local-variable model.
pub fn cost_pbar(cand: &PbarCandidate, pbar: &PairDistribution) -> Result<f64> {
    let scenario = pbar.scenario();
    if cand.k != scenario.n_settings() || cand.d != scenario.n_outcomes() {
        return Err(Error::ShapeMismatch(
            "pair candidate and distribution scenarios differ".into(),
        ));
    }
    let (emax, _) = e_max_pbar(cand)?;
    Ok(cand.m.dot(&pbar.as_matrix()) + emax / (scenario.n_parties() as f64 - 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PbarReport {
    pub matrix: Vec<Vec<f64>>,
    pub cost: f64,
    pub violated: bool,
}

/// Projected subgradient search over PSD matrices in the unit Frobenius
/// ball, smoothing and polishing exactly like the moment-based solver. The
/// final cost is recomputed exactly; `violated` means `cost < -1e-9`.
pub fn solve_pbar(pbar: &PairDistribution, config: &SolverConfig) -> Result<PbarReport> {
    use rand::{Rng, SeedableRng};
    let scenario = pbar.scenario();
    let (k, d) = (scenario.n_settings(), scenario.n_outcomes());
    oracle::check_enum_cap(k, d as u32 - 1, config.enum_cap)?;
    let dim = k * d;
    let pmat = pbar.as_matrix();
    let n1 = scenario.n_parties() as f64 - 1.0;

    let run = |restart: usize| -> Result<(SymMat, f64)> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(
            config.seed ^ (0xD1B5_4A32_D192_ED03u64.wrapping_mul(restart as u64 + 1)),
        );
        let mut m = if restart == 0 {
            let m = pmat.scaled(-1.0).psd_clip()?;
            if m.frobenius_norm() > 1e-12 {
                m
            } else {
                SymMat::identity(dim)
            }
        } else {
            SymMat::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)).psd_clip()?
        };
        let nrm = m.frobenius_norm();
        if nrm > 1.0 {
            m.scale_mut(1.0 / nrm);
        }

        let anneal = if config.smoothing.is_some() {
            (config.max_iters as f64 * 0.6).round() as usize
        } else {
            0
        };
        let n_cfg = (d as u64).pow(k as u32) as usize;
        let mut vals = vec![0.0f64; n_cfg];
        let mut assignment = vec![0usize; k];
        let mut best = f64::INFINITY;
        let mut best_m = m.clone();
        let mut delta = f64::NAN;
        let mut last_best_update = 0usize;
        let mut last_meaningful = 0usize;

        for t in 0..config.max_iters {
            // Enumerate assignment values.
            let mut emax = f64::NEG_INFINITY;
            for (cfg_idx, v) in vals.iter_mut().enumerate() {
                let mut rest = cfg_idx;
                for a in (0..k).rev() {
                    assignment[a] = rest % d;
                    rest /= d;
                }
                let mut val = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        val += m.get(a * d + assignment[a], b * d + assignment[b]);
                    }
                }
                *v = val;
                emax = emax.max(val);
            }
            let cost_now = m.dot(&pmat) + emax / n1;
            if cost_now < best {
                if best - cost_now > config.conv_tol {
                    last_meaningful = t;
                }
                best = cost_now;
                best_m = m.clone();
                last_best_update = t;
            }
            if delta.is_nan() {
                delta = 0.05 * (1.0 + best.abs());
            }

            // Weighted average of u u^T over assignments, u the indicator.
            let mut avg = SymMat::zeros(dim);
            let mut z = 0.0;
            let (use_gibbs, beta) = if t < anneal {
                let sched = config.smoothing.unwrap_or_default();
                let frac = if anneal > 1 {
                    t as f64 / (anneal - 1) as f64
                } else {
                    1.0
                };
                (true, sched.start * (sched.end / sched.start).powf(frac))
            } else {
                (false, 0.0)
            };
            let tie_tol = 1e-9 * (1.0 + emax.abs());
            for (cfg_idx, &v) in vals.iter().enumerate() {
                let w = if use_gibbs {
                    (beta * (v - emax)).exp()
                } else if v >= emax - tie_tol {
                    1.0
                } else {
                    0.0
                };
                if w == 0.0 {
                    continue;
                }
                z += w;
                let mut rest = cfg_idx;
                for a in (0..k).rev() {
                    assignment[a] = rest % d;
                    rest /= d;
                }
                for a in 0..k {
                    let ra = a * d + assignment[a];
                    for b in a..k {
                        let rb = b * d + assignment[b];
                        let val = avg.get(ra, rb) + w;
                        avg.set_sym(ra, rb, val);
                    }
                }
            }
            avg.scale_mut(1.0 / (z * n1));
            let mut grad = pmat.clone();
            grad.add_scaled_mut(&avg, 1.0);

            let eta = if t < anneal {
                config.eta0 / ((t + 1) as f64).sqrt()
            } else {
                if t.saturating_sub(last_best_update) > 40 {
                    delta = (delta / 2.0).max(1e-13);
                    last_best_update = t;
                }
                let gnorm2 = grad.dot(&grad);
                if gnorm2 < 1e-28 {
                    break;
                }
                ((cost_now - (best - delta)).max(0.0) / gnorm2).min(10.0 * config.eta0)
            };
            if t >= anneal
                && t.saturating_sub(last_meaningful) > config.conv_window.max(1)
                && delta <= config.conv_tol
            {
                break;
            }
            m.add_scaled_mut(&grad, -eta);
            m = m.psd_clip()?;
            let nrm = m.frobenius_norm();
            if nrm > 1.0 {
                m.scale_mut(1.0 / nrm);
            }
        }
        Ok((best_m, best))
    };

    let outcomes: Vec<(SymMat, f64)> = (0..config.restarts)
        .into_par_iter()
        .map(run)
        .collect::<Result<Vec<_>>>()?;
    let mut best_idx = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.1 < outcomes[best_idx].1 {
            best_idx = i;
        }
    }
    // Exact recomputation at the reported matrix.
    let final_m = outcomes[best_idx].0.clone();
    let cand = PbarCandidate {
        k,
        d,
        m: final_m.clone(),
    };
    let cost = cost_pbar(&cand, pbar)?;
    Ok(PbarReport {
        matrix: final_m.rows(),
        cost,
        violated: cost < -1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{random_lv_model, BellCandidate, LvComponent};
    use crate::scenario::{singlet_data, AngleSet};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn deterministic_pair_distribution() {
        let scenario = Scenario::new(2, 1, 1).unwrap();
        let model = LvModel::deterministic(scenario, vec![vec![1], vec![1]]).unwrap();
        let pbar = pbar_from_lv(&model).unwrap();
        assert_eq!(pbar.get(0, 0, 1, 1), 1.0);
        assert_eq!(pbar.get(0, 0, 0, 0), 0.0);
        assert_eq!(pbar.get(0, 0, 0, 1), 0.0);
    }

    #[test]
    fn uniform_identical_strategy_mixture_is_product_form() {
        // All parties share one strategy drawn uniformly from the alphabet^k.
        let scenario = Scenario::new(4, 2, 1).unwrap();
        let mut mixture = Vec::new();
        for s0 in [-1i32, 1] {
            for s1 in [-1i32, 1] {
                mixture.push(LvComponent {
                    weight: 0.25,
                    tables: vec![vec![s0, s1]; 4],
                });
            }
        }
        let model = LvModel::new(scenario, mixture).unwrap();
        let pbar = pbar_from_lv(&model).unwrap();
        for s in 0..2 {
            for t in 0..2 {
                assert_close(pbar.get(0, 1, s, t), 0.25, 1e-12);
                // Same setting on two parties: perfectly correlated.
                let expect = if s == t { 0.5 } else { 0.0 };
                assert_close(pbar.get(0, 0, s, t), expect, 1e-12);
            }
        }
    }

    #[test]
    fn half_and_half_model_is_flip_symmetric() {
        let scenario = Scenario::new(6, 2, 3).unwrap();
        let s_opt = vec![3i32, -1];
        let neg: Vec<i32> = s_opt.iter().map(|x| -x).collect();
        let mut tables = vec![s_opt; 3];
        tables.extend(vec![neg; 3]);
        let model = LvModel::deterministic(scenario, tables).unwrap();
        let pbar = pbar_from_lv(&model).unwrap();
        let d = 4;
        for a in 0..2 {
            for b in 0..2 {
                for s in 0..d {
                    for t in 0..d {
                        assert_close(
                            pbar.get(a, b, s, t),
                            pbar.get(a, b, d - 1 - s, d - 1 - t),
                            1e-12,
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn binary_moment_map_round_trips() {
        let scenario = Scenario::new(5, 2, 1).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let model = random_lv_model(scenario, 5, &mut rng).unwrap();
            let data = crate::oracle::lv_moment_data(&model).unwrap();
            let pbar = pbar_from_binary_moments(&data).unwrap();
            // The conversion agrees with the direct pair distribution.
            let direct = pbar_from_lv(&model).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    for s in 0..2 {
                        for t in 0..2 {
                            assert_close(pbar.get(a, b, s, t), direct.get(a, b, s, t), 1e-12);
                        }
                    }
                }
            }
            let (m, c) = binary_moments_from_pbar(&pbar).unwrap();
            for a in 0..2 {
                assert_close(m[a], data.m()[a], 1e-9);
                for b in 0..2 {
                    assert_close(c.get(a, b), data.c_matrix().get(a, b), 1e-9);
                }
            }
        }
    }

    #[test]
    fn uniform_moments_give_uniform_pbar() {
        let scenario = Scenario::new(4, 2, 1).unwrap();
        let data = QuantumData::new(
            scenario,
            vec![0.0; 2],
            SymMat::zeros(2),
            vec![1.0; 2],
            None,
        )
        .unwrap();
        let pbar = pbar_from_binary_moments(&data).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for s in 0..2 {
                    for t in 0..2 {
                        assert_eq!(pbar.get(a, b, s, t), 0.25);
                    }
                }
            }
        }
    }

    #[test]
    fn polarized_moments_give_deterministic_pbar() {
        let scenario = Scenario::new(4, 1, 1).unwrap();
        let n = 4.0;
        let c = SymMat::from_fn(1, |_, _| n * (n - 1.0) / 4.0);
        let ct = SymMat::from_fn(1, |_, _| n * (n - 1.0) / 4.0 - (n / 2.0) * (n / 2.0));
        let data = QuantumData::new(scenario, vec![n / 2.0], ct, vec![1.0], Some(c)).unwrap();
        let pbar = pbar_from_binary_moments(&data).unwrap();
        assert_close(pbar.get(0, 0, 1, 1), 1.0, 1e-12);
    }

    #[test]
    fn out_of_polytope_moments_error() {
        let scenario = Scenario::new(4, 2, 1).unwrap();
        // C_01 beyond N(N-1)/4 makes Pbar(s,-s|0,1) negative.
        let c = SymMat::from_fn(2, |_, _| 4.0);
        let data = QuantumData::new(scenario, vec![0.0; 2], c.clone(), vec![1.0; 2], None).unwrap();
        assert!(matches!(
            pbar_from_binary_moments(&data),
            Err(Error::NegativePairProbability { .. })
        ));
    }

    #[test]
    fn e_max_identity_selects_diagonal() {
        let k = 3;
        let d = 2;
        let cand = PbarCandidate::new(k, d, SymMat::identity(k * d)).unwrap();
        let (val, maxers) = e_max_pbar(&cand).unwrap();
        assert_eq!(val, k as f64);
        assert_eq!(maxers.len(), d.pow(k as u32));
    }

    #[test]
    fn quadratic_embedding_matches_moment_e_max() {
        // M(s,t|a,b) = A_ab s t reproduces the moment-based enumeration.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        for two_j in [1u32, 2] {
            let d = two_j as usize + 1;
            let outcomes: Vec<f64> = crate::scenario::outcome_values(two_j).unwrap();
            for _ in 0..10 {
                let a = SymMat::from_fn(3, |_, _| rng.random_range(-1.0..1.0))
                    .psd_clip()
                    .unwrap();
                let big = SymMat::from_fn(3 * d, |row, col| {
                    let (p, s) = (row / d, row % d);
                    let (q, t) = (col / d, col % d);
                    a.get(p, q) * outcomes[s] * outcomes[t]
                });
                let cand = PbarCandidate::new(3, d, big).unwrap();
                let (val, _) = e_max_pbar(&cand).unwrap();
                let bell = BellCandidate::quadratic(two_j, a).unwrap();
                let expect = crate::oracle::e_max(&bell).unwrap().value;
                assert_close(val, expect, 1e-12);
            }
        }
    }

    #[test]
    fn e_max_matches_recursive_oracle() {
        // Independent recursive enumeration as a second implementation.
        fn recurse(
            m: &SymMat,
            k: usize,
            d: usize,
            chosen: &mut Vec<usize>,
            best: &mut f64,
        ) {
            if chosen.len() == k {
                let mut val = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        val += m.get(a * d + chosen[a], b * d + chosen[b]);
                    }
                }
                if val > *best {
                    *best = val;
                }
                return;
            }
            for s in 0..d {
                chosen.push(s);
                recurse(m, k, d, chosen, best);
                chosen.pop();
            }
        }
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        for _ in 0..10 {
            let (k, d) = (2usize, 3usize);
            let m = SymMat::from_fn(k * d, |_, _| rng.random_range(-1.0..1.0))
                .psd_clip()
                .unwrap();
            let cand = PbarCandidate::new(k, d, m.clone()).unwrap();
            let (val, _) = e_max_pbar(&cand).unwrap();
            let mut best = f64::NEG_INFINITY;
            recurse(&m, k, d, &mut Vec::new(), &mut best);
            assert_eq!(val, best);
        }
    }

    #[test]
    fn q_matrix_of_lv_models_is_psd() {
        // Q_{(s,a),(t,b)} = sum_{i,j} P^(ij)(s,t|a,b) is a sum of outer
        // products of outcome-count vectors, so f^T Q f >= 0.
        let scenario = Scenario::new(5, 2, 2).unwrap();
        let (k, d) = (2usize, 3usize);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        for _ in 0..10 {
            let model = random_lv_model(scenario, 6, &mut rng).unwrap();
            let mut q = SymMat::zeros(k * d);
            for comp in model.mixture() {
                let mut u = vec![0.0; k * d];
                for row in &comp.tables {
                    for a in 0..k {
                        let s = ((row[a] + 2) / 2) as usize;
                        u[a * d + s] += 1.0;
                    }
                }
                q.add_scaled_mut(&SymMat::outer(&u), comp.weight);
            }
            for _ in 0..100 {
                let f: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
                assert!(q.quad_form(&f) >= -1e-9);
            }
        }
    }

    #[test]
    fn solve_pbar_no_false_positive_on_lv() {
        let scenario = Scenario::new(6, 2, 1).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        let config = SolverConfig {
            max_iters: 800,
            restarts: 2,
            ..Default::default()
        };
        for _ in 0..10 {
            let model = random_lv_model(scenario, 6, &mut rng).unwrap();
            let pbar = pbar_from_lv(&model).unwrap();
            let report = solve_pbar(&pbar, &config).unwrap();
            assert!(report.cost >= -1e-9, "false positive: {}", report.cost);
            assert!(!report.violated);
        }
    }

    #[test]
    fn solve_pbar_finds_singlet_violation() {
        let angles = AngleSet::new(vec![PI / 3.0, 0.0, -PI / 3.0]).unwrap();
        let data = singlet_data(10, 1, &angles, 0.0).unwrap();
        let pbar = pbar_from_binary_moments(&data).unwrap();
        let report = solve_pbar(&pbar, &SolverConfig::default()).unwrap();
        assert!(report.violated, "cost = {}", report.cost);
        // Cross-check with the moment-based certificate route.
        let cert = crate::optimizer::solve(&data, &crate::optimizer::SolverConfig::default())
            .unwrap()
            .certified;
        assert!(cert.violated);
    }

    #[test]
    fn solve_pbar_uniform_distribution_sits_at_zero() {
        let scenario = Scenario::new(5, 2, 1).unwrap();
        let table = vec![0.25; 16];
        let pbar = PairDistribution::new(scenario, table).unwrap();
        let config = SolverConfig {
            max_iters: 800,
            restarts: 2,
            ..Default::default()
        };
        let report = solve_pbar(&pbar, &config).unwrap();
        assert!(report.cost.abs() <= 1e-6, "cost = {}", report.cost);
    }

    #[test]
    fn linear_pair_relaxation_misses_squeezed_point() {
        // A squeezed state violating the two-setting inequality is outside
        // the LV pair-marginal set, but the separation there rests on the
        // nonlinear term -(M0+M1)-with-Ct of the moment route. The pair
        // search is linear in Pbar, and for a PSD matrix M both <M, Pbar>'s
        // negative part and E_max(M) >= 0 leave no certificate here: its
        // optimum stays at zero while the exact moment certificate fires.
        let n = 8usize;
        let (m_x, chi2) = (0.95, 0.05);
        let jx = n as f64 * m_x / 2.0;
        let var_y = n as f64 * chi2 / 4.0;
        let theta = crate::catalog::tura_optimal_theta(n, jx, var_y);
        let data = crate::scenario::squeezed_data(
            n,
            1,
            &crate::scenario::SqueezedParams::new(m_x, chi2),
            &AngleSet::new(vec![theta, -theta]).unwrap(),
        )
        .unwrap();
        let cert = crate::oracle::certify(&crate::catalog::tura_tight().candidate, &data).unwrap();
        assert!(cert.violated);
        let pbar = pbar_from_binary_moments(&data).unwrap();
        let report = solve_pbar(
            &pbar,
            &SolverConfig {
                max_iters: 4000,
                restarts: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!report.violated);
        assert!(report.cost.abs() <= 1e-6, "cost = {}", report.cost);
    }

    #[test]
    fn pair_distribution_json_round_trip() {
        let scenario = Scenario::new(3, 2, 1).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let model = random_lv_model(scenario, 3, &mut rng).unwrap();
        let pbar = pbar_from_lv(&model).unwrap();
        let json = pbar.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["k", "d", "N", "table"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back = PairDistribution::from_json(&json).unwrap();
        assert_eq!(back, pbar);
    }

    #[test]
    fn validation_rejects_bad_tables() {
        let scenario = Scenario::new(3, 1, 1).unwrap();
        // Not normalized.
        assert!(PairDistribution::new(scenario, vec![0.3; 4]).is_err());
        // Negative entry.
        assert!(PairDistribution::new(scenario, vec![0.6, -0.1, 0.3, 0.2]).is_err());
        // Asymmetric under pair swap.
        let scenario2 = Scenario::new(3, 2, 1).unwrap();
        let mut table = vec![0.25; 16];
        let idx = |a: usize, b: usize, s: usize, t: usize| ((a * 2 + b) * 2 + s) * 2 + t;
        table[idx(0, 1, 0, 1)] = 0.3;
        table[idx(0, 1, 1, 0)] = 0.2;
        table[idx(1, 0, 0, 1)] = 0.3;
        table[idx(1, 0, 1, 0)] = 0.2;
        assert!(PairDistribution::new(scenario2, table).is_err());
    }
}
