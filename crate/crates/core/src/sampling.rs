//! Round-based simulation of the measurement protocol on local-variable
//! models, and the plug-in estimators for the averaged moments.
//!
//! Each round draws one hidden strategy table from the model's mixture and
//! an independent uniform setting per party; the estimators weight each
//! (party, setting) and (pair, setting-pair) cell by its inverse count, so
//! they are unbiased for the model moments. The error on `M` shrinks as
//! `sqrt(N k / R)` and on `Ct` as `N k / sqrt(R)`, so the rounds needed for
//! a fixed relative precision scale as `k^2 / eps^2`, independent of N.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::oracle::LvModel;
use crate::scenario::{QuantumData, Scenario};

/// Identifier of the round-sampling random generator, recorded in output
/// metadata so runs can be replayed.
pub const RNG_ALGORITHM: &str = "chacha12";

/// One protocol round: the setting chosen on each party and the outcome it
/// produced (2s encoding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub settings: Vec<u8>,
    pub outcomes: Vec<i32>,
}

/// Runs `rounds` protocol rounds on the model, deterministically in `seed`.
/// Per round: one mixture component is drawn, then one uniform setting per
/// party; the outcome is read from the component's strategy table.
pub fn sample_rounds(model: &LvModel, rounds: usize, seed: u64) -> Vec<RoundRecord> {
    let scenario = model.scenario();
    let (n, k) = (scenario.n_parties(), scenario.n_settings());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = model
        .mixture()
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.weight;
            Some(*acc)
        })
        .collect();
    let mut records = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let u: f64 = rng.random();
        let comp_idx = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(model.mixture().len() - 1);
        let tables = &model.mixture()[comp_idx].tables;
        let mut settings = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        for i in 0..n {
            let a = rng.random_range(0..k);
            settings.push(a as u8);
            outcomes.push(tables[i][a]);
        }
        records.push(RoundRecord { settings, outcomes });
    }
    records
}

/// Plug-in estimates of the averaged moments from protocol rounds:
/// `M_a = sum_i mean(s_i | a_i = a)`,
/// `C_ab = sum_{i != j} mean(s_i s_j | a_i = a, a_j = b)`,
/// `M2_a = sum_i mean(s_i^2 | a_i = a)`, and `Ct = C - M M^T`.
/// Every (party, setting) and ordered (pair, setting-pair) cell must carry
/// at least one sample; an empty cell is an error naming the cell.
pub fn estimate(records: &[RoundRecord], scenario: Scenario) -> Result<QuantumData> {
    let (n, k) = (scenario.n_parties(), scenario.n_settings());
    if records.is_empty() {
        return Err(Error::EmptyCell("no rounds at all".into()));
    }
    for (r, rec) in records.iter().enumerate() {
        if rec.settings.len() != n || rec.outcomes.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "round {r} covers {} parties, scenario has {n}",
                rec.settings.len()
            )));
        }
    }
    // Single-party cells.
    let mut count1 = vec![0u64; n * k];
    let mut sum1 = vec![0f64; n * k];
    let mut sum1_sq = vec![0f64; n * k];
    // Ordered-pair cells, flattened as ((i*n + j)*k + a)*k + b.
    let mut count2 = vec![0u64; n * n * k * k];
    let mut sum2 = vec![0f64; n * n * k * k];

    for rec in records {
        for i in 0..n {
            let a = rec.settings[i] as usize;
            let s = rec.outcomes[i] as f64 / 2.0;
            count1[i * k + a] += 1;
            sum1[i * k + a] += s;
            sum1_sq[i * k + a] += s * s;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let b = rec.settings[j] as usize;
                let t = rec.outcomes[j] as f64 / 2.0;
                let cell = ((i * n + j) * k + a) * k + b;
                count2[cell] += 1;
                sum2[cell] += s * t;
            }
        }
    }

    for i in 0..n {
        for a in 0..k {
            if count1[i * k + a] == 0 {
                return Err(Error::EmptyCell(format!(
                    "party {i} never measured setting {a}"
                )));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for a in 0..k {
                for b in 0..k {
                    if count2[((i * n + j) * k + a) * k + b] == 0 {
                        return Err(Error::EmptyCell(format!(
                            "pair ({i},{j}) never measured settings ({a},{b})"
                        )));
                    }
                }
            }
        }
    }

    let m: Vec<f64> = (0..k)
        .map(|a| {
            (0..n)
                .map(|i| sum1[i * k + a] / count1[i * k + a] as f64)
                .sum()
        })
        .collect();
    let m2: Vec<f64> = (0..k)
        .map(|a| {
            (0..n)
                .map(|i| sum1_sq[i * k + a] / count1[i * k + a] as f64)
                .sum()
        })
        .collect();
    let c = SymMat::from_fn(k, |a, b| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let cell = ((i * n + j) * k + a) * k + b;
                acc += sum2[cell] / count2[cell] as f64;
            }
        }
        acc
    });
    let ct = SymMat::from_fn(k, |a, b| c.get(a, b) - m[a] * m[b]);
    QuantumData::new(scenario, m, ct, m2, Some(c))
}

/// Gaussian-regime planning estimate for the rounds needed to reach
/// relative precision `eps` on the pair correlations: `ceil(k^2 / eps^2)`.
/// A heuristic, not a tail bound.
pub fn runs_for_precision(k: usize, eps: f64) -> u64 {
    ((k as f64 / eps).powi(2)).ceil() as u64
}

/// Writes rounds as CSV with header `round,party,setting,outcome2s`.
pub fn rounds_to_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from("round,party,setting,outcome2s\n");
    for (r, rec) in records.iter().enumerate() {
        for (i, (&a, &s)) in rec.settings.iter().zip(&rec.outcomes).enumerate() {
            out.push_str(&format!("{r},{i},{a},{s}\n"));
        }
    }
    out
}

/// Parses the CSV produced by [`rounds_to_csv`]. Rows must be grouped by
/// round with parties in ascending order.
pub fn rounds_from_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "round,party,setting,outcome2s" => {}
        other => {
            return Err(Error::InvalidData(format!(
                "expected header 'round,party,setting,outcome2s', got {other:?}"
            )))
        }
    }
    let mut records: Vec<RoundRecord> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |f: Option<&str>| -> Result<i64> {
            f.ok_or_else(|| Error::InvalidData(format!("line {}: missing field", ln + 2)))?
                .trim()
                .parse()
                .map_err(|e| Error::InvalidData(format!("line {}: {e}", ln + 2)))
        };
        let round = parse(fields.next())? as usize;
        let party = parse(fields.next())? as usize;
        let setting = parse(fields.next())?;
        let outcome = parse(fields.next())?;
        if round == records.len() {
            records.push(RoundRecord {
                settings: Vec::new(),
                outcomes: Vec::new(),
            });
        }
        let rec = records
            .get_mut(round)
            .ok_or_else(|| Error::InvalidData(format!("line {}: rounds out of order", ln + 2)))?;
        if party != rec.settings.len() {
            return Err(Error::InvalidData(format!(
                "line {}: parties out of order",
                ln + 2
            )));
        }
        rec.settings.push(setting as u8);
        rec.outcomes.push(outcome as i32);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{extremal_lv_data, lv_moment_data, random_lv_model, LvComponent};
    use rand::SeedableRng;

    #[test]
    fn deterministic_model_rounds_read_the_table() {
        let scenario = Scenario::new(3, 2, 1).unwrap();
        let tables = vec![vec![1, -1], vec![-1, -1], vec![1, 1]];
        let model = LvModel::deterministic(scenario, tables.clone()).unwrap();
        let records = sample_rounds(&model, 200, 7);
        assert_eq!(records.len(), 200);
        for rec in &records {
            for i in 0..3 {
                assert_eq!(rec.outcomes[i], tables[i][rec.settings[i] as usize]);
            }
        }
    }

    #[test]
    fn zero_rounds_is_empty() {
        let scenario = Scenario::new(2, 1, 1).unwrap();
        let model = LvModel::deterministic(scenario, vec![vec![1], vec![-1]]).unwrap();
        assert!(sample_rounds(&model, 0, 1).is_empty());
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let scenario = Scenario::new(4, 3, 2).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let model = random_lv_model(scenario, 4, &mut rng).unwrap();
        let a = sample_rounds(&model, 500, 42);
        let b = sample_rounds(&model, 500, 42);
        assert_eq!(a, b);
        let c = sample_rounds(&model, 500, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn setting_frequencies_concentrate() {
        // |R_a^(i)/R - 1/k| < 5/sqrt(R) at R = 1e5.
        let scenario = Scenario::new(4, 2, 1).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let model = random_lv_model(scenario, 3, &mut rng).unwrap();
        let r = 100_000usize;
        let records = sample_rounds(&model, r, 11);
        let (n, k) = (4usize, 2usize);
        let mut counts = vec![0u64; n * k];
        for rec in &records {
            for i in 0..n {
                counts[i * k + rec.settings[i] as usize] += 1;
            }
        }
        for i in 0..n {
            for a in 0..k {
                let freq = counts[i * k + a] as f64 / r as f64;
                assert!(
                    (freq - 1.0 / k as f64).abs() < 5.0 / (r as f64).sqrt(),
                    "party {i} setting {a}: {freq}"
                );
            }
        }
    }

    #[test]
    fn deterministic_model_estimates_exactly() {
        // Outcomes carry no sampling noise, so with full cell coverage the
        // estimates equal the extremal moments exactly.
        let scenario = Scenario::new(3, 2, 2).unwrap();
        let tables = vec![vec![2, 0], vec![-2, 2], vec![0, 0]];
        let model = LvModel::deterministic(scenario, tables.clone()).unwrap();
        let records = sample_rounds(&model, 400, 5);
        let est = estimate(&records, scenario).unwrap();
        let exact = extremal_lv_data(&tables, scenario).unwrap();
        for a in 0..2 {
            assert_eq!(est.m()[a], exact.m()[a]);
            assert_eq!(est.m2()[a], exact.m2()[a]);
            for b in 0..2 {
                assert!((est.c_matrix().get(a, b) - exact.c_matrix().get(a, b)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn estimates_converge_to_mixture_moments() {
        // Max-norm error roughly halves when R quadruples (averaged over
        // seeds; tolerance +-30%).
        let scenario = Scenario::new(4, 2, 1).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let model = random_lv_model(scenario, 4, &mut rng).unwrap();
        let truth = lv_moment_data(&model).unwrap();
        let err_at = |r: usize, seeds: std::ops::Range<u64>| -> f64 {
            let mut total = 0.0;
            let count = seeds.end - seeds.start;
            for seed in seeds {
                let est = estimate(&sample_rounds(&model, r, seed), scenario).unwrap();
                let mut err: f64 = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        err = err.max((est.ct().get(a, b) - truth.ct().get(a, b)).abs());
                    }
                }
                total += err;
            }
            total / count as f64
        };
        let e1 = err_at(25_000, 0..20);
        let e2 = err_at(100_000, 0..20);
        let ratio = e1 / e2;
        assert!(
            (1.4..=2.6).contains(&ratio),
            "error ratio {ratio} not within 2 +- 30%"
        );
    }

    #[test]
    fn empty_cell_is_a_named_error() {
        let scenario = Scenario::new(2, 3, 1).unwrap();
        let model =
            LvModel::deterministic(scenario, vec![vec![1, 1, -1], vec![-1, 1, 1]]).unwrap();
        // Two rounds cannot cover 3 settings per party.
        let records = sample_rounds(&model, 2, 1);
        match estimate(&records, scenario) {
            Err(Error::EmptyCell(msg)) => {
                assert!(msg.contains("setting") || msg.contains("settings"), "{msg}");
            }
            other => panic!("expected EmptyCell, got {other:?}"),
        }
    }

    #[test]
    fn runs_for_precision_formula() {
        assert_eq!(runs_for_precision(2, 0.1), 400);
        assert_eq!(runs_for_precision(3, 0.05), 3600);
        // Doubling k quadruples R at fixed eps.
        for k in [1usize, 2, 3, 5] {
            let eps = 0.07;
            let r1 = runs_for_precision(k, eps) as f64;
            let r2 = runs_for_precision(2 * k, eps) as f64;
            assert!((r2 / r1 - 4.0).abs() < 0.02);
        }
    }

    #[test]
    fn csv_round_trip() {
        let scenario = Scenario::new(3, 2, 3).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(14);
        let model = random_lv_model(scenario, 2, &mut rng).unwrap();
        let records = sample_rounds(&model, 25, 3);
        let csv = rounds_to_csv(&records);
        assert!(csv.starts_with("round,party,setting,outcome2s\n"));
        let back = rounds_from_csv(&csv).unwrap();
        assert_eq!(back, records);
        assert!(rounds_from_csv("bad header\n1,2,3,4\n").is_err());
    }

    #[test]
    fn mixture_weights_drive_component_frequencies() {
        let scenario = Scenario::new(2, 1, 1).unwrap();
        let model = LvModel::new(
            scenario,
            vec![
                LvComponent {
                    weight: 0.8,
                    tables: vec![vec![1], vec![1]],
                },
                LvComponent {
                    weight: 0.2,
                    tables: vec![vec![-1], vec![-1]],
                },
            ],
        )
        .unwrap();
        let records = sample_rounds(&model, 50_000, 19);
        let ups = records.iter().filter(|r| r.outcomes[0] == 1).count() as f64;
        let freq = ups / records.len() as f64;
        assert!((freq - 0.8).abs() < 0.02, "{freq}");
    }
}
