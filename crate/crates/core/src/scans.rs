//! Batch drivers producing the robustness curve, the squeezing phase
//! diagram, and the singlet zoo scan as deterministic tables with fixed
//! CSV renderings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::error::Result;
use crate::optimizer::{self, Gauge, SolverConfig};
use crate::oracle::BellCandidate;
use crate::scenario::{singlet_data, AngleSet};

use std::f64::consts::PI;

/// Tolerance used when comparing fingerprints: eigenvalues are compared
/// entrywise rather than rounded, so a family is never split by a value
/// that happens to sit on a rounding boundary.
pub const FINGERPRINT_TOL: f64 = 2e-3;

/// Family fingerprint of a candidate: the sorted eigenvalues of the
/// shift-invariant `At = A - diag(h2)`, normalized to unit Frobenius norm.
/// `At` is invariant under the reparameterization
/// `(A, h2) -> (A + diag(delta), h2 + delta)` that leaves the per-particle
/// energy (and every cost evaluated on singlet data) unchanged; for d = 2,
/// where diagonal shifts of `At` itself are immaterial, the diagonal is
/// canonicalized to zero first. Invariant under setting permutations and
/// outcome relabelings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint(pub Vec<f64>);

pub fn fingerprint(cand: &BellCandidate) -> Result<Fingerprint> {
    let mut at = cand.a_tilde();
    if cand.two_j() == 1 {
        for i in 0..at.dim() {
            at.set_sym(i, i, 0.0);
        }
    }
    let norm = at.frobenius_norm();
    if norm < 1e-12 {
        return Ok(Fingerprint(vec![0.0; at.dim()]));
    }
    Ok(Fingerprint(at.scaled(1.0 / norm).eigenvalues()?))
}

pub fn fingerprints_match(a: &Fingerprint, b: &Fingerprint) -> bool {
    a.0.len() == b.0.len()
        && a.0
            .iter()
            .zip(&b.0)
            .all(|(x, y)| (x - y).abs() <= FINGERPRINT_TOL)
}

// ---------------------------------------------------------------------------
// Robustness curve (three-setting squeezed-state families over theta).
// ---------------------------------------------------------------------------

/// One row of the robustness table: the relative violation
/// `|<B>/B_c| - 1` (positive means violation, and equals the tolerated
/// white-noise fraction) of the two-setting inequality and of the
/// three-setting family at `a = 1` and at the optimal `a`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub theta: f64,
    pub two_setting: f64,
    pub a_one: f64,
    pub a_opt: f64,
}

/// The default 512-point theta grid over (0, pi/2].
pub fn default_theta_grid() -> Vec<f64> {
    (0..512).map(|i| (i + 1) as f64 * PI / 2.0 / 512.0).collect()
}

pub fn robustness_curve(m_x: f64, chi2: f64, theta_grid: &[f64]) -> Vec<RobustnessRow> {
    theta_grid
        .iter()
        .map(|&theta| RobustnessRow {
            theta,
            two_setting: catalog::turalike_ratio(theta, 0.0, m_x, chi2) - 1.0,
            a_one: catalog::turalike_ratio(theta, 1.0, m_x, chi2) - 1.0,
            a_opt: catalog::optimal_a(theta, m_x, chi2).1 - 1.0,
        })
        .collect()
}

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = String::from("theta,ratio_eq21,ratio_a1,ratio_aopt\n");
    for r in rows {
        out.push_str(&format!(
            "{:.9},{:.9},{:.9},{:.9}\n",
            r.theta, r.two_setting, r.a_one, r.a_opt
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Phase diagram over (m_x, chi2).
// ---------------------------------------------------------------------------

/// Criteria satisfied at one grid point. Violation of the Bell families is
/// decided by maximizing the violation ratio over a fixed 512-point theta
/// grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhasePoint {
    pub m_x: f64,
    pub chi2: f64,
    pub wineland: bool,
    pub two_setting: bool,
    pub a_one: bool,
    pub a_opt: bool,
}

impl PhasePoint {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut l = Vec::new();
        if self.wineland {
            l.push("wineland");
        }
        if self.two_setting {
            l.push("tura_tight");
        }
        if self.a_one {
            l.push("turalike_a1");
        }
        if self.a_opt {
            l.push("turalike_aopt");
        }
        l
    }
}

pub fn phase_point(m_x: f64, chi2: f64) -> PhasePoint {
    let grid = default_theta_grid();
    let mut best0 = f64::NEG_INFINITY;
    let mut best1 = f64::NEG_INFINITY;
    let mut best_opt = f64::NEG_INFINITY;
    for &theta in &grid {
        best0 = best0.max(catalog::turalike_ratio(theta, 0.0, m_x, chi2));
        best1 = best1.max(catalog::turalike_ratio(theta, 1.0, m_x, chi2));
        best_opt = best_opt.max(catalog::optimal_a(theta, m_x, chi2).1);
    }
    PhasePoint {
        m_x,
        chi2,
        wineland: catalog::wineland(m_x, chi2),
        two_setting: best0 > 1.0,
        a_one: best1 > 1.0,
        a_opt: best_opt > 1.0,
    }
}

pub fn phase_diagram(mx_grid: &[f64], chi2_grid: &[f64]) -> Vec<PhasePoint> {
    let cells: Vec<(f64, f64)> = mx_grid
        .iter()
        .flat_map(|&m| chi2_grid.iter().map(move |&c| (m, c)))
        .collect();
    cells
        .into_par_iter()
        .map(|(m, c)| phase_point(m, c))
        .collect()
}

pub fn phase_csv(points: &[PhasePoint]) -> String {
    let mut out = String::from("mx,chi2,labels\n");
    for p in points {
        out.push_str(&format!(
            "{:.9},{:.9},{}\n",
            p.m_x,
            p.chi2,
            p.labels().join("|")
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Singlet zoo scan.
// ---------------------------------------------------------------------------

/// One scanned cell: perfect-singlet data at angles `(t1, 0, -t2)` was fed
/// to the sphere-gauge search; `violation_per_n` is the certified
/// `max(0, B_c - <B>)/N` of the discovered candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZooCell {
    pub t1: f64,
    pub t2: f64,
    pub violation_per_n: f64,
    pub fingerprint_id: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZooTable {
    pub two_j: u32,
    pub n_parties: usize,
    pub cells: Vec<ZooCell>,
    /// Fingerprint registry, indexed by `fingerprint_id`, in first-appearance
    /// order over the row-major grid traversal.
    pub fingerprints: Vec<Fingerprint>,
    /// SU(2)-invariance threshold on `Var(Jx)/N` of the discovered candidate
    /// along the diagonal `t1 = t2 = t` (only when the two grids coincide):
    /// pairs `(t, threshold)`, with 0 where no violation direction exists.
    pub panel_e: Vec<(f64, f64)>,
}

/// The default open grid over (0, pi) with `points` cells.
pub fn zoo_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| (i + 1) as f64 * PI / (points + 1) as f64)
        .collect()
}

/// Per-cell search budget used by the scan (the full default budget over a
/// 48 x 48 grid would be needlessly slow).
pub fn zoo_solver_config(seed: u64) -> SolverConfig {
    SolverConfig {
        max_iters: 1500,
        restarts: 2,
        gauge: Gauge::Sphere,
        seed,
        ..Default::default()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the sphere-gauge search on perfect-singlet data over the angle grid
/// and clusters the discovered candidates by fingerprint. Deterministic:
/// per-cell seeds are derived from `config.seed` and the cell index, and
/// results are merged in grid order.
pub fn zoo_scan(
    two_j: u32,
    n_parties: usize,
    t1_grid: &[f64],
    t2_grid: &[f64],
    config: &SolverConfig,
) -> Result<ZooTable> {
    let cells: Vec<(usize, f64, f64)> = t1_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &t1)| {
            t2_grid
                .iter()
                .enumerate()
                .map(move |(j, &t2)| (i * t2_grid.len() + j, t1, t2))
        })
        .collect();

    let solved: Vec<(f64, f64, f64, Fingerprint, BellCandidate)> = cells
        .into_par_iter()
        .map(|(idx, t1, t2)| -> Result<_> {
            let angles = AngleSet::new(vec![t1, 0.0, -t2])?;
            let data = singlet_data(n_parties, two_j, &angles, 0.0)?;
            let cell_config = SolverConfig {
                seed: splitmix(config.seed ^ idx as u64),
                ..config.clone()
            };
            let report = optimizer::solve(&data, &cell_config)?;
            let violation = (report.certified.margin.max(0.0)) / n_parties as f64;
            let fp = fingerprint(&report.candidate)?;
            Ok((t1, t2, violation, fp, report.candidate))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fingerprints: Vec<Fingerprint> = Vec::new();
    let mut cells_out = Vec::with_capacity(solved.len());
    let diagonal = t1_grid == t2_grid;
    let mut panel_e = Vec::new();
    for (row, (t1, t2, violation, fp, cand)) in solved.iter().enumerate() {
        let id = match fingerprints.iter().position(|f| fingerprints_match(f, fp)) {
            Some(id) => id,
            None => {
                fingerprints.push(fp.clone());
                fingerprints.len() - 1
            }
        };
        cells_out.push(ZooCell {
            t1: *t1,
            t2: *t2,
            violation_per_n: *violation,
            fingerprint_id: id,
        });
        if diagonal && row % t2_grid.len() == row / t2_grid.len() {
            let angles = AngleSet::new(vec![*t1, 0.0, -t1])?;
            let threshold = catalog::su2_threshold(cand, &angles)?.unwrap_or(0.0);
            panel_e.push((*t1, threshold.max(0.0)));
        }
    }
    Ok(ZooTable {
        two_j,
        n_parties,
        cells: cells_out,
        fingerprints,
        panel_e,
    })
}

pub fn zoo_csv(table: &ZooTable) -> String {
    let mut out = String::from("t1,t2,violation_per_N,fingerprint_id\n");
    for c in &table.cells {
        out.push_str(&format!(
            "{:.9},{:.9},{:.9},{}\n",
            c.t1, c.t2, c.violation_per_n, c.fingerprint_id
        ));
    }
    out
}

pub fn zoo_panel_e_csv(table: &ZooTable) -> String {
    let mut out = String::from("t,threshold\n");
    for (t, v) in &table.panel_e {
        out.push_str(&format!("{t:.9},{v:.9}\n"));
    }
    out
}

/// Distinct fingerprints among cells with a strictly positive violation.
pub fn distinct_violating_fingerprints(table: &ZooTable) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for c in &table.cells {
        if c.violation_per_n > 1e-9 {
            seen.insert(c.fingerprint_id);
        }
    }
    seen.len()
}
