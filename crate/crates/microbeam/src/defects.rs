//! Linearized defect densities: dislocations (torsion) and disclinations
//! (curvature), measured from a solved state.
//!
//! The torsion tensor `T^i_{jk} = N^i_{jk} - N^i_{kj}` is antisymmetric in
//! its lower pair (nine independent components). The curvature tensor keeps
//! only the `R^i_{j,alpha,1} = N^i_{j,alpha,1}` slices (eighteen independent
//! components); its remaining slots vanish identically in this kinematics.
//! Constrained regimes substitute their effective micro-curvature:
//! `N = grad P` (semi-holonomic, transversal slices frozen) or
//! `N = grad grad u` (holonomic).

use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::fd;
use crate::model::{BeamConfig, FieldId, FieldState, Grid, Regime};

/// The effective micro-curvature samples per regime, `[n * 27]`, layout
/// `(i, j, k)` row-major.
fn effective_n(state: &FieldState, config: &BeamConfig) -> Vec<f64> {
    let grid = state.grid;
    let n = grid.n;
    let h = grid.h();
    let mut out = vec![0.0; n * 27];
    let set = |i: usize, j: usize, k: usize, values: &[f64], out: &mut Vec<f64>| {
        let base = (9 * (i - 1) + 3 * (j - 1) + (k - 1)) * n;
        out[base..base + n].copy_from_slice(values);
    };
    match config.regime {
        Regime::NonHolonomic => {
            for i in 1..=3 {
                for j in 1..=3 {
                    for k in 1..=3 {
                        set(i, j, k, state.field(FieldId::n(i, j, k)), &mut out);
                    }
                }
            }
        }
        Regime::SemiHolonomic => {
            for i in 1..=3 {
                for j in 1..=3 {
                    let dp = fd::derivative(state.field(FieldId::p(i, j)), h, 1);
                    set(i, j, 1, &dp, &mut out);
                    for alpha in 2..=3 {
                        let frozen = vec![config.frozen_n(i, j, alpha); n];
                        set(i, j, alpha, &frozen, &mut out);
                    }
                }
            }
        }
        Regime::Holonomic => {
            for i in 1..=3 {
                let ddu = fd::derivative(state.field(FieldId::u(i)), h, 2);
                set(i, 1, 1, &ddu, &mut out);
                for alpha in 2..=3 {
                    let slope = vec![config.frozen_slope(i, alpha); n];
                    set(i, 1, alpha, &slope, &mut out);
                    set(i, alpha, 1, &slope, &mut out);
                    for beta in 2..=3 {
                        let zero = vec![0.0; n];
                        set(i, alpha, beta, &zero, &mut out);
                    }
                }
            }
        }
    }
    out
}

fn n_at(buf: &[f64], n: usize, i: usize, j: usize, k: usize, node: usize) -> f64 {
    buf[(9 * (i - 1) + 3 * (j - 1) + (k - 1)) * n + node]
}

/// Torsion samples `T^i_{jk}`, layout `[n * 27]` matching `FieldId::n`.
pub fn torsion(state: &FieldState, config: &BeamConfig) -> Vec<f64> {
    let n = state.grid.n;
    let buf = effective_n(state, config);
    let mut out = vec![0.0; n * 27];
    for i in 1..=3 {
        for j in 1..=3 {
            for k in 1..=3 {
                let base = (9 * (i - 1) + 3 * (j - 1) + (k - 1)) * n;
                for node in 0..n {
                    out[base + node] =
                        n_at(&buf, n, i, j, k, node) - n_at(&buf, n, i, k, j, node);
                }
            }
        }
    }
    out
}

/// Curvature samples `R^i_{j,alpha,1}`, layout `[n * 18]` with
/// `(i, j, alpha)` row-major and `alpha` in `{2, 3}`.
pub fn curvature(state: &FieldState, config: &BeamConfig) -> Vec<f64> {
    let grid = state.grid;
    let n = grid.n;
    let h = grid.h();
    let buf = effective_n(state, config);
    let mut out = vec![0.0; n * 18];
    for i in 1..=3 {
        for j in 1..=3 {
            for (ai, alpha) in [2usize, 3].iter().enumerate() {
                let slice: Vec<f64> = (0..n).map(|node| n_at(&buf, n, i, j, *alpha, node)).collect();
                let d = fd::derivative(&slice, h, 1);
                let base = (6 * (i - 1) + 2 * (j - 1) + ai) * n;
                out[base..base + n].copy_from_slice(&d);
            }
        }
    }
    out
}

/// Curl of the micro-distortion recovered from the epsilon contraction of the
/// gradient-substituted torsion, `[n * 9]` with `(i, l)` row-major.
///
/// Longitudinal derivatives of `P` come from finite differences; transversal
/// ones from the effective micro-curvature, following the kinematic
/// reduction.
pub fn curl_p(state: &FieldState, config: &BeamConfig) -> Vec<f64> {
    let grid = state.grid;
    let n = grid.n;
    let h = grid.h();
    let buf = effective_n(state, config);
    // grad-substituted micro-curvature: longitudinal slice from P'.
    let mut grad = buf;
    for i in 1..=3 {
        for j in 1..=3 {
            let dp = fd::derivative(state.field(FieldId::p(i, j)), h, 1);
            let base = (9 * (i - 1) + 3 * (j - 1)) * n;
            grad[base..base + n].copy_from_slice(&dp);
        }
    }
    let eps = |j: usize, k: usize, l: usize| -> f64 {
        match (j, k, l) {
            (1, 2, 3) | (2, 3, 1) | (3, 1, 2) => 1.0,
            (3, 2, 1) | (2, 1, 3) | (1, 3, 2) => -1.0,
            _ => 0.0,
        }
    };
    let mut out = vec![0.0; n * 9];
    for i in 1..=3 {
        for l in 1..=3 {
            let base = (3 * (i - 1) + (l - 1)) * n;
            for node in 0..n {
                let mut acc = 0.0;
                for j in 1..=3 {
                    for k in 1..=3 {
                        let t = n_at(&grad, n, i, j, k, node) - n_at(&grad, n, i, k, j, node);
                        acc += 0.5 * eps(j, k, l) * t;
                    }
                }
                out[base + node] = acc;
            }
        }
    }
    out
}

/// Torsion, curvature and curl samples of one state.
#[derive(Debug, Clone)]
pub struct DefectField {
    pub grid: Grid,
    pub torsion: Vec<f64>,
    pub curvature: Vec<f64>,
    pub curl_p: Vec<f64>,
}

impl DefectField {
    pub fn compute(state: &FieldState, config: &BeamConfig) -> DefectField {
        DefectField {
            grid: state.grid,
            torsion: torsion(state, config),
            curvature: curvature(state, config),
            curl_p: curl_p(state, config),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComponentNorms {
    pub label: String,
    pub linf: f64,
    pub l2: f64,
}

/// Per-component norms of the defect densities.
#[derive(Debug, Clone)]
pub struct DefectReport {
    pub torsion: Vec<ComponentNorms>,
    pub curvature: Vec<ComponentNorms>,
    pub torsion_linf: f64,
    pub curvature_linf: f64,
}

fn norms(values: &[f64], grid: Grid) -> (f64, f64) {
    let w = fd::trapezoid_weights(grid.n, grid.h());
    let linf = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l2 = values
        .iter()
        .zip(&w)
        .map(|(v, wi)| wi * v * v)
        .sum::<f64>()
        .sqrt();
    (linf, l2)
}

/// Aggregate the independent defect components of a state.
pub fn defect_report(state: &FieldState, config: &BeamConfig) -> DefectReport {
    let grid = state.grid;
    let n = grid.n;
    let t = torsion(state, config);
    let r = curvature(state, config);
    let mut torsion_norms = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            for k in j + 1..=3 {
                let base = (9 * (i - 1) + 3 * (j - 1) + (k - 1)) * n;
                let (linf, l2) = norms(&t[base..base + n], grid);
                torsion_norms.push(ComponentNorms {
                    label: format!("T^{i}_{j}{k}"),
                    linf,
                    l2,
                });
            }
        }
    }
    let mut curvature_norms = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            for (ai, alpha) in [2usize, 3].iter().enumerate() {
                let base = (6 * (i - 1) + 2 * (j - 1) + ai) * n;
                let (linf, l2) = norms(&r[base..base + n], grid);
                curvature_norms.push(ComponentNorms {
                    label: format!("R^{i}_{j}{alpha}1"),
                    linf,
                    l2,
                });
            }
        }
    }
    let torsion_linf = torsion_norms.iter().fold(0.0f64, |m, c| m.max(c.linf));
    let curvature_linf = curvature_norms.iter().fold(0.0f64, |m, c| m.max(c.linf));
    DefectReport {
        torsion: torsion_norms,
        curvature: curvature_norms,
        torsion_linf,
        curvature_linf,
    }
}

/// Emit the defect fields along the beam as CSV.
pub fn write_defect_csv(field: &DefectField, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let n = field.grid.n;
    let mut header = vec!["X^1".to_string()];
    for i in 1..=3 {
        for j in 1..=3 {
            for k in j + 1..=3 {
                header.push(format!("T^{i}_{j}{k}"));
            }
        }
    }
    for i in 1..=3 {
        for j in 1..=3 {
            for alpha in 2..=3 {
                header.push(format!("R^{i}_{j}{alpha}1"));
            }
        }
    }
    writeln!(file, "{}", header.join(","))?;
    for node in 0..n {
        let mut row = vec![format!("{:.12e}", field.grid.x(node))];
        for i in 1..=3 {
            for j in 1..=3 {
                for k in j + 1..=3 {
                    let base = (9 * (i - 1) + 3 * (j - 1) + (k - 1)) * n;
                    row.push(format!("{:.12e}", field.torsion[base + node]));
                }
            }
        }
        for i in 1..=3 {
            for j in 1..=3 {
                for ai in 0..2 {
                    let base = (6 * (i - 1) + 2 * (j - 1) + ai) * n;
                    row.push(format!("{:.12e}", field.curvature[base + node]));
                }
            }
        }
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;

    fn nh_config() -> BeamConfig {
        BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1)
    }

    #[test]
    fn torsion_antisymmetrizes_the_micro_curvature() {
        let config = nh_config();
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        state.fill_with(FieldId::n(1, 1, 2), |_| 0.7);
        let t = torsion(&state, &config);
        let n = 11;
        let idx = |j: usize, k: usize| (3 * (j - 1) + (k - 1)) * n + 5;
        assert_eq!(t[idx(1, 2)], 0.7);
        assert_eq!(t[idx(2, 1)], -0.7);
    }

    #[test]
    fn symmetric_micro_curvature_has_no_torsion() {
        let config = nh_config();
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        for (j, k) in [(1, 2), (2, 1)] {
            state.fill_with(FieldId::n(2, j, k), |x| x + 0.3);
        }
        let t = torsion(&state, &config);
        assert!(t.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn holonomic_states_carry_no_torsion() {
        let mut config = BeamConfig::holonomic(1.0, 1.0, 1.0, 1.0, 0.1);
        config.frozen_u_alpha_slope = Some([[0.4, -0.2], [0.0, 0.1], [0.3, 0.0]]);
        let mut state = FieldState::zeros(Grid::new(21, 1.0));
        for i in 1..=3 {
            state.fill_with(FieldId::u(i), move |x| (x * (1.0 + i as f64)).sin());
        }
        let t = torsion(&state, &config);
        assert!(t.iter().all(|v| v.abs() < 1e-12), "holonomic torsion must vanish");
    }

    #[test]
    fn constant_micro_curvature_has_no_curvature_density() {
        let config = nh_config();
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        state.fill_with(FieldId::n(3, 2, 3), |_| 1.3);
        let r = curvature(&state, &config);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn linear_micro_curvature_has_unit_curvature_density() {
        let config = nh_config();
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        state.fill_with(FieldId::n(1, 1, 2), |x| x);
        let r = curvature(&state, &config);
        let n = 11;
        // R^1_121 is component (i=1, j=1, alpha=2) -> base 0.
        for node in 0..n {
            assert!((r[node] - 1.0).abs() < 1e-11, "node {node}: {}", r[node]);
        }
    }

    #[test]
    fn semi_holonomic_states_have_identically_zero_curvature() {
        let mut config = BeamConfig::semi_holonomic(1.0, 1.0, 0.5, 2.0, 1.0, 0.1);
        config.frozen_n_jalpha = Some([[[0.3, -0.1]; 3]; 3]);
        let mut state = FieldState::zeros(Grid::new(31, 1.0));
        for i in 1..=3 {
            for j in 1..=3 {
                state.fill_with(FieldId::p(i, j), move |x| (x * (i + j) as f64).cos());
            }
        }
        let r = curvature(&state, &config);
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn torsion_matches_the_epsilon_contracted_curl() {
        // With N := grad P the torsion is the epsilon contraction of Curl P.
        let mut config = BeamConfig::semi_holonomic(1.0, 1.0, 0.5, 2.0, 1.0, 0.1);
        config.frozen_n_jalpha = Some([[[0.2, -0.3]; 3]; 3]);
        let mut state = FieldState::zeros(Grid::new(41, 1.0));
        for i in 1..=3 {
            for j in 1..=3 {
                state.fill_with(FieldId::p(i, j), move |x| (2.0 * x + (i * j) as f64).sin());
            }
        }
        let t = torsion(&state, &config);
        let c = curl_p(&state, &config);
        let n = 41;
        let eps = |j: usize, k: usize, l: usize| -> f64 {
            match (j, k, l) {
                (1, 2, 3) | (2, 3, 1) | (3, 1, 2) => 1.0,
                (3, 2, 1) | (2, 1, 3) | (1, 3, 2) => -1.0,
                _ => 0.0,
            }
        };
        for i in 1..=3 {
            for j in 1..=3 {
                for k in 1..=3 {
                    for node in 0..n {
                        let tv = t[(9 * (i - 1) + 3 * (j - 1) + (k - 1)) * n + node];
                        let mut contraction = 0.0;
                        for l in 1..=3 {
                            contraction += eps(j, k, l) * c[(3 * (i - 1) + (l - 1)) * n + node];
                        }
                        assert!(
                            (tv - contraction).abs() < 1e-10,
                            "T^{i}_{j}{k} at {node}: {tv} vs {contraction}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_state_reports_zero_norms() {
        let config = nh_config();
        let state = FieldState::zeros(Grid::new(11, 1.0));
        let report = defect_report(&state, &config);
        assert_eq!(report.torsion_linf, 0.0);
        assert_eq!(report.curvature_linf, 0.0);
        assert_eq!(report.torsion.len(), 9);
        assert_eq!(report.curvature.len(), 18);
    }
}
