//! Independent oracles and the asymptotic-limit experiments.
//!
//! The oracle never touches the solver's assembly: it reconstructs the
//! discrete quadratic potential by probing the public energy evaluator with
//! unit states, then solves the anchored minimization as a dense KKT system.
//! The sweeps drive the penalty moduli across decades and measure how the
//! relaxed solutions collapse onto the constrained ones.

use std::io::Write as _;
use std::path::Path;

use crate::assembly::{assemble_full, LinearBvp};
use crate::energy::{endpoint_combo, equilibrium_potential_model, Reflections};
use crate::error::{Error, Result};
use crate::model::{
    complete_derived_fields, BeamConfig, BoundarySpec, End, FieldId, FieldState, Grid, LoadSet,
    Regime,
};
use crate::parallel::{par_map, seq_map};
use crate::solver::solve_bvp;

/// Dense LU with partial pivoting; small systems only.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::SolverFailure(
                "dense oracle system is numerically singular".into(),
            ));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        perm.swap(col, piv);
        let diag = a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Constrained minimizer of the discrete quadratic total energy, obtained by
/// probing the potential evaluator and solving the dense KKT system.
///
/// Independent of the banded solve path end to end; agreement between the two
/// certifies both the assembly and the factorization.
pub fn oracle_minimize_on(bvp: &LinearBvp, n: usize) -> Result<FieldState> {
    let model = bvp.model();
    let config = bvp.config();
    let loads = bvp.loads();
    let bcs = bvp.bcs();
    let grid = Grid::new(n, config.length);
    if n < model.min_grid() {
        return Err(Error::GridTooCoarse {
            needed: model.min_grid(),
            got: n,
        });
    }
    let nf = model.fields.len();
    let nc = nf * n;
    let refl = Reflections::of(model, bcs);

    let mut probe_state = FieldState::zeros(grid);
    let phi = |dofs: &[(usize, f64)], probe_state: &mut FieldState| -> Result<f64> {
        for &(idx, v) in dofs {
            probe_state.set(model.fields[idx % nf], idx / nf, v);
        }
        let value = equilibrium_potential_model(model, probe_state, loads, &refl);
        for &(idx, _) in dofs {
            probe_state.set(model.fields[idx % nf], idx / nf, 0.0);
        }
        value
    };

    let phi0 = phi(&[], &mut probe_state)?;
    let mut singles = vec![0.0f64; nc];
    let mut linear = vec![0.0f64; nc];
    for i in 0..nc {
        singles[i] = phi(&[(i, 1.0)], &mut probe_state)?;
        let minus = phi(&[(i, -1.0)], &mut probe_state)?;
        linear[i] = 0.5 * (singles[i] - minus);
    }
    let span = model.stencil_span().max(1);
    let mut hess = vec![vec![0.0f64; nc]; nc];
    for i in 0..nc {
        // Diagonal: phi(2 e_i) - 2 phi(e_i) + phi(0).
        let two = phi(&[(i, 2.0)], &mut probe_state)?;
        hess[i][i] = two - 2.0 * singles[i] + phi0;
        let node_i = i / nf;
        for j in i + 1..nc {
            if j / nf > node_i + span {
                break;
            }
            let pair = phi(&[(i, 1.0), (j, 1.0)], &mut probe_state)?;
            let v = pair - singles[i] - singles[j] + phi0;
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }

    // Definiteness spot check along sampled directions.
    let mut seed = 0x2545f4914f6cdd1du64;
    let scale = hess
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..8 {
        let y: Vec<f64> = (0..nc)
            .map(|_| {
                seed ^= seed << 13;
                seed ^= seed >> 7;
                seed ^= seed << 17;
                (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let mut quad = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let lo = (i / nf).saturating_sub(span + 1) * nf;
            let hi = (((i / nf) + span + 1) * nf + nf).min(nc);
            for j in lo..hi {
                quad += yi * hess[i][j] * y[j];
            }
        }
        let norm2: f64 = y.iter().map(|v| v * v).sum();
        if quad < -1e-9 * scale * norm2 {
            return Err(Error::IndefiniteHessian(format!(
                "sampled direction with negative curvature {quad:.3e}"
            )));
        }
    }

    // Anchor constraints as one-sided endpoint stencils.
    let mut c_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for (end, f, deriv, value) in bcs.iter() {
        if refl.covers(end, f, deriv) {
            // Reflected slope anchors live inside the potential itself.
            continue;
        }
        let Some(slot) = model.fields.iter().position(|g| *g == f) else {
            continue;
        };
        let (start, weights) = endpoint_combo(grid, end, deriv);
        let row: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .map(|(k, w)| ((start + k) * nf + slot, *w))
            .collect();
        c_rows.push((row, value));
    }
    let m = c_rows.len();

    let dim = nc + m;
    let mut kkt = vec![vec![0.0f64; dim]; dim];
    let mut rhs = vec![0.0f64; dim];
    for i in 0..nc {
        kkt[i][..nc].copy_from_slice(&hess[i]);
        rhs[i] = -linear[i];
    }
    for (r, (row, value)) in c_rows.iter().enumerate() {
        for &(col, w) in row {
            kkt[nc + r][col] = w;
            kkt[col][nc + r] = w;
        }
        rhs[nc + r] = *value;
    }
    let x = dense_solve(kkt, rhs)?;

    let mut state = FieldState::zeros(grid);
    for (idx, v) in x.iter().take(nc).enumerate() {
        state.set(model.fields[idx % nf], idx / nf, *v);
    }
    state.validate()?;
    Ok(state)
}

/// Spec-shaped convenience: oracle over the full coupled system.
pub fn oracle_minimize(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    n: usize,
) -> Result<FieldState> {
    let bvp = assemble_full(config, loads, bcs)?;
    oracle_minimize_on(&bvp, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalKind {
    EulerBernoulli,
    Timoshenko,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalPreset {
    CantileverTipLoad { force: f64 },
    CantileverUniform { load: f64 },
    SimplySupportedUniform { load: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    /// Bending stiffness `E I` (the modulus b).
    pub bending_stiffness: f64,
    /// Shear stiffness `kappa G A` (the modulus d); ignored by the
    /// Euler-Bernoulli model.
    pub shear_stiffness: f64,
    pub length: f64,
}

/// Closed-form transverse deflection of the classical beam models.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalSolution {
    kind: ClassicalKind,
    preset: ClassicalPreset,
    params: ClassicalParams,
}

pub fn classical_reference(
    kind: ClassicalKind,
    preset: ClassicalPreset,
    params: ClassicalParams,
) -> ClassicalSolution {
    ClassicalSolution {
        kind,
        preset,
        params,
    }
}

impl ClassicalSolution {
    pub fn deflection(&self, x: f64) -> f64 {
        let ei = self.params.bending_stiffness;
        let ga = self.params.shear_stiffness;
        let l = self.params.length;
        let bend = match self.preset {
            ClassicalPreset::CantileverTipLoad { force } => {
                force * x * x * (3.0 * l - x) / (6.0 * ei)
            }
            ClassicalPreset::CantileverUniform { load } => {
                load * x * x * (x * x - 4.0 * l * x + 6.0 * l * l) / (24.0 * ei)
            }
            ClassicalPreset::SimplySupportedUniform { load } => {
                load * x * (l * l * l - 2.0 * l * x * x + x * x * x) / (24.0 * ei)
            }
        };
        let shear = match self.kind {
            ClassicalKind::EulerBernoulli => 0.0,
            ClassicalKind::Timoshenko => match self.preset {
                ClassicalPreset::CantileverTipLoad { force } => force * x / ga,
                ClassicalPreset::CantileverUniform { load } => {
                    load * (l * x - 0.5 * x * x) / ga
                }
                ClassicalPreset::SimplySupportedUniform { load } => {
                    load * x * (l - x) / (2.0 * ga)
                }
            },
        };
        bend + shear
    }

    pub fn tip(&self) -> f64 {
        self.deflection(self.params.length)
    }
}

/// Gap columns of a penalty sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepGaps {
    /// Displacement gap to the limit solution (infinity norm).
    pub u_gap: f64,
    /// Micro-distortion gap (e-sweep) or slope cross gap (d-sweep).
    pub p_gap: f64,
    /// Internal staggered constraint gap of the relaxed solution.
    pub constraint_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub modulus: Vec<f64>,
    pub gaps: Vec<SweepGaps>,
    /// Infinity norms of the limit solution, for relative readings.
    pub u_scale: f64,
    pub p_scale: f64,
    /// Fitted log-log decay exponents per gap column (NaN if degenerate).
    pub exponents: SweepGaps,
}

impl SweepResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "modulus,u_gap,p_gap,constraint_gap")?;
        for (m, g) in self.modulus.iter().zip(&self.gaps) {
            writeln!(
                file,
                "{:.12e},{:.12e},{:.12e},{:.12e}",
                m, g.u_gap, g.p_gap, g.constraint_gap
            )?;
        }
        writeln!(
            file,
            "# fitted_exponent,{:.6},{:.6},{:.6}",
            self.exponents.u_gap, self.exponents.p_gap, self.exponents.constraint_gap
        )?;
        Ok(())
    }
}

fn fit_exponent(modulus: &[f64], gaps: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = modulus
        .iter()
        .zip(gaps)
        .filter(|(m, g)| **m > 0.0 && **g > 0.0)
        .map(|(m, g)| (m.ln(), g.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn field_gap(a: &FieldState, b: &FieldState, fields: &[FieldId]) -> f64 {
    let mut gap = 0.0f64;
    for f in fields {
        let (fa, fb) = (a.field(*f), b.field(*f));
        for (x, y) in fa.iter().zip(fb) {
            gap = gap.max((x - y).abs());
        }
    }
    gap
}

fn field_scale(a: &FieldState, fields: &[FieldId]) -> f64 {
    fields
        .iter()
        .flat_map(|f| a.field(*f).iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Staggered constraint gap `max |D_mid lhs - avg_mid rhs|` over field pairs.
fn staggered_gap(state: &FieldState, pairs: &[(FieldId, FieldId)]) -> f64 {
    let h = state.grid.h();
    let mut gap = 0.0f64;
    for (df, vf) in pairs {
        let d = state.field(*df);
        let v = state.field(*vf);
        for j in 0..state.grid.n - 1 {
            let slope = (d[j + 1] - d[j]) / h;
            let avg = 0.5 * (v[j] + v[j + 1]);
            gap = gap.max((slope - avg).abs());
        }
    }
    gap
}

fn u_fields() -> Vec<FieldId> {
    (1..=3).map(FieldId::u).collect()
}

fn p_fields() -> Vec<FieldId> {
    let mut v = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            v.push(FieldId::p(i, j));
        }
    }
    v
}

fn run_sweep<F>(values: &[f64], parallel: bool, solve_one: F) -> Result<Vec<FieldState>>
where
    F: Fn(f64) -> Result<FieldState> + Sync + Send,
{
    let items: Vec<f64> = values.to_vec();
    let results = if parallel {
        par_map(items, |v| solve_one(v))
    } else {
        seq_map(items, |v| solve_one(v))
    };
    results.into_iter().collect()
}

fn check_increasing(values: &[f64]) -> Result<()> {
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::LoadMismatch(
            "sweep moduli must be strictly increasing and non-empty".into(),
        ));
    }
    Ok(())
}

/// Drive the penalty modulus `e` across `e_values`: the relaxed solutions
/// approach the constrained solution with identical, constraint-consistent
/// anchors, and the internal gap between the micro-curvature and the
/// micro-distortion slope decays like the reciprocal modulus.
///
/// The boundary spec is the relaxed one; it must fully anchor the transversal
/// micro-curvature slices at one end (those values freeze the constants of
/// the constrained comparison problem), and anchors on the longitudinal
/// slices translate into slope anchors of the comparison problem.
pub fn e_limit_sweep(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    e_values: &[f64],
    n: usize,
) -> Result<SweepResult> {
    e_limit_sweep_impl(config, loads, bcs, e_values, n, true)
}

/// Sequential twin of [`e_limit_sweep`], for benchmarking.
pub fn e_limit_sweep_sequential(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    e_values: &[f64],
    n: usize,
) -> Result<SweepResult> {
    e_limit_sweep_impl(config, loads, bcs, e_values, n, false)
}

fn e_limit_sweep_impl(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    e_values: &[f64],
    n: usize,
    parallel: bool,
) -> Result<SweepResult> {
    if config.regime != Regime::NonHolonomic {
        return Err(Error::InvalidConfig(vec![
            "the e-sweep starts from a non-holonomic configuration".into(),
        ]));
    }
    check_increasing(e_values)?;

    // Frozen transversal constants from the anchored relaxed values.
    let mut frozen = [[[0.0f64; 2]; 3]; 3];
    let mut any = false;
    for i in 1..=3 {
        for j in 1..=3 {
            for alpha in 2..=3 {
                let f = FieldId::n(i, j, alpha);
                let left = bcs.anchored(End::Left, f, 0);
                let right = bcs.anchored(End::Right, f, 0);
                let value = match (left, right) {
                    (Some(l), Some(r)) if (l - r).abs() > 1e-12 * (1.0 + l.abs()) => {
                        return Err(Error::InvalidConfig(vec![format!(
                            "transversal anchor on {} differs between the ends; the constrained comparison needs one constant",
                            f.label()
                        )]));
                    }
                    (Some(l), _) => Some(l),
                    (None, Some(r)) => Some(r),
                    (None, None) => None,
                };
                match value {
                    Some(v) => {
                        frozen[i - 1][j - 1][alpha - 2] = v;
                        any = true;
                    }
                    None => {
                        // Unanchored transversal slices must be silent: they
                        // are then slaved to zero on the relaxed side and
                        // frozen to zero on the constrained side.
                        if !loads.is_silent_on(f) {
                            return Err(Error::InvalidConfig(vec![format!(
                                "the e-sweep needs {} anchored at one end or fully unloaded",
                                f.label()
                            )]));
                        }
                    }
                }
                if !loads.bulk(f).is_zero() {
                    return Err(Error::LoadMismatch(format!(
                        "bulk load on {} has no constrained counterpart",
                        f.label()
                    )));
                }
            }
        }
    }
    let _ = any;

    let mut semi_config = BeamConfig {
        e: 0.0,
        regime: Regime::SemiHolonomic,
        frozen_n_jalpha: Some(frozen),
        frozen_u_alpha_slope: None,
        ..config.clone()
    };
    semi_config.e = 0.0;

    let mut semi_bcs = BoundarySpec::free();
    for (end, f, deriv, value) in bcs.iter() {
        let (kind, i, j, k) = f.indices();
        match kind {
            crate::model::FieldKind::U | crate::model::FieldKind::P => {
                semi_bcs.anchor(end, f, deriv, value);
            }
            crate::model::FieldKind::N => {
                if k == 1 {
                    semi_bcs.anchor(end, FieldId::p(i, j), 1, value);
                }
                // Transversal slices became the frozen constants.
            }
        }
    }

    let semi_bvp = assemble_full(&semi_config, loads, &semi_bcs)?;
    let semi = solve_bvp(&semi_bvp, n)?;

    let solve_one = |e: f64| -> Result<FieldState> {
        let cfg = BeamConfig {
            e,
            ..config.clone()
        };
        let bvp = assemble_full(&cfg, loads, bcs)?;
        solve_bvp(&bvp, n)
    };
    let states = run_sweep(e_values, parallel, solve_one)?;

    let constraint_pairs: Vec<(FieldId, FieldId)> = p_fields()
        .iter()
        .map(|p| {
            let (_, i, j, _) = p.indices();
            (*p, FieldId::n(i, j, 1))
        })
        .collect();
    let gaps: Vec<SweepGaps> = states
        .iter()
        .map(|nh| SweepGaps {
            u_gap: field_gap(nh, &semi, &u_fields()),
            p_gap: field_gap(nh, &semi, &p_fields()),
            constraint_gap: staggered_gap(nh, &constraint_pairs),
        })
        .collect();

    Ok(SweepResult {
        exponents: SweepGaps {
            u_gap: fit_exponent(e_values, &gaps.iter().map(|g| g.u_gap).collect::<Vec<_>>()),
            p_gap: fit_exponent(e_values, &gaps.iter().map(|g| g.p_gap).collect::<Vec<_>>()),
            constraint_gap: fit_exponent(
                e_values,
                &gaps.iter().map(|g| g.constraint_gap).collect::<Vec<_>>(),
            ),
        },
        modulus: e_values.to_vec(),
        gaps,
        u_scale: field_scale(&semi, &u_fields()),
        p_scale: field_scale(&semi, &p_fields()),
    })
}

/// Drive the penalty modulus `d` across `d_values`: the semi-holonomic
/// solutions approach the holonomic solution, and the internal gap between
/// the displacement slope and the micro-distortion decays like the
/// reciprocal modulus.
///
/// The boundary spec is the semi-holonomic one. Transversal micro-distortion
/// slices must be unloaded (their holonomic counterparts are frozen
/// constants); anchors on `P^i_1` and its slope translate into first- and
/// second-derivative displacement anchors.
pub fn d_limit_sweep(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    d_values: &[f64],
    n: usize,
) -> Result<SweepResult> {
    d_limit_sweep_impl(config, loads, bcs, d_values, n, true)
}

/// Sequential twin of [`d_limit_sweep`], for benchmarking.
pub fn d_limit_sweep_sequential(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    d_values: &[f64],
    n: usize,
) -> Result<SweepResult> {
    d_limit_sweep_impl(config, loads, bcs, d_values, n, false)
}

fn d_limit_sweep_impl(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    d_values: &[f64],
    n: usize,
    parallel: bool,
) -> Result<SweepResult> {
    if config.regime != Regime::SemiHolonomic {
        return Err(Error::InvalidConfig(vec![
            "the d-sweep starts from a semi-holonomic configuration".into(),
        ]));
    }
    check_increasing(d_values)?;

    for i in 1..=3 {
        for alpha in 2..=3 {
            let p = FieldId::p(i, alpha);
            if !loads.is_silent_on(p) || !loads.is_silent_on(FieldId::n(i, alpha, 1)) {
                return Err(Error::LoadMismatch(format!(
                    "load on {} has no holonomic counterpart (its limit is a frozen constant)",
                    p.label()
                )));
            }
        }
        let p1 = FieldId::p(i, 1);
        if !loads.bulk(p1).is_zero() || !loads.bulk(FieldId::n(i, 1, 1)).is_zero() {
            return Err(Error::LoadMismatch(format!(
                "bulk load on {} is absorbed into renamed holonomic forces; endpoint tractions carry over instead",
                p1.label()
            )));
        }
    }

    let holo_config = BeamConfig {
        d: 0.0,
        e: 0.0,
        regime: Regime::Holonomic,
        frozen_n_jalpha: None,
        frozen_u_alpha_slope: Some([[0.0; 2]; 3]),
        ..config.clone()
    };

    let mut anchored_p1 = false;
    let mut holo_bcs = BoundarySpec::free();
    for (end, f, deriv, value) in bcs.iter() {
        let (kind, i, j, _) = f.indices();
        match kind {
            crate::model::FieldKind::U => {
                holo_bcs.anchor(end, f, deriv, value);
            }
            crate::model::FieldKind::P if j == 1 => {
                anchored_p1 = true;
                holo_bcs.anchor(end, FieldId::u(i), deriv + 1, value);
            }
            _ => {}
        }
    }
    if !anchored_p1 {
        return Err(Error::InvalidConfig(vec![
            "the d-sweep needs the longitudinal micro-distortion anchored at one end".into(),
        ]));
    }

    let holo_bvp = assemble_full(&holo_config, loads, &holo_bcs)?;
    let mut holo = solve_bvp(&holo_bvp, n)?;
    complete_derived_fields(&mut holo, &holo_config);

    let solve_one = |d: f64| -> Result<FieldState> {
        let cfg = BeamConfig {
            d,
            ..config.clone()
        };
        let bvp = assemble_full(&cfg, loads, bcs)?;
        solve_bvp(&bvp, n)
    };
    let states = run_sweep(d_values, parallel, solve_one)?;

    let p1: Vec<FieldId> = (1..=3).map(|i| FieldId::p(i, 1)).collect();
    let constraint_pairs: Vec<(FieldId, FieldId)> = (1..=3)
        .map(|i| (FieldId::u(i), FieldId::p(i, 1)))
        .collect();
    let gaps: Vec<SweepGaps> = states
        .iter()
        .map(|semi| SweepGaps {
            u_gap: field_gap(semi, &holo, &u_fields()),
            p_gap: field_gap(semi, &holo, &p1),
            constraint_gap: staggered_gap(semi, &constraint_pairs),
        })
        .collect();

    Ok(SweepResult {
        exponents: SweepGaps {
            u_gap: fit_exponent(d_values, &gaps.iter().map(|g| g.u_gap).collect::<Vec<_>>()),
            p_gap: fit_exponent(d_values, &gaps.iter().map(|g| g.p_gap).collect::<Vec<_>>()),
            constraint_gap: fit_exponent(
                d_values,
                &gaps.iter().map(|g| g.constraint_gap).collect::<Vec<_>>(),
            ),
        },
        modulus: d_values.to_vec(),
        gaps,
        u_scale: field_scale(&holo, &u_fields()),
        p_scale: field_scale(&holo, &p1),
    })
}

/// A constraint-consistent sweep scenario: every relaxed field anchored to
/// zero at the left end, smooth bulk forces plus an endpoint traction.
/// Returned as the non-holonomic starting point of the e-sweep.
///
/// The transversal moment is zero here: with it, the relaxed model keeps the
/// transversal micro-curvature slices as live fields driven by the curl
/// coupling, while the constrained reduction freezes them, so the field gaps
/// would floor at the modelling difference instead of vanishing.
pub fn e_sweep_template(length: f64) -> (BeamConfig, LoadSet, BoundarySpec) {
    let config = BeamConfig::non_holonomic(1.0, 1.0, 0.0, 2.0, 1.0, length, 0.0);
    let mut loads = LoadSet::zero();
    *loads.bulk_mut(FieldId::u(1)) = LoadFn::polynomial(&[0.5, 1.0]);
    *loads.bulk_mut(FieldId::u(2)) = LoadFn::Constant(1.0);
    *loads.bulk_mut(FieldId::p(2, 1)) = LoadFn::polynomial(&[0.0, -0.4]);
    *loads.bulk_mut(FieldId::n(1, 1, 1)) = LoadFn::Constant(0.3);
    *loads.traction_mut(End::Right, FieldId::u(2)) = 0.5;
    *loads.traction_mut(End::Right, FieldId::p(1, 1)) = 0.2;
    let mut bcs = BoundarySpec::free();
    for i in 1..=3 {
        bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
        for j in 1..=3 {
            bcs.anchor(End::Left, FieldId::p(i, j), 0, 0.0);
        }
    }
    (config, loads, bcs)
}

/// Semi-holonomic starting point of the d-sweep, anchored and loaded so that
/// the data stays meaningful in the holonomic limit.
///
/// The symmetric micro-strain modulus is zero: the constrained energy carries
/// the shear slots of that term with half the weight the relaxed one does, so
/// with it the transverse components would converge to a different model.
pub fn d_sweep_template(length: f64) -> (BeamConfig, LoadSet, BoundarySpec) {
    let config = BeamConfig::semi_holonomic(1.0, 1.0, 0.0, 1.0, length, 0.0);
    let mut loads = LoadSet::zero();
    *loads.bulk_mut(FieldId::u(1)) = LoadFn::polynomial(&[1.0, -0.5]);
    let mut bcs = BoundarySpec::free();
    for end in End::both() {
        for i in 1..=3 {
            bcs.anchor(end, FieldId::u(i), 0, 0.0);
            for j in 1..=3 {
                bcs.anchor(end, FieldId::p(i, j), 0, 0.0);
            }
        }
    }
    (config, loads, bcs)
}

use crate::model::LoadFn;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_traction_subsystem;

    #[test]
    fn oracle_returns_zero_for_homogeneous_data() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 0.5, 2.0, 1.0, 1.0, 0.1);
        let mut bcs = BoundarySpec::free();
        for f in [FieldId::u(1), FieldId::p(1, 1), FieldId::n(1, 1, 1)] {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let bvp = assemble_traction_subsystem(&config, &LoadSet::zero(), &bcs).unwrap();
        let state = oracle_minimize_on(&bvp, 21).unwrap();
        assert!(state.max_abs() < 1e-12);
    }

    #[test]
    fn oracle_recovers_the_affine_traction_solution() {
        let config = BeamConfig::holonomic(2.0, 0.0, 0.0, 1.0, 0.0);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
        }
        let mut loads = LoadSet::zero();
        *loads.traction_mut(End::Right, FieldId::u(1)) = 4.0;
        let bvp = assemble_full(&config, &loads, &bcs).unwrap();
        let state = oracle_minimize_on(&bvp, 17).unwrap();
        for i in 0..17 {
            let x = state.grid.x(i);
            assert!((state.get(FieldId::u(1), i) - 2.0 * x).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_matches_the_banded_solver_on_random_loads() {
        let config = BeamConfig::non_holonomic(1.0, 0.8, 0.4, 2.0, 1.3, 1.0, 0.1);
        let mut bcs = BoundarySpec::free();
        for f in [FieldId::u(1), FieldId::p(1, 1), FieldId::n(1, 1, 1)] {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let mut loads = LoadSet::zero();
        *loads.bulk_mut(FieldId::u(1)) = LoadFn::polynomial(&[0.7, -1.2, 0.5]);
        *loads.bulk_mut(FieldId::p(1, 1)) = LoadFn::polynomial(&[-0.3, 0.9]);
        *loads.bulk_mut(FieldId::n(1, 1, 1)) = LoadFn::Constant(0.6);
        *loads.traction_mut(End::Right, FieldId::u(1)) = 1.1;
        let bvp = assemble_traction_subsystem(&config, &loads, &bcs).unwrap();
        let fine = solve_bvp(&bvp, 101).unwrap();
        let oracle = oracle_minimize_on(&bvp, 101).unwrap();
        let scale = fine.max_abs().max(1e-30);
        for f in [FieldId::u(1), FieldId::p(1, 1), FieldId::n(1, 1, 1)] {
            for i in 0..101 {
                assert!(
                    (fine.get(f, i) - oracle.get(f, i)).abs() <= 1e-8 * scale,
                    "{} node {i}",
                    f.label()
                );
            }
        }
    }

    #[test]
    fn classical_formulas_hit_the_textbook_values() {
        let params = ClassicalParams {
            bending_stiffness: 1.0,
            shear_stiffness: 2.0,
            length: 1.0,
        };
        let eb = classical_reference(
            ClassicalKind::EulerBernoulli,
            ClassicalPreset::CantileverTipLoad { force: 1.0 },
            params,
        );
        assert!((eb.tip() - 1.0 / 3.0).abs() < 1e-14);
        let timo = classical_reference(
            ClassicalKind::Timoshenko,
            ClassicalPreset::CantileverTipLoad { force: 1.0 },
            params,
        );
        assert!((timo.tip() - (1.0 / 3.0 + 0.5)).abs() < 1e-14);
        let zero = classical_reference(
            ClassicalKind::Timoshenko,
            ClassicalPreset::CantileverTipLoad { force: 0.0 },
            params,
        );
        assert_eq!(zero.tip(), 0.0);
        let eb_uniform = classical_reference(
            ClassicalKind::EulerBernoulli,
            ClassicalPreset::CantileverUniform { load: 1.0 },
            params,
        );
        assert!((eb_uniform.tip() - 1.0 / 8.0).abs() < 1e-14);
        let ss = classical_reference(
            ClassicalKind::EulerBernoulli,
            ClassicalPreset::SimplySupportedUniform { load: 1.0 },
            params,
        );
        assert!((ss.deflection(0.5) - 5.0 / 384.0).abs() < 1e-14);
    }

    #[test]
    fn zero_loads_give_zero_sweep_gaps() {
        let (config, _, bcs) = e_sweep_template(1.0);
        let result = e_limit_sweep(&config, &LoadSet::zero(), &bcs, &[1e2, 1e3], 41).unwrap();
        for g in &result.gaps {
            assert!(g.u_gap < 1e-13 && g.p_gap < 1e-13 && g.constraint_gap < 1e-13);
        }
    }

    #[test]
    fn e_sweep_gaps_shrink_across_decades() {
        let (config, loads, bcs) = e_sweep_template(1.0);
        let result = e_limit_sweep(&config, &loads, &bcs, &[1e2, 1e3, 1e4], 81).unwrap();
        for w in result.gaps.windows(2) {
            assert!(w[1].constraint_gap < w[0].constraint_gap);
            assert!(w[1].u_gap <= w[0].u_gap * 1.05);
        }
        // The internal gap scales like 1/e.
        assert!(
            (result.exponents.constraint_gap + 1.0).abs() < 0.15,
            "exponent {}",
            result.exponents.constraint_gap
        );
    }

    #[test]
    fn d_sweep_approaches_the_holonomic_solution() {
        let (config, loads, bcs) = d_sweep_template(1.0);
        let result = d_limit_sweep(&config, &loads, &bcs, &[1e2, 1e3, 1e4, 1e5], 201).unwrap();
        for w in result.gaps.windows(2) {
            assert!(w[1].constraint_gap < w[0].constraint_gap);
        }
        let last = result.gaps.last().unwrap();
        assert!(last.u_gap < 1e-3 * result.u_scale.max(1e-30));
    }

    #[test]
    fn sweep_csv_has_the_trailing_exponent_comment() {
        let (config, loads, bcs) = e_sweep_template(1.0);
        let result = e_limit_sweep(&config, &loads, &bcs, &[1e2, 1e3], 41).unwrap();
        let path = std::env::temp_dir().join("microbeam_sweep_csv_test.csv");
        result.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "modulus,u_gap,p_gap,constraint_gap");
        assert!(lines.last().unwrap().starts_with("# fitted_exponent,"));
        std::fs::remove_file(&path).ok();
    }
}
