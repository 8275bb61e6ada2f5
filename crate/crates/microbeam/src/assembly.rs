//! Strong-form Euler-Lagrange operator tables and natural boundary rows.
//!
//! The bulk rows and endpoint flux rows are obtained from the internal-energy
//! term list by symbolic integration by parts of the half-variation, which is
//! the convention under which the renamed forces equal the user-supplied
//! loads. The discrete solver does not consume these tables directly (it
//! assembles the energy gradient), so the strong/weak agreement is a genuine
//! cross-check, exercised by [`strong_weak_pairing`].

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::fd;
use crate::model::{
    validate_config, BeamConfig, BoundarySpec, End, FieldId, FieldState, Grid, LoadSet, Regime,
};

/// One `value * D^order[unknown]` entry of an operator row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub unknown: FieldId,
    pub order: usize,
    pub value: f64,
}

/// Strong-form equilibrium equation for one unknown: the row applied to the
/// state equals the paired load slice (plus the derivative of the
/// slope-paired micro-force slice where the regime reinterprets it).
#[derive(Debug, Clone)]
pub struct BulkEquation {
    pub unknown: FieldId,
    pub coeffs: Vec<Coefficient>,
    /// `(load slot, derivative applied to the load)` summed into the rhs.
    pub rhs_pairings: Vec<(FieldId, usize)>,
}

#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    Anchored {
        value: f64,
    },
    /// `normal * (flux(state) - correction) = traction`, where the correction
    /// is the endpoint value of a slope-paired bulk load slice, if any.
    Natural {
        flux: Vec<Coefficient>,
        traction: f64,
        correction_slot: Option<FieldId>,
    },
}

#[derive(Debug, Clone)]
pub struct BoundaryRow {
    pub field: FieldId,
    pub deriv: usize,
    pub condition: BoundaryCondition,
}

/// Constant-coefficient linear two-point boundary-value problem.
#[derive(Debug, Clone)]
pub struct LinearBvp {
    pub regime: Regime,
    pub unknowns: Vec<FieldId>,
    /// Maximum differential order over the unknowns (2, 4 or 6 nominally;
    /// vanishing moduli lower it).
    pub order: usize,
    pub bulk: Vec<BulkEquation>,
    pub boundary: [Vec<BoundaryRow>; 2],
    pub notes: Vec<String>,
    model: EnergyModel,
    config: BeamConfig,
    loads: LoadSet,
    bcs: BoundarySpec,
}

impl LinearBvp {
    pub(crate) fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn config(&self) -> &BeamConfig {
        &self.config
    }

    pub fn loads(&self) -> &LoadSet {
        &self.loads
    }

    pub fn bcs(&self) -> &BoundarySpec {
        &self.bcs
    }

    pub fn bulk_equation(&self, unknown: FieldId) -> Option<&BulkEquation> {
        self.bulk.iter().find(|eq| eq.unknown == unknown)
    }

    /// Sampled right-hand side of one bulk equation.
    pub fn bulk_rhs(&self, eq: usize, grid: Grid) -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; grid.n];
        for (slot, deriv) in &self.bulk[eq].rhs_pairings {
            let samples = match deriv {
                0 => self.loads.bulk(*slot).sample(grid)?,
                1 => self.loads.bulk(*slot).sample_derivative(grid)?,
                _ => unreachable!(),
            };
            for (r, s) in rhs.iter_mut().zip(samples) {
                *r += s;
            }
        }
        Ok(rhs)
    }

    /// Dump the bulk coefficient tables, one CSV file per equation.
    pub fn dump_coeff_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for eq in &self.bulk {
            let name = format!("eq_{}.csv", sanitize(&eq.unknown.label()));
            let path = dir.join(name);
            let mut file = std::fs::File::create(&path)?;
            writeln!(file, "unknown,order,value")?;
            for c in &eq.coeffs {
                writeln!(file, "{},{},{}", c.unknown.label(), c.order, fmt(c.value))?;
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn sanitize(label: &str) -> String {
    label.replace('^', "")
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Boundary DOF list over the model's fields: derivative `k` of a field is a
/// boundary DOF when the energy carries the field at order `k + 1` or
/// higher (half the field's differential order, as the flux count demands).
fn boundary_dofs(model: &EnergyModel) -> Vec<(FieldId, usize)> {
    let mut dofs = Vec::new();
    for f in &model.fields {
        for d in 0..model.field_order(*f) {
            dofs.push((*f, d));
        }
    }
    dofs
}

fn build_tables(
    model: &EnergyModel,
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    notes: Vec<String>,
) -> Result<LinearBvp> {
    let unknowns = model.fields.clone();
    let order = 2 * model.max_order().max(1);

    let mut bulk = Vec::with_capacity(unknowns.len());
    for x in &unknowns {
        let mut acc: BTreeMap<(FieldId, usize), f64> = BTreeMap::new();
        for term in &model.terms {
            for &(ck, _fk, ok) in term.parts.iter().filter(|p| p.1 == *x) {
                let sign = if ok % 2 == 0 { 1.0 } else { -1.0 };
                for &(cm, fm, om) in &term.parts {
                    *acc.entry((fm, ok + om)).or_insert(0.0) += sign * ck * cm * term.weight;
                }
            }
        }
        let coeffs: Vec<Coefficient> = acc
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((unknown, order), value)| Coefficient {
                unknown,
                order,
                value,
            })
            .collect();
        let rhs_pairings: Vec<(FieldId, usize)> = model
            .bulk_pairings
            .iter()
            .filter(|p| p.field == *x)
            .map(|p| (p.slot, p.deriv))
            .collect();
        bulk.push(BulkEquation {
            unknown: *x,
            coeffs,
            rhs_pairings,
        });
    }

    // Tractions paired with DOFs that vanished with their moduli cannot be
    // carried by any boundary row.
    for p in &model.endpoint_pairings {
        for end in End::both() {
            if loads.traction(end, p.slot) != 0.0 && p.deriv >= model.field_order(p.field) {
                return Err(Error::LoadMismatch(format!(
                    "traction on {} (derivative {}) pairs a DOF whose stiffness vanished",
                    p.field.label(),
                    p.deriv
                )));
            }
        }
    }

    let dofs = boundary_dofs(model);
    let mut boundary = [Vec::new(), Vec::new()];
    for end in End::both() {
        for &(f, deriv) in &dofs {
            let condition = if let Some(value) = bcs.anchored(end, f, deriv) {
                BoundaryCondition::Anchored { value }
            } else {
                let mut acc: BTreeMap<(FieldId, usize), f64> = BTreeMap::new();
                for term in &model.terms {
                    for &(ck, fk, ok) in term.parts.iter().filter(|p| p.1 == f && p.2 > deriv) {
                        let _ = fk;
                        let drop = ok - 1 - deriv;
                        let sign = if drop % 2 == 0 { 1.0 } else { -1.0 };
                        for &(cm, fm, om) in &term.parts {
                            *acc.entry((fm, drop + om)).or_insert(0.0) +=
                                sign * ck * cm * term.weight;
                        }
                    }
                }
                let flux: Vec<Coefficient> = acc
                    .into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|((unknown, order), value)| Coefficient {
                        unknown,
                        order,
                        value,
                    })
                    .collect();
                let traction = model
                    .endpoint_pairings
                    .iter()
                    .find(|p| p.field == f && p.deriv == deriv)
                    .map(|p| loads.traction(end, p.slot))
                    .unwrap_or(0.0);
                let correction_slot = model
                    .bulk_pairings
                    .iter()
                    .find(|p| p.field == f && p.deriv == deriv + 1)
                    .map(|p| p.slot);
                BoundaryCondition::Natural {
                    flux,
                    traction,
                    correction_slot,
                }
            };
            boundary[end.index()].push(BoundaryRow {
                field: f,
                deriv,
                condition,
            });
        }
    }

    Ok(LinearBvp {
        regime: model.regime,
        unknowns,
        order,
        bulk,
        boundary,
        notes,
        model: model.clone(),
        config: config.clone(),
        loads: loads.clone(),
        bcs: bcs.clone(),
    })
}

fn validated_notes(config: &BeamConfig, bcs: &BoundarySpec) -> Result<Vec<String>> {
    let report = validate_config(config, bcs);
    if !report.is_ok() {
        return Err(Error::InvalidConfig(report.violations));
    }
    Ok(report.notes)
}

fn validated_notes_core(config: &BeamConfig, bcs: &BoundarySpec) -> Result<Vec<String>> {
    let report = crate::model::validate_config_core(config, bcs);
    if !report.is_ok() {
        return Err(Error::InvalidConfig(report.violations));
    }
    Ok(report.notes)
}

/// Assemble the complete coupled system of the configured regime.
pub fn assemble_full(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
) -> Result<LinearBvp> {
    let notes = validated_notes(config, bcs)?;
    let model = EnergyModel::full(config);
    build_tables(&model, config, loads, bcs, notes)
}

/// Fields of the pure-traction component per regime.
pub fn traction_fields(regime: Regime) -> Vec<FieldId> {
    match regime {
        Regime::NonHolonomic => vec![FieldId::u(1), FieldId::p(1, 1), FieldId::n(1, 1, 1)],
        Regime::SemiHolonomic => vec![FieldId::u(1), FieldId::p(1, 1)],
        Regime::Holonomic => vec![FieldId::u(1)],
    }
}

/// Fields of the planar-bending component per regime (`plane` is 2 or 3).
pub fn bending_fields(regime: Regime, plane: usize) -> Vec<FieldId> {
    assert!(plane == 2 || plane == 3, "bending plane must be 2 or 3");
    let b = plane;
    match regime {
        Regime::NonHolonomic => vec![
            FieldId::u(b),
            FieldId::p(b, 1),
            FieldId::p(1, b),
            FieldId::n(b, 1, 1),
            FieldId::n(1, b, 1),
            FieldId::n(1, 1, b),
        ],
        Regime::SemiHolonomic => vec![FieldId::u(b), FieldId::p(b, 1), FieldId::p(1, b)],
        Regime::Holonomic => vec![FieldId::u(b)],
    }
}

fn assemble_subsystem(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    keep: Vec<FieldId>,
    what: &str,
) -> Result<LinearBvp> {
    let notes = validated_notes_core(config, bcs)?;
    let full = EnergyModel::full(config);
    for p in full.bulk_pairings.iter().chain(&full.endpoint_pairings) {
        if !keep.contains(&p.field) && !loads.is_silent_on(p.slot) {
            return Err(Error::LoadMismatch(format!(
                "load slice {} excites {} outside the {what} component",
                p.slot.label(),
                p.field.label()
            )));
        }
    }
    let model = EnergyModel::subsystem(config, &keep);
    crate::solver::rank_check_model(&model, config, bcs)?;
    build_tables(&model, config, loads, bcs, notes)
}

/// The reduced pure-traction system (3, 2 or 1 unknowns by regime).
pub fn assemble_traction_subsystem(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
) -> Result<LinearBvp> {
    assemble_subsystem(config, loads, bcs, traction_fields(config.regime), "traction")
}

/// The reduced planar-bending system (6, 3 or 1 unknowns by regime).
pub fn assemble_bending_subsystem(
    config: &BeamConfig,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    plane: usize,
) -> Result<LinearBvp> {
    assemble_subsystem(
        config,
        loads,
        bcs,
        bending_fields(config.regime, plane),
        "bending",
    )
}

/// Discrete pairing of the strong-form tables with a test direction:
/// trapezoid of (bulk row applied to `state` minus rhs) against the test,
/// plus the natural endpoint rows (one-sided second-order flux stencils)
/// against the test DOF combinations.
///
/// Agrees with the weak-form residual to O(h^2) on smooth fields; anchored
/// rows pair with vanishing test DOFs and are skipped.
pub fn strong_weak_pairing(bvp: &LinearBvp, state: &FieldState, test: &FieldState) -> Result<f64> {
    let grid = state.grid;
    let n = grid.n;
    let h = grid.h();
    let tw = fd::trapezoid_weights(n, h);

    let mut cache: BTreeMap<(FieldId, usize), Vec<f64>> = BTreeMap::new();
    let mut deriv = |f: FieldId, o: usize| -> Vec<f64> {
        cache
            .entry((f, o))
            .or_insert_with(|| {
                if o == 0 {
                    state.field(f).to_vec()
                } else {
                    fd::derivative(state.field(f), h, o)
                }
            })
            .clone()
    };

    let mut total = 0.0;
    for (eq_idx, eq) in bvp.bulk.iter().enumerate() {
        let rhs = bvp.bulk_rhs(eq_idx, grid)?;
        let arrays: Vec<(f64, Vec<f64>)> = eq
            .coeffs
            .iter()
            .map(|c| (c.value, deriv(c.unknown, c.order)))
            .collect();
        let t = test.field(eq.unknown);
        for i in 0..n {
            let row: f64 = arrays.iter().map(|(v, arr)| v * arr[i]).sum();
            total += tw[i] * (row - rhs[i]) * t[i];
        }
    }
    for end in End::both() {
        let node = if end == End::Left { 0 } else { n - 1 };
        for row in &bvp.boundary[end.index()] {
            match &row.condition {
                BoundaryCondition::Anchored { .. } => {}
                BoundaryCondition::Natural {
                    flux,
                    traction,
                    correction_slot,
                } => {
                    if flux.is_empty() && *traction == 0.0 {
                        continue;
                    }
                    let mut flux_value = 0.0;
                    for c in flux {
                        let arr = deriv(c.unknown, c.order);
                        flux_value += c.value * arr[node];
                    }
                    let correction = match correction_slot {
                        Some(slot) => bvp.loads.bulk(*slot).eval_endpoint(grid, end)?,
                        None => 0.0,
                    };
                    let (start, weights) = crate::energy::endpoint_combo(grid, end, row.deriv);
                    let t_combo = fd::apply(test.field(row.field), start, &weights);
                    total += (end.normal() * (flux_value - correction) - traction) * t_combo;
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundarySpec, End, LoadFn};

    fn anchored_traction_bcs() -> BoundarySpec {
        let mut bcs = BoundarySpec::free();
        for f in [FieldId::u(1), FieldId::p(1, 1), FieldId::n(1, 1, 1)] {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        bcs
    }

    fn coeff(eq: &BulkEquation, f: FieldId, order: usize) -> f64 {
        eq.coeffs
            .iter()
            .find(|c| c.unknown == f && c.order == order)
            .map(|c| c.value)
            .unwrap_or(0.0)
    }

    /// Apply a bulk row to constant field values.
    fn apply_to_constants(eq: &BulkEquation, values: &dyn Fn(FieldId) -> f64) -> f64 {
        eq.coeffs
            .iter()
            .filter(|c| c.order == 0)
            .map(|c| c.value * values(c.unknown))
            .sum()
    }

    #[test]
    fn traction_rows_on_constant_state_match_hand_substitution() {
        // u^1 = 0, P^1_1 = 1, N^1_11 = 1 with unit moduli: rows evaluate to
        // (0, a + d, b + e) = (0, 2, 2).
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let bvp =
            assemble_traction_subsystem(&config, &LoadSet::zero(), &anchored_traction_bcs())
                .unwrap();
        let values = |f: FieldId| -> f64 {
            if f == FieldId::u(1) {
                0.0
            } else {
                1.0
            }
        };
        let row_u = apply_to_constants(bvp.bulk_equation(FieldId::u(1)).unwrap(), &values);
        let row_p = apply_to_constants(bvp.bulk_equation(FieldId::p(1, 1)).unwrap(), &values);
        let row_n = apply_to_constants(bvp.bulk_equation(FieldId::n(1, 1, 1)).unwrap(), &values);
        assert_eq!(row_u, 0.0);
        assert!((row_p - 2.0).abs() < 1e-14);
        assert!((row_n - 2.0).abs() < 1e-14);
    }

    #[test]
    fn holonomic_without_higher_moduli_reduces_to_second_order() {
        let config = BeamConfig::holonomic(2.0, 0.0, 0.0, 1.0, 0.0);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
        }
        let bvp = assemble_traction_subsystem(&config, &LoadSet::zero(), &bcs).unwrap();
        assert_eq!(bvp.order, 2);
        let eq = bvp.bulk_equation(FieldId::u(1)).unwrap();
        assert!((coeff(eq, FieldId::u(1), 2) - (-2.0)).abs() < 1e-14);
        assert_eq!(coeff(eq, FieldId::u(1), 4), 0.0);
        assert_eq!(coeff(eq, FieldId::u(1), 6), 0.0);
        // Natural flux on the displacement DOF is a u'.
        let row = &bvp.boundary[1][0];
        match &row.condition {
            BoundaryCondition::Natural { flux, .. } => {
                assert_eq!(flux.len(), 1);
                assert!((flux[0].value - 2.0).abs() < 1e-14);
                assert_eq!(flux[0].order, 1);
            }
            _ => panic!("expected a natural condition"),
        }
    }

    #[test]
    fn holonomic_sixth_order_table() {
        let config = BeamConfig::holonomic(2.0, 3.0, 5.0, 1.0, 0.0);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
            bcs.anchor(End::Left, FieldId::u(i), 1, 0.0);
        }
        let bvp = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        assert_eq!(bvp.order, 6);
        let eq = bvp.bulk_equation(FieldId::u(2)).unwrap();
        assert!((coeff(eq, FieldId::u(2), 2) + 2.0).abs() < 1e-14);
        assert!((coeff(eq, FieldId::u(2), 4) - 3.0).abs() < 1e-14);
        assert!((coeff(eq, FieldId::u(2), 6) + 5.0).abs() < 1e-14);
        // delta u' flux: b u'' - c u''''; delta u'' flux: c u'''.
        let rows = &bvp.boundary[End::Right.index()];
        let row_d1 = rows.iter().find(|r| r.deriv == 1 && r.field == FieldId::u(2)).unwrap();
        if let BoundaryCondition::Natural { flux, .. } = &row_d1.condition {
            let get = |o: usize| flux.iter().find(|c| c.order == o).map(|c| c.value).unwrap_or(0.0);
            assert!((get(2) - 3.0).abs() < 1e-14);
            assert!((get(4) + 5.0).abs() < 1e-14);
        } else {
            panic!("expected natural");
        }
        let row_d2 = rows.iter().find(|r| r.deriv == 2 && r.field == FieldId::u(2)).unwrap();
        if let BoundaryCondition::Natural { flux, .. } = &row_d2.condition {
            assert_eq!(flux.len(), 1);
            assert!((flux[0].value - 5.0).abs() < 1e-14);
            assert_eq!(flux[0].order, 3);
        } else {
            panic!("expected natural");
        }
    }

    #[test]
    fn semi_holonomic_degenerate_moduli_match_shear_beam_form() {
        // a = c = 0 and no transversal moment: the P rows keep only
        // -b P'' - d(u' - P) delta_j1 and the u row stays -d(u'' - P').
        let config = BeamConfig::semi_holonomic(0.0, 1.0, 0.0, 2.0, 1.0, 0.0);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
            for j in 1..=3 {
                bcs.anchor(End::Left, FieldId::p(i, j), 0, 0.0);
            }
        }
        let bvp = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        assert_eq!(bvp.order, 2);
        let eq_u = bvp.bulk_equation(FieldId::u(2)).unwrap();
        assert!((coeff(eq_u, FieldId::u(2), 2) + 2.0).abs() < 1e-14);
        assert!((coeff(eq_u, FieldId::p(2, 1), 1) - 2.0).abs() < 1e-14);
        let eq_p = bvp.bulk_equation(FieldId::p(2, 1)).unwrap();
        assert!((coeff(eq_p, FieldId::p(2, 1), 2) + 1.0).abs() < 1e-14);
        assert!((coeff(eq_p, FieldId::u(2), 1) + 2.0).abs() < 1e-14);
        assert!((coeff(eq_p, FieldId::p(2, 1), 0) - 2.0).abs() < 1e-14);
        assert_eq!(coeff(eq_p, FieldId::p(2, 1), 4), 0.0);
    }

    #[test]
    fn semi_holonomic_transversal_row_carries_combined_stiffness() {
        // The P^1_2 row stiffness on P^1_2'' is -(b + d ell^4 / 12).
        let ii = 0.7;
        let d = 3.0;
        let b = 2.0;
        let config = BeamConfig::semi_holonomic(1.0, b, 0.5, d, 1.0, ii);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
            for j in 1..=3 {
                bcs.anchor(End::Left, FieldId::p(i, j), 0, 0.0);
                bcs.anchor(End::Left, FieldId::p(i, j), 1, 0.0);
            }
        }
        let bvp = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        let eq = bvp.bulk_equation(FieldId::p(1, 2)).unwrap();
        assert!((coeff(eq, FieldId::p(1, 2), 2) + (b + d * ii)).abs() < 1e-12);
    }

    #[test]
    fn micro_curvature_row_couples_through_the_transversal_moment() {
        // The N^1_12 row includes -(d ell^4/12)(P^1_2,1 - N^1_12).
        let ii = 0.09;
        let d = 2.0;
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, d, 1.0, 1.0, ii);
        let mut bcs = BoundarySpec::free();
        for f in FieldId::all() {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let bvp = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        let eq = bvp.bulk_equation(FieldId::n(1, 1, 2)).unwrap();
        assert!((coeff(eq, FieldId::p(1, 2), 1) + d * ii).abs() < 1e-13);
        assert!(coeff(eq, FieldId::n(1, 1, 2), 0) > 0.0);
    }

    #[test]
    fn vanishing_e_leaves_only_transversal_coupling_between_p_and_n() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 2.0, 0.0, 1.0, 0.25);
        let bcs = crate::model::clamped(&config, End::Left);
        let bvp = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        // P^1_1,1 no longer couples to N^1_11.
        let eq = bvp.bulk_equation(FieldId::n(1, 1, 1)).unwrap();
        assert_eq!(coeff(eq, FieldId::p(1, 1), 1), 0.0);
        // The d ell^4/12 coupling rows survive.
        let eq2 = bvp.bulk_equation(FieldId::n(1, 1, 2)).unwrap();
        assert!(coeff(eq2, FieldId::p(1, 2), 1) != 0.0);
    }

    #[test]
    fn bending_planes_are_index_mirrors() {
        let config = BeamConfig::non_holonomic(1.1, 0.9, 0.7, 2.2, 1.4, 1.0, 0.15);
        let mut bcs = BoundarySpec::free();
        for f in FieldId::all() {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let b2 = assemble_bending_subsystem(&config, &LoadSet::zero(), &bcs, 2).unwrap();
        let b3 = assemble_bending_subsystem(&config, &LoadSet::zero(), &bcs, 3).unwrap();
        let swap = |f: FieldId| -> FieldId {
            let (kind, i, j, k) = f.indices();
            let m = |v: usize| match v {
                2 => 3,
                3 => 2,
                v => v,
            };
            match kind {
                crate::model::FieldKind::U => FieldId::u(m(i)),
                crate::model::FieldKind::P => FieldId::p(m(i), m(j)),
                crate::model::FieldKind::N => FieldId::n(m(i), m(j), m(k)),
            }
        };
        for eq2 in &b2.bulk {
            let eq3 = b3.bulk_equation(swap(eq2.unknown)).unwrap();
            for c in &eq2.coeffs {
                let mirrored = eq3
                    .coeffs
                    .iter()
                    .find(|c3| c3.unknown == swap(c.unknown) && c3.order == c.order)
                    .map(|c3| c3.value)
                    .unwrap_or(0.0);
                assert!(
                    (c.value - mirrored).abs() < 1e-14,
                    "{} order {}",
                    c.unknown.label(),
                    c.order
                );
            }
        }
    }

    #[test]
    fn subsystem_tables_equal_full_table_restrictions() {
        let config = BeamConfig::non_holonomic(1.3, 0.8, 0.6, 1.9, 1.1, 1.0, 0.2);
        let mut bcs = BoundarySpec::free();
        for f in FieldId::all() {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let full = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        for (sub, fields) in [
            (
                assemble_traction_subsystem(&config, &LoadSet::zero(), &bcs).unwrap(),
                traction_fields(Regime::NonHolonomic),
            ),
            (
                assemble_bending_subsystem(&config, &LoadSet::zero(), &bcs, 2).unwrap(),
                bending_fields(Regime::NonHolonomic, 2),
            ),
        ] {
            for f in &fields {
                let eq_sub = sub.bulk_equation(*f).unwrap();
                let eq_full = full.bulk_equation(*f).unwrap();
                for c in &eq_full.coeffs {
                    if fields.contains(&c.unknown) {
                        let v = eq_sub
                            .coeffs
                            .iter()
                            .find(|cs| cs.unknown == c.unknown && cs.order == c.order)
                            .map(|cs| cs.value)
                            .unwrap_or(0.0);
                        assert_eq!(v, c.value, "{} in eq {}", c.unknown.label(), f.label());
                    }
                }
            }
        }
    }

    #[test]
    fn coefficients_are_affine_in_each_modulus() {
        let base = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.3);
        let table = |e: f64| {
            let mut c = base.clone();
            c.e = e;
            let bcs = crate::model::clamped(&c, End::Left);
            let bvp = assemble_full(&c, &LoadSet::zero(), &bcs).unwrap();
            let eq = bvp.bulk_equation(FieldId::n(1, 2, 1)).unwrap();
            coeff(eq, FieldId::p(1, 2), 1)
        };
        let (v0, v1, v2) = (table(0.0), table(1.0), table(2.0));
        assert!((v2 - 2.0 * v1 + v0).abs() < 1e-13, "not affine: {v0} {v1} {v2}");
    }

    #[test]
    fn loads_outside_the_subsystem_are_rejected() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1);
        let mut loads = LoadSet::zero();
        *loads.bulk_mut(FieldId::u(2)) = LoadFn::Constant(1.0);
        let err = assemble_traction_subsystem(&config, &loads, &anchored_traction_bcs());
        assert!(matches!(err, Err(Error::LoadMismatch(_))));
    }

    #[test]
    fn coefficient_dump_roundtrips_through_csv() {
        let config = BeamConfig::non_holonomic(1.0, 2.0, 0.5, 1.5, 0.7, 1.0, 0.1);
        let bvp =
            assemble_traction_subsystem(&config, &LoadSet::zero(), &anchored_traction_bcs())
                .unwrap();
        let dir = std::env::temp_dir().join("microbeam_coeff_dump_test");
        let files = bvp.dump_coeff_csv(&dir).unwrap();
        assert_eq!(files.len(), 3);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("unknown,order,value"));
        let mut parsed = 0;
        for line in lines {
            let mut cols = line.split(',');
            let f = FieldId::parse(cols.next().unwrap()).unwrap();
            let order: usize = cols.next().unwrap().parse().unwrap();
            let value: f64 = cols.next().unwrap().parse().unwrap();
            let eq = bvp.bulk_equation(FieldId::u(1)).unwrap();
            let expect = coeff(eq, f, order);
            assert_eq!(value, expect);
            parsed += 1;
        }
        assert!(parsed >= 2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn strong_pairing_tracks_the_weak_residual_at_second_order() {
        let config = BeamConfig::non_holonomic(1.0, 0.6, 0.4, 2.0, 1.2, 1.0, 0.12);
        let mut bcs = BoundarySpec::free();
        for f in FieldId::all() {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let mut loads = LoadSet::zero();
        *loads.bulk_mut(FieldId::u(1)) = LoadFn::Polynomial(vec![1.0, -0.5]);
        *loads.traction_mut(End::Right, FieldId::p(2, 1)) = 0.3;
        let bvp = assemble_full(&config, &loads, &bcs).unwrap();

        let gap = |n: usize| -> f64 {
            let grid = Grid::new(n, 1.0);
            let mut state = FieldState::zeros(grid);
            let mut test = FieldState::zeros(grid);
            for (k, f) in FieldId::all().enumerate() {
                let k = k as f64;
                state.fill_with(f, move |x| (2.0 * x + 0.13 * k).sin());
                // Admissible: vanishes at the left end where u^1 is anchored.
                test.fill_with(f, move |x| x * (1.0 - 0.3 * x) * (0.21 * k + 1.0));
            }
            let strong = strong_weak_pairing(&bvp, &state, &test).unwrap();
            let weak =
                crate::energy::weak_residual(&state, &config, &loads, &bcs, &test).unwrap();
            (strong - weak).abs()
        };
        let g1 = gap(101);
        let g2 = gap(201);
        let ratio = g1 / g2;
        assert!(
            (2.5..=6.0).contains(&ratio),
            "expected second-order agreement, got gaps {g1} / {g2}"
        );
    }
}
