//! Finite-difference discretization of a [`LinearBvp`] and the banded solve.
//!
//! The discrete system is the exact gradient of the staggered equilibrium
//! potential: interior rows reproduce the centered second-order stencils of
//! the strong-form operator (scaled by the cell measure), anchored DOFs are
//! eliminated through local affine constraint maps, and natural conditions
//! emerge variationally from the endpoint terms. The reduced matrix is
//! symmetric positive definite whenever the anchoring removes every null
//! mode, which a breakdown of the banded factorization detects and reports.

use crate::assembly::LinearBvp;
use crate::banded::{BandedFactor, FactorOutcome, SymBanded};
use crate::energy::{end_curvature_form, endpoint_combo, EnergyModel, Reflections};
use crate::error::{Error, Result};
use crate::fd;
use crate::model::{
    BeamConfig, BoundarySpec, End, FieldId, FieldState, Grid, LoadSet,
};

/// Relative residual bound enforced after the banded solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Pivot tolerance of the equilibrated factorization.
const PIVOT_TOL: f64 = 1e-11;

/// Default grid resolution used by the command-line driver.
pub const DEFAULT_GRID: usize = 401;

#[derive(Debug, Clone)]
enum DofKind {
    Free(usize),
    /// Eliminated by an anchor constraint: an affine combination of free
    /// nodal DOFs of the same field. An empty combination is an anchor row
    /// in reduced form: coefficient one on the DOF, value on the right-hand
    /// side.
    Affine {
        terms: Vec<(usize, f64)>,
        constant: f64,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct DofMap {
    fields: Vec<FieldId>,
    slot_of: Vec<Option<usize>>,
    n: usize,
    kinds: Vec<DofKind>,
    n_reduced: usize,
}

impl DofMap {
    fn idx(&self, slot: usize, node: usize) -> usize {
        node * self.fields.len() + slot
    }

    pub fn slot(&self, f: FieldId) -> Option<usize> {
        self.slot_of[f.0]
    }

    pub fn n_reduced(&self) -> usize {
        self.n_reduced
    }

    /// Reduced row of a free `(field, node)` DOF.
    pub fn row_of(&self, f: FieldId, node: usize) -> Option<usize> {
        let slot = self.slot(f)?;
        match self.kinds[self.idx(slot, node)] {
            DofKind::Free(r) => Some(r),
            DofKind::Affine { .. } => None,
        }
    }

    /// Field and node of a reduced row.
    pub fn field_node_of(&self, row: usize) -> Option<(FieldId, usize)> {
        for node in 0..self.n {
            for (slot, f) in self.fields.iter().enumerate() {
                if let DofKind::Free(r) = self.kinds[self.idx(slot, node)] {
                    if r == row {
                        return Some((*f, node));
                    }
                }
            }
        }
        None
    }

    /// Anchor constant of a fully determined `(field, node)` DOF.
    pub fn anchored_value(&self, f: FieldId, node: usize) -> Option<f64> {
        let slot = self.slot(f)?;
        match &self.kinds[self.idx(slot, node)] {
            DofKind::Affine { terms, constant } if terms.is_empty() => Some(*constant),
            _ => None,
        }
    }

    /// Expand a nodal DOF into reduced coordinates plus a constant.
    fn expand(&self, slot: usize, node: usize, coeff: f64, out: &mut Vec<(usize, f64)>) -> f64 {
        match &self.kinds[self.idx(slot, node)] {
            DofKind::Free(r) => {
                out.push((*r, coeff));
                0.0
            }
            DofKind::Affine { terms, constant } => {
                for (r, c) in terms {
                    out.push((*r, coeff * c));
                }
                coeff * constant
            }
        }
    }

    fn reconstruct(&self, reduced: &[f64], grid: Grid) -> FieldState {
        let mut state = FieldState::zeros(grid);
        for node in 0..self.n {
            for (slot, f) in self.fields.iter().enumerate() {
                let v = match &self.kinds[self.idx(slot, node)] {
                    DofKind::Free(r) => reduced[*r],
                    DofKind::Affine { terms, constant } => {
                        terms.iter().map(|(r, c)| c * reduced[*r]).sum::<f64>() + constant
                    }
                };
                state.set(*f, node, v);
            }
        }
        state
    }
}

/// Build the DOF map: every anchored boundary DOF is eliminated by solving
/// the local one-sided constraint stencils for the nodal values nearest to
/// the endpoint.
fn build_dof_map(
    model: &EnergyModel,
    bcs: &BoundarySpec,
    grid: Grid,
    refl: &Reflections,
) -> Result<DofMap> {
    let fields = model.fields.clone();
    let nf = fields.len();
    let n = grid.n;
    let h = grid.h();
    let mut slot_of = vec![None; crate::model::NUM_FIELDS];
    for (slot, f) in fields.iter().enumerate() {
        slot_of[f.0] = Some(slot);
    }

    let mut kinds: Vec<Option<DofKind>> = vec![None; nf * n];
    for end in End::both() {
        for (slot, f) in fields.iter().enumerate() {
            let anchors: Vec<(usize, f64)> = bcs
                .anchors_at(end, *f)
                .into_iter()
                .filter(|(deriv, _)| !refl.covers(end, *f, *deriv))
                .collect();
            if anchors.is_empty() {
                continue;
            }
            let m = anchors.len();
            let max_window = anchors
                .iter()
                .map(|(d, _)| if *d == 0 { 1 } else { d + 2 })
                .max()
                .unwrap();
            let reach = max_window.max(m);
            if 2 * reach > n {
                return Err(Error::GridTooCoarse {
                    needed: 2 * reach,
                    got: n,
                });
            }
            // Local coordinates count inward from the endpoint.
            let global = |local: usize| match end {
                End::Left => local,
                End::Right => n - 1 - local,
            };
            // Constraint rows over locals 0..reach-1 and targets.
            let mut rows = vec![vec![0.0f64; reach]; m];
            let mut targets = vec![0.0f64; m];
            for (r, (deriv, value)) in anchors.iter().enumerate() {
                targets[r] = *value;
                if *deriv == 0 {
                    rows[r][0] = 1.0;
                } else {
                    let w = deriv + 2;
                    let weights = fd::one_sided(*deriv, end == End::Left, w, h);
                    for (k, wk) in weights.iter().enumerate() {
                        let local = match end {
                            End::Left => k,
                            End::Right => w - 1 - k,
                        };
                        rows[r][local] = *wk;
                    }
                }
            }
            // Express locals 0..m-1 through locals m..reach-1 and the targets:
            // multi-RHS Gaussian elimination on the leading m x m block.
            let nrhs = 1 + (reach - m);
            let mut aug = vec![vec![0.0f64; nrhs]; m];
            for r in 0..m {
                aug[r][0] = targets[r];
                for q in m..reach {
                    aug[r][1 + q - m] = -rows[r][q];
                }
            }
            let mut block: Vec<Vec<f64>> = rows.iter().map(|r| r[0..m].to_vec()).collect();
            for col in 0..m {
                let piv = (col..m)
                    .max_by(|&x, &y| block[x][col].abs().total_cmp(&block[y][col].abs()))
                    .unwrap();
                block.swap(col, piv);
                aug.swap(col, piv);
                let diag = block[col][col];
                if diag.abs() < 1e-300 {
                    return Err(Error::IllPosedAnchoring(format!(
                        "degenerate anchor set on {} at the {} end",
                        f.label(),
                        end.name()
                    )));
                }
                for r in 0..m {
                    if r != col {
                        let factor = block[r][col] / diag;
                        for k in col..m {
                            block[r][k] -= factor * block[col][k];
                        }
                        for k in 0..nrhs {
                            aug[r][k] -= factor * aug[col][k];
                        }
                    }
                }
            }
            for p in 0..m {
                let diag = block[p][p];
                let constant = aug[p][0] / diag;
                let terms: Vec<(usize, f64)> = (m..reach)
                    .filter_map(|q| {
                        let c = aug[p][1 + q - m] / diag;
                        (c != 0.0).then_some((global(q), c))
                    })
                    .collect();
                let node = global(p);
                if kinds[node * nf + slot].is_some() {
                    return Err(Error::IllPosedAnchoring(format!(
                        "anchor windows of {} overlap at node {node}",
                        f.label()
                    )));
                }
                kinds[node * nf + slot] = Some(DofKind::Affine {
                    terms: terms.into_iter().map(|(g, c)| (g, c)).collect(),
                    constant,
                });
            }
        }
    }

    // Assign reduced indices node-major, then resolve affine node references.
    let mut n_reduced = 0usize;
    let mut reduced_of = vec![usize::MAX; nf * n];
    for node in 0..n {
        for slot in 0..nf {
            if kinds[node * nf + slot].is_none() {
                reduced_of[node * nf + slot] = n_reduced;
                n_reduced += 1;
            }
        }
    }
    let mut final_kinds = Vec::with_capacity(nf * n);
    for node in 0..n {
        for slot in 0..nf {
            let idx = node * nf + slot;
            match kinds[idx].take() {
                None => final_kinds.push(DofKind::Free(reduced_of[idx])),
                Some(DofKind::Affine { terms, constant }) => {
                    let mut resolved = Vec::with_capacity(terms.len());
                    for (ref_node, c) in terms {
                        let rid = reduced_of[ref_node * nf + slot];
                        if rid == usize::MAX {
                            return Err(Error::IllPosedAnchoring(format!(
                                "anchor elimination of {} references another eliminated node",
                                fields[slot].label()
                            )));
                        }
                        resolved.push((rid, c));
                    }
                    final_kinds.push(DofKind::Affine {
                        terms: resolved,
                        constant,
                    });
                }
                Some(DofKind::Free(_)) => unreachable!(),
            }
        }
    }

    Ok(DofMap {
        fields,
        slot_of,
        n,
        kinds: final_kinds,
        n_reduced,
    })
}

/// Visit every staggered quadrature contribution `scale * (sum c_k x_k)^2`
/// of the internal quadratic form, as discrete linear forms over
/// `(slot, node)` DOFs.
fn visit_internal(
    model: &EnergyModel,
    grid: Grid,
    refl: &Reflections,
    mut visit: impl FnMut(f64, &[(f64, usize, usize)], f64),
) {
    let n = grid.n;
    let h = grid.h();
    let tw = fd::trapezoid_weights(n, h);
    let slot = |f: FieldId| -> usize {
        model
            .fields
            .iter()
            .position(|g| *g == f)
            .expect("term references an inactive field")
    };
    let mut buf: Vec<(f64, usize, usize)> = Vec::with_capacity(16);
    for term in &model.terms {
        let w = term.weight;
        match term.max_order() {
            0 => {
                for i in 0..n {
                    buf.clear();
                    for &(c, f, _) in &term.parts {
                        buf.push((c, slot(f), i));
                    }
                    visit(tw[i] * w, &buf, 0.0);
                }
            }
            1 => {
                for j in 0..n - 1 {
                    buf.clear();
                    for &(c, f, o) in &term.parts {
                        let s = slot(f);
                        if o == 0 {
                            buf.push((0.5 * c, s, j));
                            buf.push((0.5 * c, s, j + 1));
                        } else {
                            buf.push((-c / h, s, j));
                            buf.push((c / h, s, j + 1));
                        }
                    }
                    visit(h * w, &buf, 0.0);
                }
            }
            2 => {
                let hh = h * h;
                for end in End::both() {
                    let i = if end == End::Left { 0 } else { n - 1 };
                    buf.clear();
                    let mut constant = 0.0;
                    for &(c, f, _) in &term.parts {
                        let (entries, k) = end_curvature_form(n, h, end, f, refl);
                        for (node, wk) in entries {
                            buf.push((c * wk, slot(f), node));
                        }
                        constant += c * k;
                    }
                    visit(tw[i] * w, &buf, constant);
                }
                for i in 1..n - 1 {
                    buf.clear();
                    for &(c, f, _) in &term.parts {
                        let s = slot(f);
                        buf.push((c / hh, s, i - 1));
                        buf.push((-2.0 * c / hh, s, i));
                        buf.push((c / hh, s, i + 1));
                    }
                    visit(tw[i] * w, &buf, 0.0);
                }
            }
            3 => {
                let h3 = h * h * h;
                for j in 1..n - 2 {
                    buf.clear();
                    for &(c, f, _) in &term.parts {
                        let s = slot(f);
                        buf.push((-c / h3, s, j - 1));
                        buf.push((3.0 * c / h3, s, j));
                        buf.push((-3.0 * c / h3, s, j + 1));
                        buf.push((c / h3, s, j + 2));
                    }
                    visit(h * w, &buf, 0.0);
                }
                let left = fd::one_sided(3, true, 5, h);
                let right = fd::one_sided(3, false, 5, h);
                for (weights, start) in [(&left, 0usize), (&right, n - 5)] {
                    buf.clear();
                    for &(c, f, _) in &term.parts {
                        let s = slot(f);
                        for (k, wk) in weights.iter().enumerate() {
                            buf.push((c * wk, s, start + k));
                        }
                    }
                    visit(h * w, &buf, 0.0);
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Visit the external-work linear forms `mult * (sum c_k x_k)`.
fn visit_external(
    model: &EnergyModel,
    loads: &LoadSet,
    grid: Grid,
    mut visit: impl FnMut(f64, &[(f64, usize, usize)]),
) -> Result<()> {
    let n = grid.n;
    let h = grid.h();
    let tw = fd::trapezoid_weights(n, h);
    let slot = |f: FieldId| model.fields.iter().position(|g| *g == f).unwrap();
    for p in &model.bulk_pairings {
        let lf = loads.bulk(p.slot);
        if lf.is_zero() {
            continue;
        }
        let samples = lf.sample(grid)?;
        let s = slot(p.field);
        match p.deriv {
            0 => {
                for i in 0..n {
                    visit(tw[i] * samples[i], &[(1.0, s, i)]);
                }
            }
            1 => {
                for j in 0..n - 1 {
                    let mid = 0.5 * (samples[j] + samples[j + 1]);
                    visit(h * mid, &[(-1.0 / h, s, j), (1.0 / h, s, j + 1)]);
                }
            }
            _ => unreachable!(),
        }
    }
    for p in &model.endpoint_pairings {
        for end in End::both() {
            let t = loads.traction(end, p.slot);
            if t != 0.0 {
                let s = slot(p.field);
                let (start, weights) = endpoint_combo(grid, end, p.deriv);
                let entries: Vec<(f64, usize, usize)> = weights
                    .iter()
                    .enumerate()
                    .map(|(k, wk)| (*wk, s, start + k))
                    .collect();
                visit(t, &entries);
            }
        }
    }
    Ok(())
}

pub(crate) struct Assembled {
    pub map: DofMap,
    pub matrix: SymBanded,
    pub rhs: Vec<f64>,
}

pub(crate) fn assemble_reduced(
    model: &EnergyModel,
    loads: &LoadSet,
    bcs: &BoundarySpec,
    grid: Grid,
) -> Result<Assembled> {
    let refl = Reflections::of(model, bcs);
    let map = build_dof_map(model, bcs, grid, &refl)?;
    let nr = map.n_reduced();

    // Dry pass for the actual semi-bandwidth after constraint expansion.
    let mut kd = 0usize;
    let mut expanded: Vec<(usize, f64)> = Vec::with_capacity(32);
    {
        let probe = |_scale: f64, entries: &[(f64, usize, usize)], kd: &mut usize, map: &DofMap| {
            let mut lo = usize::MAX;
            let mut hi = 0usize;
            let mut tmp = Vec::with_capacity(8);
            for &(c, slot, node) in entries {
                tmp.clear();
                map.expand(slot, node, c, &mut tmp);
                for (r, _) in &tmp {
                    lo = lo.min(*r);
                    hi = hi.max(*r);
                }
            }
            if lo != usize::MAX {
                *kd = (*kd).max(hi - lo);
            }
        };
        visit_internal(model, grid, &refl, |s, e, _k| probe(s, e, &mut kd, &map));
    }

    let mut matrix = SymBanded::zeros(nr.max(1), kd);
    let mut rhs = vec![0.0f64; nr.max(1)];
    visit_internal(model, grid, &refl, |scale, entries, refl_constant| {
        expanded.clear();
        let mut constant = refl_constant;
        for &(c, slot, node) in entries {
            constant += map.expand(slot, node, c, &mut expanded);
        }
        expanded.sort_unstable_by_key(|(r, _)| *r);
        // Merge duplicate reduced indices before forming the outer product.
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(expanded.len());
        for &(r, c) in expanded.iter() {
            match merged.last_mut() {
                Some((lr, lc)) if *lr == r => *lc += c,
                _ => merged.push((r, c)),
            }
        }
        for (ai, &(ri, ci)) in merged.iter().enumerate() {
            for &(rj, cj) in merged.iter().take(ai + 1) {
                matrix.add(ri, rj, scale * ci * cj);
            }
            rhs[ri] -= scale * constant * ci;
        }
    });
    visit_external(model, loads, grid, |mult, entries| {
        expanded.clear();
        for &(c, slot, node) in entries {
            map.expand(slot, node, c, &mut expanded);
        }
        for &(r, c) in expanded.iter() {
            rhs[r] += mult * c;
        }
    })?;

    Ok(Assembled { map, matrix, rhs })
}

/// Discretized linear system over the reduced (anchor-eliminated) DOFs.
pub struct DiscreteSystem {
    pub n: usize,
    pub h: f64,
    pub rhs: Vec<f64>,
    pub(crate) matrix: SymBanded,
    pub(crate) map: DofMap,
    pub(crate) grid: Grid,
}

impl DiscreteSystem {
    pub fn n_reduced(&self) -> usize {
        self.map.n_reduced()
    }

    pub fn bandwidth(&self) -> usize {
        self.matrix.kd
    }

    pub fn matrix_entry(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn row_of(&self, f: FieldId, node: usize) -> Option<usize> {
        self.map.row_of(f, node)
    }

    pub fn field_node_of(&self, row: usize) -> Option<(FieldId, usize)> {
        self.map.field_node_of(row)
    }

    /// Anchored DOFs are eliminated: coefficient one on the DOF with the
    /// anchor value on the right-hand side.
    pub fn anchored_value(&self, f: FieldId, node: usize) -> Option<f64> {
        self.map.anchored_value(f, node)
    }
}

/// Discretize a boundary-value problem on `n` grid points.
pub fn discretize(bvp: &LinearBvp, n: usize) -> Result<DiscreteSystem> {
    let order = bvp.order.max(1);
    let min_n = (2 * order + 1).max(bvp.model().min_grid());
    if n < min_n {
        return Err(Error::GridTooCoarse { needed: min_n, got: n });
    }
    let grid = Grid::new(n, bvp.config().length);
    let assembled = assemble_reduced(bvp.model(), bvp.loads(), bvp.bcs(), grid)?;
    Ok(DiscreteSystem {
        n,
        h: grid.h(),
        rhs: assembled.rhs,
        matrix: assembled.matrix,
        map: assembled.map,
        grid,
    })
}

fn describe_mode(map: &DofMap, mode: &[f64]) -> String {
    let mut entries: Vec<(f64, usize)> = mode
        .iter()
        .enumerate()
        .map(|(i, v)| (v.abs(), i))
        .filter(|(a, _)| *a > 0.0)
        .collect();
    entries.sort_by(|x, y| y.0.total_cmp(&x.0));
    let head: Vec<String> = entries
        .iter()
        .take(4)
        .filter_map(|(a, row)| {
            map.field_node_of(*row)
                .map(|(f, node)| format!("{}@{node} ({a:.2})", f.label()))
        })
        .collect();
    format!("remaining null mode concentrated on [{}]", head.join(", "))
}

/// Solve diagnostics for reporting.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub n_reduced: usize,
    pub bandwidth: usize,
    pub residual_inf: f64,
    pub matrix_norm_inf: f64,
    pub smallest_pivot: f64,
}

/// Factor and solve, returning the full sampled state (solved fields filled,
/// inactive fields zero).
pub fn solve(ds: &DiscreteSystem) -> Result<FieldState> {
    solve_with_stats(ds).map(|(state, _)| state)
}

/// [`solve`] plus factorization and residual diagnostics.
pub fn solve_with_stats(ds: &DiscreteSystem) -> Result<(FieldState, SolveStats)> {
    let factor = match BandedFactor::compute(&ds.matrix, PIVOT_TOL) {
        FactorOutcome::Factored(f) => f,
        FactorOutcome::Breakdown { at, mode } => {
            let hint = ds
                .map
                .field_node_of(at)
                .map(|(f, node)| format!(" near {} at node {node}", f.label()))
                .unwrap_or_default();
            return Err(Error::IllPosedAnchoring(format!(
                "{}{hint}",
                describe_mode(&ds.map, &mode)
            )));
        }
    };
    let mut x = factor.solve_refined(&ds.matrix, &ds.rhs, 2);
    let norm_a = ds.matrix.norm_inf();
    let norm_b = ds.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..3 {
        let ax = ds.matrix.matvec(&x);
        let res = ax
            .iter()
            .zip(&ds.rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let norm_x = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = RESIDUAL_TOL * (norm_a * norm_x + norm_b);
        if res <= bound || ds.map.n_reduced() == 0 {
            let state = ds.map.reconstruct(&x, ds.grid);
            state.validate()?;
            let stats = SolveStats {
                n_reduced: ds.map.n_reduced(),
                bandwidth: ds.matrix.kd,
                residual_inf: res,
                matrix_norm_inf: norm_a,
                smallest_pivot: factor.smallest_pivot,
            };
            return Ok((state, stats));
        }
        x = factor.solve_refined(&ds.matrix, &ds.rhs, 2);
        let ax2 = ds.matrix.matvec(&x);
        let res2 = ax2
            .iter()
            .zip(&ds.rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if res2 >= res {
            return Err(Error::SolverFailure(format!(
                "residual {res2:.3e} exceeds bound {bound:.3e} and refinement stalled"
            )));
        }
    }
    Err(Error::SolverFailure("iterative refinement did not converge".into()))
}

/// Convenience: discretize and solve in one call.
pub fn solve_bvp(bvp: &LinearBvp, n: usize) -> Result<FieldState> {
    solve(&discretize(bvp, n)?)
}

/// Positive-definiteness probe used by configuration validation: assemble the
/// loadless system on a coarse grid and attempt the factorization. Null modes
/// of the constant-coefficient operator are polynomial, so they already show
/// up at this resolution.
pub fn rank_check(config: &BeamConfig, bcs: &BoundarySpec, n: usize) -> Result<()> {
    let model = EnergyModel::full(config);
    rank_check_sized(&model, config, bcs, n)
}

/// Rank check restricted to a subsystem model.
pub(crate) fn rank_check_model(
    model: &EnergyModel,
    config: &BeamConfig,
    bcs: &BoundarySpec,
) -> Result<()> {
    rank_check_sized(model, config, bcs, 2 * config.operator_order() + 9)
}

fn rank_check_sized(
    model: &EnergyModel,
    config: &BeamConfig,
    bcs: &BoundarySpec,
    n: usize,
) -> Result<()> {
    let grid = Grid::new(
        n.max(model.min_grid()).max(2 * config.operator_order() + 1),
        config.length,
    );
    let assembled = assemble_reduced(model, &LoadSet::zero(), bcs, grid)?;
    match BandedFactor::compute(&assembled.matrix, PIVOT_TOL) {
        FactorOutcome::Factored(_) => Ok(()),
        FactorOutcome::Breakdown { mode, .. } => Err(Error::IllPosedAnchoring(describe_mode(
            &assembled.map,
            &mode,
        ))),
    }
}

/// Reference solution for a refinement study.
pub enum RefinementReference<'a> {
    ClosedForm(&'a dyn Fn(FieldId, f64) -> f64),
    /// Solve once on this grid and compare at shared nodes; every study grid
    /// must divide it (`n_ref - 1` a multiple of `n - 1`).
    FinestGrid(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct RefinementRow {
    pub n: usize,
    pub h: f64,
    pub error_linf: f64,
    pub observed_order: Option<f64>,
}

/// Solve on each grid and report infinity-norm errors and observed orders.
pub fn grid_refinement_study(
    bvp: &LinearBvp,
    n_list: &[usize],
    reference: RefinementReference<'_>,
) -> Result<Vec<RefinementRow>> {
    let finest = match &reference {
        RefinementReference::FinestGrid(nref) => Some((*nref, solve_bvp(bvp, *nref)?)),
        RefinementReference::ClosedForm(_) => None,
    };
    let mut rows: Vec<RefinementRow> = Vec::new();
    for &n in n_list {
        let state = solve_bvp(bvp, n)?;
        let grid = state.grid;
        let mut err = 0.0f64;
        for f in bvp.unknowns.iter() {
            match &reference {
                RefinementReference::ClosedForm(exact) => {
                    for i in 0..n {
                        err = err.max((state.get(*f, i) - exact(*f, grid.x(i))).abs());
                    }
                }
                RefinementReference::FinestGrid(nref) => {
                    if (nref - 1) % (n - 1) != 0 {
                        return Err(Error::LoadMismatch(format!(
                            "reference grid {nref} does not contain the nodes of grid {n}"
                        )));
                    }
                    let stride = (nref - 1) / (n - 1);
                    let (_, fine) = finest.as_ref().unwrap();
                    for i in 0..n {
                        err = err.max((state.get(*f, i) - fine.get(*f, i * stride)).abs());
                    }
                }
            }
        }
        let observed_order = rows.last().map(|prev: &RefinementRow| {
            (prev.error_linf / err).ln() / (prev.h / grid.h()).ln()
        });
        rows.push(RefinementRow {
            n,
            h: grid.h(),
            error_linf: err,
            observed_order,
        });
    }
    Ok(rows)
}

/// Observed orders from a plain error sequence with halved spacings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect()
}
