//! Domain types: configuration, sampled fields, loads, boundary conditions.

use crate::error::{Error, Result};

/// Kinematic regime, ordered by decreasing constraint strength.
///
/// `Holonomic` enforces both gradient constraints, `SemiHolonomic` only the
/// second-order one, `NonHolonomic` none. The derived ordering therefore ranks
/// regimes by kinematic freedom: `NonHolonomic > SemiHolonomic > Holonomic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regime {
    Holonomic = 0,
    SemiHolonomic = 1,
    NonHolonomic = 2,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::NonHolonomic => "non-holonomic",
            Regime::SemiHolonomic => "semi-holonomic",
            Regime::Holonomic => "holonomic",
        }
    }
}

/// Total number of scalar kinematic fields: 3 (u) + 9 (P) + 27 (N).
pub const NUM_FIELDS: usize = 39;

/// Identifier of one scalar kinematic field.
///
/// Layout: `u^i` at `i-1`, `P^i_j` at `3 + 3(i-1) + (j-1)`,
/// `N^i_{jk}` at `12 + 9(i-1) + 3(j-1) + (k-1)`, indices 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId(pub usize);

impl FieldId {
    pub fn u(i: usize) -> FieldId {
        assert!((1..=3).contains(&i));
        FieldId(i - 1)
    }

    pub fn p(i: usize, j: usize) -> FieldId {
        assert!((1..=3).contains(&i) && (1..=3).contains(&j));
        FieldId(3 + 3 * (i - 1) + (j - 1))
    }

    pub fn n(i: usize, j: usize, k: usize) -> FieldId {
        assert!((1..=3).contains(&i) && (1..=3).contains(&j) && (1..=3).contains(&k));
        FieldId(12 + 9 * (i - 1) + 3 * (j - 1) + (k - 1))
    }

    /// Tensor indices of this field: `(kind, i, j, k)` with unused slots 0.
    pub fn indices(self) -> (FieldKind, usize, usize, usize) {
        let f = self.0;
        if f < 3 {
            (FieldKind::U, f + 1, 0, 0)
        } else if f < 12 {
            let r = f - 3;
            (FieldKind::P, r / 3 + 1, r % 3 + 1, 0)
        } else {
            let r = f - 12;
            (FieldKind::N, r / 9 + 1, (r % 9) / 3 + 1, r % 3 + 1)
        }
    }

    /// Header label, e.g. `u^1`, `P^1_2`, `N^1_12`.
    pub fn label(self) -> String {
        match self.indices() {
            (FieldKind::U, i, _, _) => format!("u^{i}"),
            (FieldKind::P, i, j, _) => format!("P^{i}_{j}"),
            (FieldKind::N, i, j, k) => format!("N^{i}_{j}{k}"),
        }
    }

    /// Label of the `order`-th longitudinal derivative, e.g. `P^1_2,1`.
    pub fn deriv_label(self, order: usize) -> String {
        if order == 0 {
            self.label()
        } else {
            format!("{},{}", self.label(), "1".repeat(order))
        }
    }

    /// Parse a header label produced by [`FieldId::label`].
    pub fn parse(s: &str) -> Option<FieldId> {
        let digits = |t: &str| -> Option<Vec<usize>> {
            t.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect()
        };
        if let Some(rest) = s.strip_prefix("u^") {
            let d = digits(rest)?;
            if d.len() == 1 && (1..=3).contains(&d[0]) {
                return Some(FieldId::u(d[0]));
            }
        } else if let Some(rest) = s.strip_prefix("P^") {
            let (i, j) = rest.split_once('_')?;
            let (i, j) = (digits(i)?, digits(j)?);
            if i.len() == 1 && j.len() == 1 && (1..=3).contains(&i[0]) && (1..=3).contains(&j[0]) {
                return Some(FieldId::p(i[0], j[0]));
            }
        } else if let Some(rest) = s.strip_prefix("N^") {
            let (i, jk) = rest.split_once('_')?;
            let (i, jk) = (digits(i)?, digits(jk)?);
            if i.len() == 1 && jk.len() == 2 && (1..=3).contains(&i[0]) {
                let (j, k) = (jk[0], jk[1]);
                if (1..=3).contains(&j) && (1..=3).contains(&k) {
                    return Some(FieldId::n(i[0], j, k));
                }
            }
        }
        None
    }

    pub fn all() -> impl Iterator<Item = FieldId> {
        (0..NUM_FIELDS).map(FieldId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    U,
    P,
    N,
}

/// Constitutive scalars, geometry and regime selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    /// Symmetric micro-strain modulus.
    pub a: f64,
    /// Micro-curvature norm modulus.
    pub b: f64,
    /// Micro-curvature gradient modulus.
    pub c: f64,
    /// First penalty modulus (couples `u'` to `P`).
    pub d: f64,
    /// Second penalty modulus (couples `P'` to `N`).
    pub e: f64,
    /// Beam length.
    pub length: f64,
    /// Transversal second moment `I^{22} = I^{33}`, i.e. ell^4/12 for a square
    /// slice of side ell. Circular slices pass pi*ell^4/32 here instead.
    pub ell4_over_12: f64,
    pub regime: Regime,
    /// Frozen transversal micro-curvature constants `N^i_{j,alpha}`,
    /// indexed `[i-1][j-1][alpha-2]`. Semi-holonomic regime only.
    pub frozen_n_jalpha: Option<[[[f64; 2]; 3]; 3]>,
    /// Frozen transversal displacement slopes `u^i_{,alpha 1}`,
    /// indexed `[i-1][alpha-2]`. Holonomic regime only.
    pub frozen_u_alpha_slope: Option<[[f64; 2]; 3]>,
}

impl BeamConfig {
    /// A convenience constructor for the non-holonomic regime.
    pub fn non_holonomic(a: f64, b: f64, c: f64, d: f64, e: f64, length: f64, ell4_over_12: f64) -> Self {
        BeamConfig {
            a,
            b,
            c,
            d,
            e,
            length,
            ell4_over_12,
            regime: Regime::NonHolonomic,
            frozen_n_jalpha: None,
            frozen_u_alpha_slope: None,
        }
    }

    pub fn semi_holonomic(a: f64, b: f64, c: f64, d: f64, length: f64, ell4_over_12: f64) -> Self {
        BeamConfig {
            a,
            b,
            c,
            d,
            e: 0.0,
            length,
            ell4_over_12,
            regime: Regime::SemiHolonomic,
            frozen_n_jalpha: Some([[[0.0; 2]; 3]; 3]),
            frozen_u_alpha_slope: None,
        }
    }

    pub fn holonomic(a: f64, b: f64, c: f64, length: f64, ell4_over_12: f64) -> Self {
        BeamConfig {
            a,
            b,
            c,
            d: 0.0,
            e: 0.0,
            length,
            ell4_over_12,
            regime: Regime::Holonomic,
            frozen_n_jalpha: None,
            frozen_u_alpha_slope: Some([[0.0; 2]; 3]),
        }
    }

    /// Frozen `N^i_{j,alpha}` value (1-based `i`, `j`, `alpha` in {2,3}).
    pub fn frozen_n(&self, i: usize, j: usize, alpha: usize) -> f64 {
        self.frozen_n_jalpha
            .map(|t| t[i - 1][j - 1][alpha - 2])
            .unwrap_or(0.0)
    }

    pub fn frozen_slope(&self, i: usize, alpha: usize) -> f64 {
        self.frozen_u_alpha_slope
            .map(|t| t[i - 1][alpha - 2])
            .unwrap_or(0.0)
    }

    /// Half-extent of the transversal slice implied by `ell4_over_12`.
    pub fn transversal_half_extent(&self) -> f64 {
        (12.0 * self.ell4_over_12).powf(0.25) / 2.0
    }

    /// Highest derivative order of the regime's equilibrium operator for this
    /// configuration. Vanishing moduli lower the order.
    pub fn operator_order(&self) -> usize {
        match self.regime {
            Regime::NonHolonomic => 2,
            Regime::SemiHolonomic => {
                if self.c > 0.0 {
                    4
                } else {
                    2
                }
            }
            Regime::Holonomic => {
                if self.c > 0.0 {
                    6
                } else if self.b > 0.0 {
                    4
                } else {
                    2
                }
            }
        }
    }
}

/// Uniform sampling grid on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Grid {
        Grid { n, length }
    }

    pub fn h(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.length * i as f64 / (self.n - 1) as f64
    }

    /// Index of the grid point nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let t = (x / self.h()).round();
        (t.max(0.0) as usize).min(self.n - 1)
    }
}

/// All 39 scalar kinematic fields sampled on a uniform grid.
///
/// Storage is field-major: entry `(f, i)` sits at `f * n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: Grid,
    data: Vec<f64>,
}

impl FieldState {
    pub fn zeros(grid: Grid) -> FieldState {
        FieldState {
            grid,
            data: vec![0.0; NUM_FIELDS * grid.n],
        }
    }

    pub fn field(&self, f: FieldId) -> &[f64] {
        &self.data[f.0 * self.grid.n..(f.0 + 1) * self.grid.n]
    }

    pub fn field_mut(&mut self, f: FieldId) -> &mut [f64] {
        &mut self.data[f.0 * self.grid.n..(f.0 + 1) * self.grid.n]
    }

    pub fn get(&self, f: FieldId, i: usize) -> f64 {
        self.data[f.0 * self.grid.n + i]
    }

    pub fn set(&mut self, f: FieldId, i: usize, v: f64) {
        self.data[f.0 * self.grid.n + i] = v;
    }

    /// Fill one field from a function of the longitudinal coordinate.
    pub fn fill_with(&mut self, f: FieldId, func: impl Fn(f64) -> f64) {
        let grid = self.grid;
        for i in 0..grid.n {
            self.set(f, i, func(grid.x(i)));
        }
    }

    pub fn u(&self, i: usize) -> &[f64] {
        self.field(FieldId::u(i))
    }

    pub fn p(&self, i: usize, j: usize) -> &[f64] {
        self.field(FieldId::p(i, j))
    }

    pub fn n3(&self, i: usize, j: usize, k: usize) -> &[f64] {
        self.field(FieldId::n(i, j, k))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Grid size plus finiteness checks.
    pub fn validate(&self) -> Result<()> {
        if self.grid.n < 5 {
            return Err(Error::GridTooCoarse {
                needed: 5,
                got: self.grid.n,
            });
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("field state contains a non-finite sample".into()));
        }
        Ok(())
    }

    /// Pointwise linear combination `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &FieldState, beta: f64) -> FieldState {
        assert_eq!(self.grid, other.grid);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        FieldState { grid: self.grid, data }
    }

    pub fn scale(&self, alpha: f64) -> FieldState {
        FieldState {
            grid: self.grid,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One scalar load profile along the beam.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadFn {
    Zero,
    Constant(f64),
    /// Polynomial in the longitudinal coordinate, coefficients by ascending power.
    Polynomial(Vec<f64>),
    /// Tabulated samples; must match the solve grid size.
    Samples(Vec<f64>),
}

impl LoadFn {
    pub fn polynomial(coeffs: &[f64]) -> LoadFn {
        LoadFn::Polynomial(coeffs.to_vec())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LoadFn::Zero => true,
            LoadFn::Constant(v) => *v == 0.0,
            LoadFn::Polynomial(c) => c.iter().all(|v| *v == 0.0),
            LoadFn::Samples(s) => s.iter().all(|v| *v == 0.0),
        }
    }

    /// Sample on a grid. Tabulated profiles must match `grid.n`.
    pub fn sample(&self, grid: Grid) -> Result<Vec<f64>> {
        match self {
            LoadFn::Zero => Ok(vec![0.0; grid.n]),
            LoadFn::Constant(v) => Ok(vec![*v; grid.n]),
            LoadFn::Polynomial(c) => Ok((0..grid.n)
                .map(|i| {
                    let x = grid.x(i);
                    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
                })
                .collect()),
            LoadFn::Samples(s) => {
                if s.len() != grid.n {
                    return Err(Error::LoadMismatch(format!(
                        "tabulated load has {} samples, grid has {}",
                        s.len(),
                        grid.n
                    )));
                }
                Ok(s.clone())
            }
        }
    }

    /// Sample the longitudinal derivative (exact for constants/polynomials,
    /// second-order finite differences for tabulated profiles).
    pub fn sample_derivative(&self, grid: Grid) -> Result<Vec<f64>> {
        match self {
            LoadFn::Zero | LoadFn::Constant(_) => Ok(vec![0.0; grid.n]),
            LoadFn::Polynomial(c) => {
                let dc: Vec<f64> = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, ck)| k as f64 * ck)
                    .collect();
                LoadFn::Polynomial(dc).sample(grid)
            }
            LoadFn::Samples(_) => {
                let s = self.sample(grid)?;
                Ok(crate::fd::derivative(&s, grid.h(), 1))
            }
        }
    }

    pub fn eval_endpoint(&self, grid: Grid, end: End) -> Result<f64> {
        let s = self.sample(grid)?;
        Ok(match end {
            End::Left => s[0],
            End::Right => s[grid.n - 1],
        })
    }
}

/// Bulk force densities and endpoint tractions.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSet {
    /// Bulk force on `u`, indexed `[i-1]`.
    pub f0: [LoadFn; 3],
    /// Bulk force on `P`, row-major `[3(i-1) + (j-1)]`.
    pub f1: [LoadFn; 9],
    /// Bulk force on `N`, `[9(i-1) + 3(j-1) + (k-1)]`.
    pub f2: [LoadFn; 27],
    pub t0: [[f64; 3]; 2],
    pub t1: [[f64; 9]; 2],
    pub t2: [[f64; 27]; 2],
}

impl Default for LoadSet {
    fn default() -> Self {
        LoadSet::zero()
    }
}

impl LoadSet {
    pub fn zero() -> LoadSet {
        LoadSet {
            f0: std::array::from_fn(|_| LoadFn::Zero),
            f1: std::array::from_fn(|_| LoadFn::Zero),
            f2: std::array::from_fn(|_| LoadFn::Zero),
            t0: [[0.0; 3]; 2],
            t1: [[0.0; 9]; 2],
            t2: [[0.0; 27]; 2],
        }
    }

    pub fn bulk(&self, f: FieldId) -> &LoadFn {
        let id = f.0;
        if id < 3 {
            &self.f0[id]
        } else if id < 12 {
            &self.f1[id - 3]
        } else {
            &self.f2[id - 12]
        }
    }

    pub fn bulk_mut(&mut self, f: FieldId) -> &mut LoadFn {
        let id = f.0;
        if id < 3 {
            &mut self.f0[id]
        } else if id < 12 {
            &mut self.f1[id - 3]
        } else {
            &mut self.f2[id - 12]
        }
    }

    pub fn traction(&self, end: End, f: FieldId) -> f64 {
        let id = f.0;
        let e = end.index();
        if id < 3 {
            self.t0[e][id]
        } else if id < 12 {
            self.t1[e][id - 3]
        } else {
            self.t2[e][id - 12]
        }
    }

    pub fn traction_mut(&mut self, end: End, f: FieldId) -> &mut f64 {
        let id = f.0;
        let e = end.index();
        if id < 3 {
            &mut self.t0[e][id]
        } else if id < 12 {
            &mut self.t1[e][id - 3]
        } else {
            &mut self.t2[e][id - 12]
        }
    }

    /// True when every profile and traction touching `f` vanishes.
    pub fn is_silent_on(&self, f: FieldId) -> bool {
        self.bulk(f).is_zero()
            && self.traction(End::Left, f) == 0.0
            && self.traction(End::Right, f) == 0.0
    }

    pub fn all_finite(&self, grid: Grid) -> bool {
        let finite = |lf: &LoadFn| {
            lf.sample(grid)
                .map(|s| s.iter().all(|v| v.is_finite()))
                .unwrap_or(false)
        };
        self.f0.iter().all(&finite)
            && self.f1.iter().all(&finite)
            && self.f2.iter().all(&finite)
            && self.t0.iter().flatten().all(|v| v.is_finite())
            && self.t1.iter().flatten().all(|v| v.is_finite())
            && self.t2.iter().flatten().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum End {
    Left,
    Right,
}

impl End {
    pub fn index(self) -> usize {
        match self {
            End::Left => 0,
            End::Right => 1,
        }
    }

    /// Outward normal of the interval at this end.
    pub fn normal(self) -> f64 {
        match self {
            End::Left => -1.0,
            End::Right => 1.0,
        }
    }

    pub fn both() -> [End; 2] {
        [End::Left, End::Right]
    }

    pub fn name(self) -> &'static str {
        match self {
            End::Left => "left",
            End::Right => "right",
        }
    }
}

/// A boundary degree of freedom: the `deriv`-th longitudinal derivative of a
/// scalar field evaluated at an endpoint.
pub type BcDof = (FieldId, usize);

/// Essential/natural boundary selection per endpoint and per boundary DOF.
///
/// Every DOF not listed is `Free` (the natural condition applies), so each DOF
/// carries exactly one condition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySpec {
    anchors: std::collections::BTreeMap<(usize, FieldId, usize), f64>,
}

impl BoundarySpec {
    pub fn free() -> BoundarySpec {
        BoundarySpec::default()
    }

    pub fn anchor(&mut self, end: End, f: FieldId, deriv: usize, value: f64) -> &mut Self {
        self.anchors.insert((end.index(), f, deriv), value);
        self
    }

    pub fn anchored(&self, end: End, f: FieldId, deriv: usize) -> Option<f64> {
        self.anchors.get(&(end.index(), f, deriv)).copied()
    }

    pub fn anchors_at(&self, end: End, f: FieldId) -> Vec<(usize, f64)> {
        self.anchors
            .iter()
            .filter(|((e, ff, _), _)| *e == end.index() && *ff == f)
            .map(|((_, _, d), v)| (*d, *v))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (End, FieldId, usize, f64)> + '_ {
        self.anchors.iter().map(|((e, f, d), v)| {
            let end = if *e == 0 { End::Left } else { End::Right };
            (end, *f, *d, *v)
        })
    }

    pub fn count(&self) -> usize {
        self.anchors.len()
    }

    pub fn has_anchor_on_derivative(&self, f_kind: FieldKind, deriv: usize) -> bool {
        self.iter().any(|(_, f, d, _)| f.indices().0 == f_kind && d == deriv)
    }
}

/// Fully clamped end: every boundary DOF the configuration actually carries
/// is anchored to zero there.
pub fn clamped(config: &BeamConfig, end: End) -> BoundarySpec {
    let mut bcs = BoundarySpec::free();
    clamp(&mut bcs, config, end);
    bcs
}

/// Add a full zero clamp at `end` to an existing boundary spec.
pub fn clamp(bcs: &mut BoundarySpec, config: &BeamConfig, end: End) {
    let model = crate::energy::EnergyModel::full(config);
    for f in &model.fields {
        for d in 0..model.field_order(*f) {
            bcs.anchor(end, *f, d, 0.0);
        }
    }
}

/// Outcome of configuration validation. An empty violation list means the
/// setup is solvable; notes carry non-blocking interpretation remarks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a configuration and its boundary spec for solvability.
///
/// Report-style: never fails, returns the list of violations. The rigid-mode
/// rank test runs on a coarse grid; the solver repeats it at full resolution.
pub fn validate_config(config: &BeamConfig, bcs: &BoundarySpec) -> ValidationReport {
    let mut report = validate_config_core(config, bcs);
    if report.is_ok() {
        // Coarse rank test: rigid/affine modes left free show up as zero
        // pivots already on a small grid for constant-coefficient operators.
        let n_test = (2 * config.operator_order() + 9).max(11);
        match crate::solver::rank_check(config, bcs, n_test) {
            Ok(()) => {}
            Err(Error::IllPosedAnchoring(msg)) => {
                report
                    .violations
                    .push(format!("insufficient anchoring: {msg}"));
            }
            Err(e) => report.violations.push(format!("rank test failed: {e}")),
        }
    }
    report
}

/// Everything except the rank test; subsystem assembly substitutes its own
/// rank check over the restricted field set.
pub(crate) fn validate_config_core(config: &BeamConfig, bcs: &BoundarySpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    for (name, value) in [
        ("a", config.a),
        ("b", config.b),
        ("c", config.c),
        ("d", config.d),
        ("e", config.e),
    ] {
        if !(value >= 0.0) || !value.is_finite() {
            v.push(format!("modulus {name} = {value} must be finite and nonnegative"));
        }
    }
    if !(config.length > 0.0) || !config.length.is_finite() {
        v.push(format!("degenerate length L = {}", config.length));
    }
    if !(config.ell4_over_12 >= 0.0) || !config.ell4_over_12.is_finite() {
        v.push(format!(
            "transversal moment ell4_over_12 = {} must be finite and nonnegative",
            config.ell4_over_12
        ));
    }

    match config.regime {
        Regime::SemiHolonomic => {
            if config.frozen_n_jalpha.is_none() {
                v.push("missing frozen N constants (semi-holonomic regime)".into());
            }
            if config.frozen_u_alpha_slope.is_some() {
                v.push("frozen displacement slopes are a holonomic-only input".into());
            }
            if config.e != 0.0 {
                report
                    .notes
                    .push("modulus e is inactive in the semi-holonomic regime".into());
            }
        }
        Regime::Holonomic => {
            if config.frozen_u_alpha_slope.is_none() {
                v.push("missing frozen displacement slope constants (holonomic regime)".into());
            }
            if config.frozen_n_jalpha.is_some() {
                v.push("frozen N constants are a semi-holonomic-only input".into());
            }
            if config.d != 0.0 || config.e != 0.0 {
                report
                    .notes
                    .push("moduli d, e are inactive in the holonomic regime".into());
            }
        }
        Regime::NonHolonomic => {
            if config.frozen_n_jalpha.is_some() || config.frozen_u_alpha_slope.is_some() {
                v.push("frozen constants are not used in the non-holonomic regime".into());
            }
        }
    }

    // Anchors must target boundary DOFs that exist for the regime and the
    // given moduli: the k-th derivative of a field is a boundary DOF exactly
    // when the energy carries that field at order k + 1 or higher. Fields of
    // order zero (e.g. the micro-curvature when c = 0) are algebraically
    // slaved in the bulk and cannot be anchored at all.
    if v.is_empty() {
        let model = crate::energy::EnergyModel::full(config);
        for (end, f, deriv, _) in bcs.iter() {
            let order = if model.fields.contains(&f) {
                model.field_order(f)
            } else {
                0
            };
            if deriv >= order {
                v.push(format!(
                    "anchor on {} (derivative {deriv}) at the {} end is not a boundary DOF of this {} configuration",
                    f.label(),
                    end.name(),
                    config.regime.name()
                ));
            }
        }
    }

    if config.regime == Regime::SemiHolonomic
        && config.c > 0.0
        && !bcs.has_anchor_on_derivative(FieldKind::P, 1)
    {
        report.notes.push(
            "no anchoring on the micro-distortion slope: frozen N constants rely on at least one such anchor"
                .into(),
        );
    }
    if config.regime == Regime::Holonomic
        && config.operator_order() >= 4
        && !bcs.has_anchor_on_derivative(FieldKind::U, 1)
    {
        report.notes.push(
            "no anchoring on the displacement slope: frozen slope constants rely on at least one such anchor"
                .into(),
        );
    }
    report.notes.push(
        "transversal micro-force slices [f2]^{j,alpha} with j != 1 are read as [f2]^{1,alpha} for free-index consistency in the transversal moment rows"
            .into(),
    );

    report
}

/// Rebuild the 3D displacement and micro-distortion at a transversal offset.
///
/// Evaluates the truncated transversal expansion at the grid point nearest to
/// the longitudinal coordinate `x1`:
/// `u3d^i = u^i + P^i_alpha X^alpha`, `P3d^i_j = P^i_j + N^i_{j,alpha} X^alpha`.
pub fn reconstruct_3d(
    state: &FieldState,
    config: &BeamConfig,
    x1: f64,
    x2: f64,
    x3: f64,
) -> Result<([f64; 3], [[f64; 3]; 3])> {
    let half = config.transversal_half_extent();
    let tol = 1e-12 * (1.0 + half);
    if x2.abs() > half + tol || x3.abs() > half + tol {
        return Err(Error::TransversalOutOfRange {
            x2,
            x3,
            half_extent: half,
        });
    }
    let i0 = state.grid.nearest(x1);
    let xt = [x2, x3];

    let mut u3d = [0.0; 3];
    for i in 1..=3 {
        let mut v = state.get(FieldId::u(i), i0);
        for (a, &xa) in xt.iter().enumerate() {
            v += state.get(FieldId::p(i, a + 2), i0) * xa;
        }
        u3d[i - 1] = v;
    }
    let mut p3d = [[0.0; 3]; 3];
    for i in 1..=3 {
        for j in 1..=3 {
            let mut v = state.get(FieldId::p(i, j), i0);
            for (a, &xa) in xt.iter().enumerate() {
                v += state.get(FieldId::n(i, j, a + 2), i0) * xa;
            }
            p3d[i - 1][j - 1] = v;
        }
    }
    Ok((u3d, p3d))
}

/// Fill the derived fields of a solved semi-holonomic or holonomic state.
///
/// Semi-holonomic: `N^i_{j1} := P^i_{j,1}` (finite differences) and
/// `N^i_{j,alpha} :=` frozen constants. Holonomic additionally derives
/// `P^i_1 := u^i_{,1}`, `P^i_alpha := slope * X` (base value zero) and the
/// second-gradient `N` entries.
pub fn complete_derived_fields(state: &mut FieldState, config: &BeamConfig) {
    let grid = state.grid;
    let h = grid.h();
    match config.regime {
        Regime::NonHolonomic => {}
        Regime::SemiHolonomic => {
            for i in 1..=3 {
                for j in 1..=3 {
                    let dp = crate::fd::derivative(state.field(FieldId::p(i, j)), h, 1);
                    state.field_mut(FieldId::n(i, j, 1)).copy_from_slice(&dp);
                    for alpha in 2..=3 {
                        let v = config.frozen_n(i, j, alpha);
                        state.field_mut(FieldId::n(i, j, alpha)).fill(v);
                    }
                }
            }
        }
        Regime::Holonomic => {
            for i in 1..=3 {
                let du = crate::fd::derivative(state.field(FieldId::u(i)), h, 1);
                let ddu = crate::fd::derivative(state.field(FieldId::u(i)), h, 2);
                state.field_mut(FieldId::p(i, 1)).copy_from_slice(&du);
                state.field_mut(FieldId::n(i, 1, 1)).copy_from_slice(&ddu);
                for alpha in 2..=3 {
                    let s = config.frozen_slope(i, alpha);
                    for idx in 0..grid.n {
                        let x = grid.x(idx);
                        state.set(FieldId::p(i, alpha), idx, s * x);
                    }
                    state.field_mut(FieldId::n(i, 1, alpha)).fill(s);
                    state.field_mut(FieldId::n(i, alpha, 1)).fill(s);
                }
                for alpha in 2..=3 {
                    for beta in 2..=3 {
                        state.field_mut(FieldId::n(i, alpha, beta)).fill(0.0);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_order_follows_kinematic_freedom() {
        assert!(Regime::NonHolonomic > Regime::SemiHolonomic);
        assert!(Regime::SemiHolonomic > Regime::Holonomic);
    }

    #[test]
    fn field_labels_roundtrip() {
        for f in FieldId::all() {
            assert_eq!(FieldId::parse(&f.label()), Some(f));
        }
        assert_eq!(FieldId::n(1, 1, 1).label(), "N^1_11");
        assert_eq!(FieldId::p(1, 2).deriv_label(1), "P^1_2,1");
    }

    #[test]
    fn well_posed_default_passes_validation() {
        // Clamping the section (displacement and micro-distortion) at one end
        // removes every rigid and affine null mode when all moduli are
        // positive.
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
            for j in 1..=3 {
                bcs.anchor(End::Left, FieldId::p(i, j), 0, 0.0);
            }
        }
        let report = validate_config(&config, &bcs);
        assert!(report.is_ok(), "unexpected violations: {:?}", report.violations);
    }

    #[test]
    fn anchoring_only_the_displacement_leaves_rotation_null_modes() {
        // A rigid rotation pairs an affine displacement with a constant skew
        // micro-distortion at zero energy; one displacement anchor cannot
        // remove it, and the rank test says so.
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let mut bcs = BoundarySpec::free();
        for i in 1..=3 {
            bcs.anchor(End::Left, FieldId::u(i), 0, 0.0);
        }
        let report = validate_config(&config, &bcs);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("insufficient anchoring")));
    }

    #[test]
    fn semi_holonomic_without_frozen_constants_is_flagged() {
        let mut config = BeamConfig::semi_holonomic(1.0, 1.0, 0.0, 1.0, 1.0, 0.0);
        config.frozen_n_jalpha = None;
        let report = validate_config(&config, &BoundarySpec::free());
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("missing frozen N constants")));
    }

    #[test]
    fn zero_length_is_flagged() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        let report = validate_config(&config, &BoundarySpec::free());
        assert!(report.violations.iter().any(|v| v.contains("degenerate length")));
    }

    #[test]
    fn validation_is_pure() {
        let config = BeamConfig::non_holonomic(1.0, 0.5, 0.0, 2.0, 1.0, 3.0, 0.1);
        let mut bcs = BoundarySpec::free();
        bcs.anchor(End::Left, FieldId::u(1), 0, 0.0);
        let r1 = validate_config(&config, &bcs);
        let r2 = validate_config(&config, &bcs);
        assert_eq!(r1, r2);
    }

    #[test]
    fn reconstruct_rigid_translation() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        state.fill_with(FieldId::u(1), |_| 1.0);
        let (u3d, _) = reconstruct_3d(&state, &config, 0.37, 0.2, -0.1).unwrap();
        assert_eq!(u3d, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstruct_micro_distortion_offset() {
        // P^1_2 = 2 at transversal offset X^2 = 0.5 contributes 1 to u^1.
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        state.fill_with(FieldId::p(1, 2), |_| 2.0);
        let (u3d, _) = reconstruct_3d(&state, &config, 0.0, 0.5, 0.0).unwrap();
        assert_eq!(u3d, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstruct_micro_curvature_offset() {
        // N^1_12 = 3 at X^2 = 1 contributes 3 to P3d^1_1.
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0 / 3.0);
        assert!(config.transversal_half_extent() >= 1.0);
        let mut state = FieldState::zeros(Grid::new(11, 1.0));
        state.fill_with(FieldId::n(1, 1, 2), |_| 3.0);
        let (_, p3d) = reconstruct_3d(&state, &config, 0.5, 1.0, 0.0).unwrap();
        assert_eq!(p3d[0][0], 3.0);
    }

    #[test]
    fn reconstruct_rejects_out_of_range_offsets() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let state = FieldState::zeros(Grid::new(11, 1.0));
        assert!(reconstruct_3d(&state, &config, 0.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn reconstruct_is_linear_in_the_state() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let grid = Grid::new(11, 1.0);
        let mut s1 = FieldState::zeros(grid);
        let mut s2 = FieldState::zeros(grid);
        s1.fill_with(FieldId::u(2), |x| x * x);
        s1.fill_with(FieldId::n(2, 1, 3), |x| 1.0 - x);
        s2.fill_with(FieldId::p(2, 2), |x| x.sin());
        s2.fill_with(FieldId::u(1), |x| 0.5 * x);
        let combo = s1.lin_comb(2.0, &s2, -3.0);
        let (x2, x3) = (0.11, -0.07);
        let (ua, pa) = reconstruct_3d(&s1, &config, 0.4, x2, x3).unwrap();
        let (ub, pb) = reconstruct_3d(&s2, &config, 0.4, x2, x3).unwrap();
        let (uc, pc) = reconstruct_3d(&combo, &config, 0.4, x2, x3).unwrap();
        for i in 0..3 {
            assert!((uc[i] - (2.0 * ua[i] - 3.0 * ub[i])).abs() < 1e-12);
            for j in 0..3 {
                assert!((pc[i][j] - (2.0 * pa[i][j] - 3.0 * pb[i][j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruct_at_axis_returns_the_state() {
        let config = BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0);
        let grid = Grid::new(11, 1.0);
        let mut state = FieldState::zeros(grid);
        state.fill_with(FieldId::u(3), |x| x.cos());
        state.fill_with(FieldId::p(3, 2), |x| x * x - 0.3);
        let x1 = grid.x(4);
        let (u3d, p3d) = reconstruct_3d(&state, &config, x1, 0.0, 0.0).unwrap();
        assert_eq!(u3d[2], state.get(FieldId::u(3), 4));
        assert_eq!(p3d[2][1], state.get(FieldId::p(3, 2), 4));
    }
}
