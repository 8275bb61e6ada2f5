//! Declarative run specification (TOML) and its mapping onto model types.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use microbeam::model::clamp;
use microbeam::{BeamConfig, BoundarySpec, End, FieldId, LoadFn, LoadSet, Regime};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub preset: Vec<PresetSpec>,
    #[serde(default)]
    pub load: Vec<LoadSpec>,
    #[serde(default)]
    pub anchor: Vec<AnchorSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelSpec {
    pub regime: String,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub e: f64,
    pub length: f64,
    #[serde(default)]
    pub ell4_over_12: f64,
    #[serde(default)]
    pub frozen_n: Vec<FrozenN>,
    #[serde(default)]
    pub frozen_slope: Vec<FrozenSlope>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenN {
    pub i: usize,
    pub j: usize,
    pub alpha: usize,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenSlope {
    pub i: usize,
    pub alpha: usize,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: microbeam::solver::DEFAULT_GRID,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PresetSpec {
    pub name: String,
    #[serde(default)]
    pub plane: Option<usize>,
    #[serde(default)]
    pub component: Option<usize>,
    pub magnitude: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LoadSpec {
    /// `f0`, `f1`, `f2` (bulk) or `t0`, `t1`, `t2` (endpoint tractions).
    pub target: String,
    /// Tensor indices, 1-based: one for rank 1, two for rank 2, three for
    /// rank 3.
    pub component: Vec<usize>,
    #[serde(default)]
    pub end: Option<String>,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AnchorSpec {
    pub end: String,
    /// Field label with optional primes for derivatives, e.g. `u^1`,
    /// `P^1_1'`, `u^2''`.
    pub dof: String,
    pub value: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub emit: Vec<String>,
}

/// Everything a run needs, decoded and cross-checked.
pub struct ResolvedSpec {
    pub config: BeamConfig,
    pub loads: LoadSet,
    pub bcs: BoundarySpec,
    pub n: usize,
    pub emit: Vec<Emit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emit {
    Fields,
    Energy,
    Defects,
    Graph,
}

fn parse_end(s: &str) -> Result<End> {
    match s {
        "left" => Ok(End::Left),
        "right" => Ok(End::Right),
        other => bail!("unknown end '{other}' (expected 'left' or 'right')"),
    }
}

/// Parse a boundary DOF label: a field label followed by zero, one or two
/// primes for the derivative order.
pub fn parse_dof(s: &str) -> Result<(FieldId, usize)> {
    let deriv = s.chars().rev().take_while(|c| *c == '\'').count();
    let base = &s[..s.len() - deriv];
    let field =
        FieldId::parse(base).ok_or_else(|| anyhow!("unknown field label '{base}' in '{s}'"))?;
    if deriv > 2 {
        bail!("at most two derivative primes are supported ('{s}')");
    }
    Ok((field, deriv))
}

fn slot_of(target: &str, component: &[usize]) -> Result<FieldId> {
    let check = |v: usize| -> Result<usize> {
        if (1..=3).contains(&v) {
            Ok(v)
        } else {
            bail!("tensor index {v} out of range 1..=3")
        }
    };
    match (target, component.len()) {
        ("f0" | "t0", 1) => Ok(FieldId::u(check(component[0])?)),
        ("f1" | "t1", 2) => Ok(FieldId::p(check(component[0])?, check(component[1])?)),
        ("f2" | "t2", 3) => Ok(FieldId::n(
            check(component[0])?,
            check(component[1])?,
            check(component[2])?,
        )),
        (t @ ("f0" | "t0" | "f1" | "t1" | "f2" | "t2"), k) => {
            bail!("target '{t}' expects {} component indices, got {k}", match t {
                "f0" | "t0" => 1,
                "f1" | "t1" => 2,
                _ => 3,
            })
        }
        (other, _) => bail!("unknown load target '{other}'"),
    }
}

impl RunSpec {
    pub fn parse(text: &str) -> Result<RunSpec> {
        toml::from_str(text).context("spec file does not match the expected schema")
    }

    pub fn resolve(&self) -> Result<ResolvedSpec> {
        let regime = match self.model.regime.as_str() {
            "non-holonomic" => Regime::NonHolonomic,
            "semi-holonomic" => Regime::SemiHolonomic,
            "holonomic" => Regime::Holonomic,
            other => bail!("unknown regime '{other}'"),
        };
        let mut frozen_n = None;
        if !self.model.frozen_n.is_empty() || regime == Regime::SemiHolonomic {
            let mut table = [[[0.0f64; 2]; 3]; 3];
            for entry in &self.model.frozen_n {
                if !(1..=3).contains(&entry.i)
                    || !(1..=3).contains(&entry.j)
                    || !(2..=3).contains(&entry.alpha)
                {
                    bail!("frozen-n indices out of range: {entry:?}");
                }
                table[entry.i - 1][entry.j - 1][entry.alpha - 2] = entry.value;
            }
            frozen_n = Some(table);
        }
        let mut frozen_slope = None;
        if !self.model.frozen_slope.is_empty() || regime == Regime::Holonomic {
            let mut table = [[0.0f64; 2]; 3];
            for entry in &self.model.frozen_slope {
                if !(1..=3).contains(&entry.i) || !(2..=3).contains(&entry.alpha) {
                    bail!("frozen-slope indices out of range: {entry:?}");
                }
                table[entry.i - 1][entry.alpha - 2] = entry.value;
            }
            frozen_slope = Some(table);
        }
        let config = BeamConfig {
            a: self.model.a,
            b: self.model.b,
            c: self.model.c,
            d: self.model.d,
            e: self.model.e,
            length: self.model.length,
            ell4_over_12: self.model.ell4_over_12,
            regime,
            frozen_n_jalpha: frozen_n,
            frozen_u_alpha_slope: frozen_slope,
        };

        let mut loads = LoadSet::zero();
        let mut bcs = BoundarySpec::free();
        for preset in &self.preset {
            apply_preset(preset, &config, &mut loads, &mut bcs)?;
        }
        for load in &self.load {
            apply_load(load, &mut loads)?;
        }
        for anchor in &self.anchor {
            let (field, deriv) = parse_dof(&anchor.dof)?;
            bcs.anchor(parse_end(&anchor.end)?, field, deriv, anchor.value);
        }

        let mut emit = Vec::new();
        for item in &self.output.emit {
            emit.push(match item.as_str() {
                "fields" => Emit::Fields,
                "energy" => Emit::Energy,
                "defects" => Emit::Defects,
                "graph" => Emit::Graph,
                other => bail!("unknown output kind '{other}'"),
            });
        }
        if emit.is_empty() {
            emit = vec![Emit::Fields, Emit::Energy];
        }

        Ok(ResolvedSpec {
            config,
            loads,
            bcs,
            n: self.grid.n,
            emit,
        })
    }
}

fn apply_preset(
    preset: &PresetSpec,
    config: &BeamConfig,
    loads: &mut LoadSet,
    bcs: &mut BoundarySpec,
) -> Result<()> {
    match preset.name.as_str() {
        // Clamp the whole section at the left end, pull the tip transversally.
        "cantilever-tip-force" => {
            let plane = preset.plane.unwrap_or(2);
            if !(2..=3).contains(&plane) {
                bail!("cantilever-tip-force: plane must be 2 or 3");
            }
            clamp(bcs, config, End::Left);
            *loads.traction_mut(End::Right, FieldId::u(plane)) = preset.magnitude;
        }
        // Uniform body force on one displacement component.
        "uniform-f0" => {
            let component = preset.component.unwrap_or(1);
            if !(1..=3).contains(&component) {
                bail!("uniform-f0: component must be 1, 2 or 3");
            }
            *loads.bulk_mut(FieldId::u(component)) = LoadFn::Constant(preset.magnitude);
        }
        other => bail!("unknown preset '{other}'"),
    }
    Ok(())
}

fn apply_load(load: &LoadSpec, loads: &mut LoadSet) -> Result<()> {
    let slot = slot_of(&load.target, &load.component)?;
    if load.target.starts_with('t') {
        let end = parse_end(
            load.end
                .as_deref()
                .ok_or_else(|| anyhow!("traction '{}' needs an 'end'", load.target))?,
        )?;
        let value = load
            .value
            .ok_or_else(|| anyhow!("traction '{}' needs a 'value'", load.target))?;
        *loads.traction_mut(end, slot) = value;
        return Ok(());
    }
    if load.end.is_some() {
        bail!("bulk load '{}' does not take an 'end'", load.target);
    }
    let kind = load.kind.as_deref().unwrap_or("constant");
    let profile = match kind {
        "constant" => LoadFn::Constant(
            load.value
                .ok_or_else(|| anyhow!("constant load needs a 'value'"))?,
        ),
        "polynomial" => LoadFn::Polynomial(
            load.coefficients
                .clone()
                .ok_or_else(|| anyhow!("polynomial load needs 'coefficients'"))?,
        ),
        "samples" => LoadFn::Samples(
            load.samples
                .clone()
                .ok_or_else(|| anyhow!("sampled load needs 'samples'"))?,
        ),
        other => bail!("unknown load kind '{other}'"),
    };
    *loads.bulk_mut(slot) = profile;
    Ok(())
}
