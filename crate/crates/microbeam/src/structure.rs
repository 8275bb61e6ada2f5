//! Dependency graph of scalar kinematic components and its block structure.
//!
//! Nodes are scalar field components and the derivatives that carry an energy
//! cross-coupling; two nodes share an edge when one is the longitudinal
//! derivative of the other or when the mixed second derivative of the
//! internal energy density in the pair is nonzero (labelled with minus one
//! half that value). Connected components are independent ODE subsystems.

use std::collections::{BTreeMap, BTreeSet};

use crate::assembly::LinearBvp;
use crate::energy::EnergyModel;
use crate::error::Result;
use crate::model::{BeamConfig, FieldId};

/// A scalar component or one of its longitudinal derivatives.
pub type GraphNode = (FieldId, usize);

pub fn node_label(node: GraphNode) -> String {
    node.0.deriv_label(node.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeLabel {
    /// The nodes are consecutive derivatives of the same field.
    Derivative,
    /// Energy coupling `-1/2 d^2 Psi / (dX dY)`.
    Coupling(f64),
}

impl std::fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgeLabel::Derivative => write!(f, "d1"),
            EdgeLabel::Coupling(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub a: GraphNode,
    pub b: GraphNode,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone)]
pub struct DependencyGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
}

impl DependencyGraph {
    pub fn node_labels(&self) -> Vec<String> {
        self.nodes.iter().map(|n| node_label(*n)).collect()
    }

    pub fn has_edge(&self, a: GraphNode, b: GraphNode) -> Option<EdgeLabel> {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.label)
    }

    /// Graphviz rendering with edge labels, deterministic ordering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph dependency {\n");
        for n in &self.nodes {
            out.push_str(&format!("    \"{}\";\n", node_label(*n)));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "    \"{}\" -- \"{}\" [label=\"{}\"];\n",
                node_label(e.a),
                node_label(e.b),
                e.label
            ));
        }
        out.push_str("}\n");
        out
    }

    /// Plain labelled edge list, one `a<TAB>b<TAB>label` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                node_label(e.a),
                node_label(e.b),
                e.label
            ));
        }
        out
    }
}

/// Build the dependency graph of the configured regime.
///
/// Base components are always nodes; a derivative becomes a node exactly when
/// it carries a nonzero energy cross-coupling, which reproduces the printed
/// component inventories (five traction nodes, nine bending nodes).
pub fn build_graph(config: &BeamConfig) -> DependencyGraph {
    let model = EnergyModel::full(config);
    build_graph_from_model(&model)
}

pub(crate) fn build_graph_from_model(model: &EnergyModel) -> DependencyGraph {
    let mut couplings: BTreeMap<(GraphNode, GraphNode), f64> = BTreeMap::new();
    for term in &model.terms {
        for (idx_a, &(ca, fa, oa)) in term.parts.iter().enumerate() {
            for &(cb, fb, ob) in term.parts.iter().skip(idx_a + 1) {
                let na = (fa, oa);
                let nb = (fb, ob);
                if na == nb {
                    continue;
                }
                let key = if na < nb { (na, nb) } else { (nb, na) };
                // -1/2 d^2/dXdY of weight * (... + ca X + cb Y + ...)^2.
                *couplings.entry(key).or_insert(0.0) += -term.weight * ca * cb;
            }
        }
    }
    couplings.retain(|_, v| *v != 0.0);

    let mut nodes: BTreeSet<GraphNode> = model.fields.iter().map(|f| (*f, 0)).collect();
    for ((a, b), _) in &couplings {
        nodes.insert(*a);
        nodes.insert(*b);
    }

    let mut edges: Vec<Edge> = couplings
        .iter()
        .map(|((a, b), v)| Edge {
            a: *a,
            b: *b,
            label: EdgeLabel::Coupling(*v),
        })
        .collect();
    for node in &nodes {
        let up = (node.0, node.1 + 1);
        if nodes.contains(&up) {
            edges.push(Edge {
                a: *node,
                b: up,
                label: EdgeLabel::Derivative,
            });
        }
    }
    edges.sort_by(|x, y| {
        (node_label(x.a), node_label(x.b)).cmp(&(node_label(y.a), node_label(y.b)))
    });

    DependencyGraph {
        nodes: nodes.into_iter().collect(),
        edges,
    }
}

/// Connected components, deterministically ordered: nodes sorted by label
/// inside each component, components sorted by their smallest label.
pub fn connected_components(graph: &DependencyGraph) -> Vec<Vec<GraphNode>> {
    let index: BTreeMap<GraphNode, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, i))
        .collect();
    let mut adj = vec![Vec::new(); graph.nodes.len()];
    for e in &graph.edges {
        let (ia, ib) = (index[&e.a], index[&e.b]);
        adj[ia].push(ib);
        adj[ib].push(ia);
    }
    let mut seen = vec![false; graph.nodes.len()];
    let mut components = Vec::new();
    for start in 0..graph.nodes.len() {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(graph.nodes[i]);
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_by_key(|n| node_label(*n));
        components.push(comp);
    }
    components.sort_by_key(|c| node_label(c[0]));
    components
}

/// Check that the assembled operator carries no coupling between distinct
/// blocks of `partition` (coefficient-level scan of bulk rows and natural
/// flux rows). Fields missing from the partition count as their own block.
pub fn verify_block_structure(bvp: &LinearBvp, partition: &[Vec<GraphNode>]) -> bool {
    let mut block_of: BTreeMap<FieldId, usize> = BTreeMap::new();
    for (b, comp) in partition.iter().enumerate() {
        for (f, d) in comp {
            if *d == 0 {
                block_of.insert(*f, b);
            }
        }
    }
    let mut next = partition.len();
    let mut block = |f: FieldId, table: &mut BTreeMap<FieldId, usize>| -> usize {
        if let Some(b) = table.get(&f) {
            *b
        } else {
            let b = next;
            next += 1;
            table.insert(f, b);
            b
        }
    };
    for eq in &bvp.bulk {
        let row_block = block(eq.unknown, &mut block_of);
        for c in &eq.coeffs {
            if c.value != 0.0 && block(c.unknown, &mut block_of) != row_block {
                return false;
            }
        }
    }
    for rows in &bvp.boundary {
        for row in rows {
            if let crate::assembly::BoundaryCondition::Natural { flux, .. } = &row.condition {
                let row_block = block(row.field, &mut block_of);
                for c in flux {
                    if c.value != 0.0 && block(c.unknown, &mut block_of) != row_block {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Write the labelled edge list to a file.
pub fn write_edge_list(graph: &DependencyGraph, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, graph.to_edge_list())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_full;
    use crate::model::{BoundarySpec, End, LoadSet};

    fn all_positive() -> BeamConfig {
        BeamConfig::non_holonomic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 / 12.0)
    }

    fn find_component(components: &[Vec<GraphNode>], node: GraphNode) -> Vec<String> {
        components
            .iter()
            .find(|c| c.contains(&node))
            .map(|c| c.iter().map(|n| node_label(*n)).collect())
            .unwrap_or_default()
    }

    #[test]
    fn traction_component_is_the_five_node_chain() {
        let config = all_positive();
        let graph = build_graph(&config);
        let components = connected_components(&graph);
        let comp = find_component(&components, (FieldId::u(1), 0));
        assert_eq!(
            comp,
            vec!["N^1_11", "P^1_1", "P^1_1,1", "u^1", "u^1,1"],
            "traction component mismatch"
        );
        // Chain labels: d1, d, d1, e.
        assert_eq!(
            graph.has_edge((FieldId::u(1), 0), (FieldId::u(1), 1)),
            Some(EdgeLabel::Derivative)
        );
        match graph.has_edge((FieldId::u(1), 1), (FieldId::p(1, 1), 0)) {
            Some(EdgeLabel::Coupling(v)) => assert!((v - config.d).abs() < 1e-14),
            other => panic!("missing d edge: {other:?}"),
        }
        assert_eq!(
            graph.has_edge((FieldId::p(1, 1), 0), (FieldId::p(1, 1), 1)),
            Some(EdgeLabel::Derivative)
        );
        match graph.has_edge((FieldId::p(1, 1), 1), (FieldId::n(1, 1, 1), 0)) {
            Some(EdgeLabel::Coupling(v)) => assert!((v - config.e).abs() < 1e-14),
            other => panic!("missing e edge: {other:?}"),
        }
    }

    #[test]
    fn bending_component_has_nine_nodes() {
        let config = all_positive();
        let graph = build_graph(&config);
        let components = connected_components(&graph);
        let comp = find_component(&components, (FieldId::u(2), 0));
        assert_eq!(
            comp,
            vec![
                "N^1_12",
                "N^1_21",
                "N^2_11",
                "P^1_2",
                "P^1_2,1",
                "P^2_1",
                "P^2_1,1",
                "u^2",
                "u^2,1"
            ]
        );
        // The transversal-moment coupling activates N^1_12.
        match graph.has_edge((FieldId::p(1, 2), 1), (FieldId::n(1, 1, 2), 0)) {
            Some(EdgeLabel::Coupling(v)) => {
                assert!((v - config.d * config.ell4_over_12).abs() < 1e-14)
            }
            other => panic!("missing transversal coupling: {other:?}"),
        }
    }

    #[test]
    fn vanishing_e_detaches_the_micro_curvature_from_traction() {
        let mut config = all_positive();
        config.e = 0.0;
        let graph = build_graph(&config);
        assert_eq!(graph.has_edge((FieldId::p(1, 1), 1), (FieldId::n(1, 1, 1), 0)), None);
        let components = connected_components(&graph);
        let comp = find_component(&components, (FieldId::u(1), 0));
        assert!(!comp.contains(&"N^1_11".to_string()));
    }

    #[test]
    fn vanishing_d_isolates_the_displacements() {
        let mut config = all_positive();
        config.d = 0.0;
        let graph = build_graph(&config);
        let components = connected_components(&graph);
        for i in 1..=3 {
            let comp = find_component(&components, (FieldId::u(i), 0));
            assert!(
                comp.iter().all(|l| l.starts_with(&format!("u^{i}"))),
                "u^{i} component leaks: {comp:?}"
            );
        }
    }

    #[test]
    fn no_couplings_means_singleton_base_components() {
        let config = BeamConfig::non_holonomic(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        // Only b |N|^2 survives: diagonal, no edges at all.
        let graph = build_graph(&config);
        assert!(graph.edges.is_empty());
        let components = connected_components(&graph);
        assert_eq!(components.len(), crate::model::NUM_FIELDS);
    }

    #[test]
    fn graph_is_monotone_in_the_moduli() {
        let lean = BeamConfig::non_holonomic(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.1);
        let rich = BeamConfig::non_holonomic(1.0, 0.5, 1.0, 1.0, 0.5, 1.0, 0.1);
        let g_lean = build_graph(&lean);
        let g_rich = build_graph(&rich);
        for e in &g_lean.edges {
            assert!(
                g_rich.has_edge(e.a, e.b).is_some(),
                "edge {} -- {} lost",
                node_label(e.a),
                node_label(e.b)
            );
        }
    }

    #[test]
    fn assembled_operator_respects_the_graph_partition() {
        let config = all_positive();
        let mut bcs = BoundarySpec::free();
        for f in FieldId::all() {
            bcs.anchor(End::Left, f, 0, 0.0);
        }
        let bvp = assemble_full(&config, &LoadSet::zero(), &bcs).unwrap();
        let partition = connected_components(&build_graph(&config));
        assert!(verify_block_structure(&bvp, &partition));
        // One merged block is vacuously consistent.
        let merged: Vec<GraphNode> = partition.iter().flatten().copied().collect();
        assert!(verify_block_structure(&bvp, &[merged]));
        // Splitting u^1 from P^1_1 breaks with d > 0.
        let bad = vec![
            vec![(FieldId::u(1), 0)],
            vec![(FieldId::p(1, 1), 0), (FieldId::n(1, 1, 1), 0)],
        ];
        assert!(!verify_block_structure(&bvp, &bad));
    }

    #[test]
    fn dot_export_is_deterministic_and_labelled() {
        let config = all_positive();
        let graph = build_graph(&config);
        let dot1 = graph.to_dot();
        let dot2 = build_graph(&config).to_dot();
        assert_eq!(dot1, dot2);
        assert!(dot1.contains("\"u^1,1\" -- \"P^1_1\"") || dot1.contains("\"P^1_1\" -- \"u^1,1\""));
    }
}
