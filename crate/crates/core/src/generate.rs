//! Seeded generators for the benchmark families: multiple knapsack, set
//! cover, maximum independent set and minimum vertex cover.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{LinearConstraint, MipInstance, Relation, Variable};

pub const MAX_ITEMS: usize = 200;
pub const MAX_SETS: usize = 300;
pub const MAX_NODES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("unknown family {0:?} (expected one of mk, sc, mis, mvc)")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    MultipleKnapsack,
    SetCover,
    MaxIndependentSet,
    MinVertexCover,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::MultipleKnapsack,
        Family::SetCover,
        Family::MaxIndependentSet,
        Family::MinVertexCover,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Family::MultipleKnapsack => "mk",
            Family::SetCover => "sc",
            Family::MaxIndependentSet => "mis",
            Family::MinVertexCover => "mvc",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mk" | "multiple-knapsack" | "multiple_knapsack" => Ok(Family::MultipleKnapsack),
            "sc" | "set-cover" | "set_cover" => Ok(Family::SetCover),
            "mis" | "independent-set" | "max-independent-set" => Ok(Family::MaxIndependentSet),
            "mvc" | "vertex-cover" | "min-vertex-cover" => Ok(Family::MinVertexCover),
            _ => Err(GenerateError::UnknownFamily(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphModel {
    ErdosRenyi { edge_probability: f64 },
    BarabasiAlbert { affinity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstanceSpec {
    MultipleKnapsack { items: usize, knapsacks: usize },
    SetCover { rows: usize, cols: usize, density: f64 },
    MaxIndependentSet { nodes: usize, model: GraphModel },
    MinVertexCover { nodes: usize, model: GraphModel },
}

impl InstanceSpec {
    pub fn family(&self) -> Family {
        match self {
            InstanceSpec::MultipleKnapsack { .. } => Family::MultipleKnapsack,
            InstanceSpec::SetCover { .. } => Family::SetCover,
            InstanceSpec::MaxIndependentSet { .. } => Family::MaxIndependentSet,
            InstanceSpec::MinVertexCover { .. } => Family::MinVertexCover,
        }
    }

    /// Desk-scale defaults for a family.
    pub fn default_for(family: Family) -> Self {
        let graph = GraphModel::ErdosRenyi { edge_probability: 0.05 };
        match family {
            Family::MultipleKnapsack => InstanceSpec::MultipleKnapsack { items: 50, knapsacks: 5 },
            Family::SetCover => InstanceSpec::SetCover {
                rows: 80,
                cols: 150,
                density: 0.2,
            },
            Family::MaxIndependentSet => InstanceSpec::MaxIndependentSet { nodes: 80, model: graph },
            Family::MinVertexCover => InstanceSpec::MinVertexCover { nodes: 80, model: graph },
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let err = |m: String| Err(GenerateError::OutOfRange(m));
        match *self {
            InstanceSpec::MultipleKnapsack { items, knapsacks } => {
                if items == 0 || items > MAX_ITEMS {
                    return err(format!("items = {items} not in 1..={MAX_ITEMS}"));
                }
                if knapsacks == 0 || knapsacks > 20 {
                    return err(format!("knapsacks = {knapsacks} not in 1..=20"));
                }
            }
            InstanceSpec::SetCover { rows, cols, density } => {
                if cols == 0 || cols > MAX_SETS {
                    return err(format!("sets = {cols} not in 1..={MAX_SETS}"));
                }
                if rows == 0 || rows > 1000 {
                    return err(format!("elements = {rows} not in 1..=1000"));
                }
                if !(density > 0.0 && density <= 1.0) {
                    return err(format!("density = {density} not in (0, 1]"));
                }
            }
            InstanceSpec::MaxIndependentSet { nodes, model } | InstanceSpec::MinVertexCover { nodes, model } => {
                if !(2..=MAX_NODES).contains(&nodes) {
                    return err(format!("nodes = {nodes} not in 2..={MAX_NODES}"));
                }
                match model {
                    GraphModel::ErdosRenyi { edge_probability: p } if !(0.0..=1.0).contains(&p) => {
                        return err(format!("edge probability {p} not in [0, 1]"));
                    }
                    GraphModel::BarabasiAlbert { affinity } if affinity == 0 || affinity >= nodes => {
                        return err(format!("affinity {affinity} not in 1..{nodes}"));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Deterministic instance for `(spec, seed)`.
pub fn generate(spec: &InstanceSpec, seed: u64) -> Result<MipInstance, GenerateError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = match *spec {
        InstanceSpec::MultipleKnapsack { items, knapsacks } => multiple_knapsack(&mut rng, items, knapsacks, seed),
        InstanceSpec::SetCover { rows, cols, density } => set_cover(&mut rng, rows, cols, density, seed),
        InstanceSpec::MaxIndependentSet { nodes, model } => {
            let edges = graph(&mut rng, nodes, model);
            independent_set(nodes, &edges, seed)
        }
        InstanceSpec::MinVertexCover { nodes, model } => {
            let edges = graph(&mut rng, nodes, model);
            vertex_cover(nodes, &edges, seed)
        }
    };
    Ok(inst)
}

fn multiple_knapsack(rng: &mut ChaCha8Rng, items: usize, knapsacks: usize, seed: u64) -> MipInstance {
    let weights: Vec<f64> = (0..items).map(|_| f64::from(rng.random_range(10..=100))).collect();
    let profits: Vec<f64> = (0..items).map(|_| f64::from(rng.random_range(10..=100))).collect();
    let total: f64 = weights.iter().sum();
    let capacities: Vec<f64> = (0..knapsacks)
        .map(|_| (0.5 * total / knapsacks as f64 * rng.random_range(0.8..1.2)).floor())
        .collect();

    let var = |i: usize, j: usize| i * knapsacks + j;
    let mut variables = Vec::with_capacity(items * knapsacks);
    let mut objective = Vec::with_capacity(items * knapsacks);
    for i in 0..items {
        for j in 0..knapsacks {
            variables.push(Variable::binary(format!("x_{i}_{j}")));
            objective.push(profits[i]);
        }
    }
    let mut constraints = Vec::new();
    for (j, &cap) in capacities.iter().enumerate() {
        constraints.push(LinearConstraint::new(
            format!("cap_{j}"),
            (0..items).map(|i| (var(i, j), weights[i])),
            Relation::Le,
            cap,
        ));
    }
    for i in 0..items {
        constraints.push(LinearConstraint::new(
            format!("assign_{i}"),
            (0..knapsacks).map(|j| (var(i, j), 1.0)),
            Relation::Le,
            1.0,
        ));
    }
    MipInstance::new_maximize(format!("mk_{items}x{knapsacks}_s{seed}"), variables, constraints, objective, 0.0)
        .expect("generated knapsack is valid")
}

fn set_cover(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64, seed: u64) -> MipInstance {
    let mut covers: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); rows];
    // every element and every set appears at least once
    for (i, c) in covers.iter_mut().enumerate() {
        c.insert(if i < cols { i } else { rng.random_range(0..cols) });
    }
    for j in rows..cols {
        covers[rng.random_range(0..rows)].insert(j);
    }
    let target = ((density * (rows * cols) as f64).round() as usize).max(rows);
    let mut nnz: usize = covers.iter().map(BTreeSet::len).sum();
    while nnz < target {
        let i = rng.random_range(0..rows);
        let j = rng.random_range(0..cols);
        if covers[i].insert(j) {
            nnz += 1;
        }
    }
    let costs: Vec<f64> = (0..cols).map(|_| f64::from(rng.random_range(1..=100))).collect();
    let variables = (0..cols).map(|j| Variable::binary(format!("y_{j}"))).collect();
    let constraints = covers
        .iter()
        .enumerate()
        .map(|(i, sets)| LinearConstraint::new(format!("cover_{i}"), sets.iter().map(|&j| (j, 1.0)), Relation::Ge, 1.0))
        .collect();
    MipInstance::new(format!("sc_{rows}x{cols}_s{seed}"), variables, constraints, costs, 0.0)
        .expect("generated set cover is valid")
}

/// Undirected simple graph as a sorted edge list with `u < v`.
pub fn graph(rng: &mut ChaCha8Rng, nodes: usize, model: GraphModel) -> Vec<(usize, usize)> {
    let mut edges = BTreeSet::new();
    match model {
        GraphModel::ErdosRenyi { edge_probability } => {
            for u in 0..nodes {
                for v in u + 1..nodes {
                    if rng.random_bool(edge_probability) {
                        edges.insert((u, v));
                    }
                }
            }
        }
        GraphModel::BarabasiAlbert { affinity } => {
            // start from a clique on affinity + 1 nodes, then attach
            // preferentially to existing degree mass
            let mut targets: Vec<usize> = Vec::new();
            for u in 0..=affinity {
                for v in u + 1..=affinity {
                    edges.insert((u, v));
                    targets.push(u);
                    targets.push(v);
                }
            }
            for new in affinity + 1..nodes {
                let mut chosen = BTreeSet::new();
                while chosen.len() < affinity {
                    chosen.insert(targets[rng.random_range(0..targets.len())]);
                }
                for &old in &chosen {
                    edges.insert((old, new));
                    targets.push(old);
                    targets.push(new);
                }
            }
        }
    }
    edges.into_iter().collect()
}

fn node_vars(nodes: usize) -> Vec<Variable> {
    (0..nodes).map(|v| Variable::binary(format!("v_{v}"))).collect()
}

fn independent_set(nodes: usize, edges: &[(usize, usize)], seed: u64) -> MipInstance {
    let constraints = edges
        .iter()
        .map(|&(u, v)| LinearConstraint::new(format!("e_{u}_{v}"), [(u, 1.0), (v, 1.0)], Relation::Le, 1.0))
        .collect();
    MipInstance::new_maximize(format!("mis_{nodes}_s{seed}"), node_vars(nodes), constraints, vec![1.0; nodes], 0.0)
        .expect("generated independent set is valid")
}

fn vertex_cover(nodes: usize, edges: &[(usize, usize)], seed: u64) -> MipInstance {
    let constraints = edges
        .iter()
        .map(|&(u, v)| LinearConstraint::new(format!("e_{u}_{v}"), [(u, 1.0), (v, 1.0)], Relation::Ge, 1.0))
        .collect();
    MipInstance::new(format!("mvc_{nodes}_s{seed}"), node_vars(nodes), constraints, vec![1.0; nodes], 0.0)
        .expect("generated vertex cover is valid")
}
