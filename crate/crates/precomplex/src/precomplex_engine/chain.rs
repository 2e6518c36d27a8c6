use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::discrete_geometry::{assemble, DiscreteOperator, Domain, FieldSpace, Layout, OperatorKind, TWIST_RANK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainKind {
    DeRham,
    /// De Rham chain of a rank-3 bundle with a curved constant connection.
    TwistedDeRham,
    /// Bianchi chain of the given vector degree: `d^𝒢` up to `𝒞^{m,m}`, then `H`,
    /// then `d^𝒢` again. `m = 0` is the Hessian chain and `m = 1` the Calabi chain.
    Bianchi { m: usize },
}

impl ChainKind {
    pub fn label(&self) -> String {
        match self {
            ChainKind::DeRham => "de_rham".into(),
            ChainKind::TwistedDeRham => "twisted_de_rham".into(),
            ChainKind::Bianchi { m } => format!("bianchi_m{m}"),
        }
    }
}

/// Ordered operator levels `A_k : E_k → E_{k+1}` with their mass matrices.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub kind: ChainKind,
    /// `E_0, …, E_N`.
    pub spaces: Vec<FieldSpace>,
    /// `A_0, …, A_{N−1}`.
    pub operators: Vec<DiscreteOperator>,
    /// Diagonal mass of each space.
    pub masses: Vec<Vec<f64>>,
}

impl ChainSpec {
    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }

    pub fn orders(&self) -> Vec<usize> {
        self.operators.iter().map(|o| o.order).collect()
    }
}

/// Spaces and operator kinds of a chain in dimension `d`.
pub fn chain_levels(kind: ChainKind, d: usize) -> Result<Vec<(FieldSpace, Option<OperatorKind>)>, EngineError> {
    let mut out = Vec::new();
    match kind {
        ChainKind::DeRham => {
            for k in 0..=d {
                out.push((FieldSpace::forms(k, 0), (k < d).then_some(OperatorKind::D)));
            }
        }
        ChainKind::TwistedDeRham => {
            for k in 0..=d {
                out.push((FieldSpace::twisted(k, TWIST_RANK), (k < d).then_some(OperatorKind::TwistedD)));
            }
        }
        ChainKind::Bianchi { m } => {
            if m >= d {
                return Err(EngineError::Chain(format!("Bianchi chain needs m < d, got m = {m}, d = {d}")));
            }
            for k in 0..m {
                out.push((FieldSpace::bianchi(k, m), Some(OperatorKind::DG)));
            }
            out.push((FieldSpace::bianchi(m, m), Some(OperatorKind::H)));
            for k in m + 1..=d {
                out.push((FieldSpace::bianchi(k, m + 1), (k < d).then_some(OperatorKind::DG)));
            }
        }
    }
    Ok(out)
}

pub fn build_chain(domain: &Domain, kind: ChainKind) -> Result<ChainSpec, EngineError> {
    if kind == ChainKind::TwistedDeRham && domain.twist().is_none() {
        return Err(EngineError::Chain("twisted chain needs twist_strength on the domain".into()));
    }
    let levels = chain_levels(kind, domain.d())?;
    let mut spaces = Vec::new();
    let mut operators = Vec::new();
    let mut masses = Vec::new();
    for (space, op) in &levels {
        spaces.push(*space);
        masses.push(Layout::new(domain, *space)?.mass_diagonal(domain));
        if let Some(op) = op {
            let a = assemble(domain, *op, *space)?;
            operators.push(a);
        }
    }
    for (k, a) in operators.iter().enumerate() {
        if a.target.len() != 1 || a.target[0] != spaces[k + 1] {
            return Err(EngineError::Chain(format!("level {k}: codomain {} differs from {}", a.target[0], spaces[k + 1])));
        }
    }
    Ok(ChainSpec { kind, spaces, operators, masses })
}
