//! TOML persistence for synthesized observer gains and the associated
//! switching selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use dsiso_core::observer::ObserverGains;
use dsiso_core::synthesis::{SwitchingMatrix, SynthesisSolution};
use dsiso_core::{Error, Result};

use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(), // row-major
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::InvalidInput(
                "matrix entry count does not match its shape".into(),
            ));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGainsDoc {
    pub l: MatrixDoc,
    pub gamma: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsDoc {
    pub scenario: String,
    pub scenario_seed: u64,
    pub method: String,
    pub gamma_star: Option<f64>,
    pub rho_star: f64,
    pub sigma: Vec<Vec<usize>>,
    pub p: Option<Vec<f64>>,
    pub agents: Vec<AgentGainsDoc>,
}

pub fn render_gains(
    scenario: &Scenario,
    method: &str,
    solution: &SynthesisSolution,
) -> Result<String> {
    let doc = GainsDoc {
        scenario: scenario.name.clone(),
        scenario_seed: scenario.seed,
        method: method.into(),
        gamma_star: solution.gamma_star,
        rho_star: solution.rho_star,
        sigma: solution.sigma_star.row_choice.clone(),
        p: solution.p.as_ref().map(|p| p.as_slice().to_vec()),
        agents: solution
            .gains
            .iter()
            .map(|g| AgentGainsDoc {
                l: MatrixDoc::from(&g.l),
                gamma: MatrixDoc::from(&g.gamma),
            })
            .collect(),
    };
    toml::to_string_pretty(&doc).map_err(|e| Error::InvalidInput(format!("gains render: {e}")))
}

/// Parses a gains document and rebuilds the runnable gain structures
/// against the scenario's decoupled sensing split.
pub fn parse_gains(scenario: &Scenario, text: &str) -> Result<(GainsDoc, SynthesisSolution)> {
    let doc: GainsDoc =
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("gains parse: {e}")))?;
    if doc.scenario != scenario.name || doc.scenario_seed != scenario.seed {
        return Err(Error::InvalidInput(format!(
            "gains were synthesized for `{}` (seed {}), not `{}` (seed {})",
            doc.scenario, doc.scenario_seed, scenario.name, scenario.seed
        )));
    }
    let systems = scenario.decouple()?;
    if doc.agents.len() != systems.len() {
        return Err(Error::InvalidInput(
            "gains document has the wrong agent count".into(),
        ));
    }
    let gains: Vec<ObserverGains> = doc
        .agents
        .iter()
        .zip(&systems)
        .map(|(a, sys)| ObserverGains::new(a.l.to_matrix()?, a.gamma.to_matrix()?, &sys.c2))
        .collect::<Result<_>>()?;
    let sigma = SwitchingMatrix {
        row_choice: doc.sigma.clone(),
    };
    let solution = SynthesisSolution {
        gains,
        gamma_star: doc.gamma_star,
        sigma_star: sigma,
        rho_star: doc.rho_star,
        p: doc.p.as_ref().map(|p| DVector::from_row_slice(p)),
        gap_log: Vec::new(),
    };
    Ok((doc, solution))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_doc_round_trips_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let doc = MatrixDoc::from(&m);
        assert_eq!(doc.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(doc.to_matrix().unwrap(), m);
    }
}
