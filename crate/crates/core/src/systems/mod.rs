//! Shipped systems and the name-based registry used by experiment configs.

pub mod bonatti_viana;
pub mod linear;
pub mod lorenz;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::system::SmoothSystem;
use crate::tangent::{ConstantSplitting, EstimatedSplitting, SplittingSource, DEFAULT_SPLITTING_TOL};

pub use bonatti_viana::{make_bonatti_viana, BonattiViana, BvSpec};
pub use linear::{make_anosov_t4, make_cat_map, LinearToralMap, LinearToralSpec};
pub use lorenz::{make_lorenz, Lorenz, LorenzSpec};

/// A system selected by name with its parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Cat,
    AnosovT4,
    BonattiViana {
        #[serde(default)]
        params: BvSpec,
    },
    Lorenz {
        #[serde(default)]
        params: LorenzSpec,
    },
    Linear {
        params: LinearToralSpec,
    },
}

pub const REGISTRY: [&str; 4] = ["cat", "anosov_t4", "bonatti_viana", "lorenz"];

/// A constructed system plus what the experiments need to know about it.
#[derive(Clone)]
pub struct BuiltSystem {
    pub system: Arc<dyn SmoothSystem>,
    /// Dimension of the dominating bundle `F`.
    pub dim_f: usize,
    /// Exact splitting when the system is linear.
    pub constant_splitting: Option<ConstantSplitting>,
    /// Default grid resolution per axis.
    pub default_resolution: usize,
    pub lorenz: Option<Arc<Lorenz>>,
    /// False when backward orbits cannot be computed reliably.
    pub backward_usable: bool,
}

impl std::fmt::Debug for BuiltSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltSystem")
            .field("label", &self.system.label())
            .field("dim_f", &self.dim_f)
            .finish()
    }
}

impl BuiltSystem {
    /// Splitting source: the exact one for linear maps, estimation otherwise.
    pub fn splitting_source(&self, n: usize) -> Box<dyn SplittingSource> {
        match &self.constant_splitting {
            Some(c) => Box::new(c.clone()),
            None => Box::new(EstimatedSplitting {
                n,
                dim_f: self.dim_f,
                tol: DEFAULT_SPLITTING_TOL,
            }),
        }
    }
}

fn linear_built(map: LinearToralMap, resolution: usize) -> Result<BuiltSystem> {
    let d = map.matrix().nrows();
    let dim_f = map.eigen().values.iter().filter(|v| v.abs() > 1.0).count().clamp(1, d - 1);
    let split = map.eigen_splitting(&vec![0.0; d], dim_f)?;
    Ok(BuiltSystem {
        system: Arc::new(map),
        dim_f,
        constant_splitting: Some(ConstantSplitting::from_splitting(&split)),
        default_resolution: resolution,
        lorenz: None,
        backward_usable: true,
    })
}

pub fn build_system(spec: &SystemSpec) -> Result<BuiltSystem> {
    match spec {
        SystemSpec::Cat => linear_built(make_cat_map(), 32),
        SystemSpec::AnosovT4 => linear_built(make_anosov_t4()?, 16),
        SystemSpec::Linear { params: s } => {
            let map = LinearToralMap::new(s, "linear")?;
            let res = if map.matrix().nrows() <= 2 { 32 } else { 16 };
            linear_built(map, res)
        }
        SystemSpec::BonattiViana { params: s } => {
            let bv = make_bonatti_viana(s)?;
            Ok(BuiltSystem {
                system: Arc::new(bv),
                dim_f: 2,
                constant_splitting: None,
                default_resolution: 16,
                lorenz: None,
                backward_usable: true,
            })
        }
        SystemSpec::Lorenz { params: s } => {
            let l = Arc::new(make_lorenz(s)?);
            Ok(BuiltSystem {
                system: l.clone(),
                dim_f: 2,
                constant_splitting: None,
                default_resolution: 32,
                lorenz: Some(l),
                backward_usable: false,
            })
        }
    }
}
