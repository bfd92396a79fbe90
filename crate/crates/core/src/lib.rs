//! Minimal partially isometric dilations of row contractions relative to a
//! stabilizing projection family, on a truncated Fock space over the
//! family's directed graph.

pub mod dilation;
pub mod families;
pub mod graph;
pub mod numerics;
pub mod partitions;
pub mod tuples;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Tuple(#[from] tuples::TupleError),
    #[error(transparent)]
    Family(#[from] families::FamilyError),
    #[error(transparent)]
    Dilation(#[from] dilation::DilationError),
}

impl Error {
    /// Process exit code: 3 for resource caps, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        let resource = matches!(
            self,
            Error::Graph(graph::GraphError::DepthOverflow { .. })
                | Error::Family(families::FamilyError::TooManyBlocks { .. })
                | Error::Family(families::FamilyError::Graph(
                    graph::GraphError::DepthOverflow { .. }
                ))
                | Error::Dilation(dilation::DilationError::Graph(
                    graph::GraphError::DepthOverflow { .. }
                ))
                | Error::Dilation(dilation::DilationError::TooLarge { .. })
        );
        if resource {
            3
        } else {
            2
        }
    }

    /// Name of the innermost error variant, e.g. `DepthOverflow`.
    pub fn kind(&self) -> String {
        const WRAPPERS: [&str; 5] = ["Numerics", "Graph", "Tuple", "Family", "Dilation"];
        let debug = format!("{self:?}");
        let mut rest = debug.as_str();
        loop {
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric()).collect();
            let inner = &rest[name.len()..];
            let nested =
                inner.starts_with('(') && inner[1..].starts_with(|c: char| c.is_ascii_uppercase());
            if WRAPPERS.contains(&name.as_str()) && nested {
                rest = &inner[1..];
            } else {
                return name;
            }
        }
    }
}
