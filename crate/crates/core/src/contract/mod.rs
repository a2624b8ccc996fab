//! The contract language: recognition agreements, degree requirements and
//! sanctions.

mod ast;
mod parser;
mod printer;

pub use ast::*;
pub use parser::{parse, parse_bytes, ParseError, MAX_FACTOR};
pub use printer::{print, requirement_text};

use crate::crypto::OrgId;
use crate::store::ChainStore;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("unknown organization `{0}`")]
    UnknownOrg(String),
    #[error("contract must be published by {expected}, not {found}")]
    IssuerMismatch { expected: OrgId, found: OrgId },
    #[error("home and foreign organization resolve to the same org")]
    SameOrg,
}

/// Resolves organization references against the chain and checks who may
/// publish the contract.
///
/// Recognition agreements are published by the home organization (it is the
/// one that signs the resulting recognitions), degree contracts by their own
/// issuer, and sanctions by the root organization from the genesis block.
pub fn static_check(
    ast: &ContractAst,
    store: &ChainStore,
    publisher: &OrgId,
) -> Result<ContractAst<OrgId>, CheckError> {
    let state = store.state();
    let resolved = state.resolve(ast)?;
    let required = match &resolved {
        ContractAst::Recognition(r) => {
            if r.home == r.foreign {
                return Err(CheckError::SameOrg);
            }
            r.home
        }
        ContractAst::Degree(d) => d.issuer,
        ContractAst::Sanction(_) => match state.root {
            Some(root) => root,
            None => return Err(CheckError::UnknownOrg("root".into())),
        },
    };
    if required != *publisher {
        return Err(CheckError::IssuerMismatch {
            expected: required,
            found: *publisher,
        });
    }
    Ok(resolved)
}
