//! Change impact analysis for collections of semantically annotated
//! mathematical documents.

pub mod broker;
pub mod cia;
pub mod diff;
pub mod doc;
pub mod graph;
pub mod metamodel;
pub mod rewrite;
pub mod stex;
