//! Link-type prediction on heterogeneous drug/protein graphs.
//!
//! Load a [`graph::HeteroGraph`] and [`features::Features`], split its DDI
//! edges with [`split::split_edges`], train an encoder/decoder with
//! [`train::train`], then score the held-out pairs with [`metrics`].

pub mod features;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod split;
pub mod tensor;
pub mod train;
