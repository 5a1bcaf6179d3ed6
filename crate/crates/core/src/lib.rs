//! Topological analysis of weighted-graph time series.
//!
//! The pipeline turns each observed graph into a clique-weight-rank
//! filtration ([`filtration`]), computes its barcode with generators
//! ([`persistence`]), summarizes it by persistent entropy ([`entropy`]) and
//! builds two kinds of automata from the results: a structural state machine
//! over entropy plateaus ([`pea`]) and Chu-space models of the interacting
//! agents found in the generators ([`chu`]). [`immune`] simulates an
//! idiotypic network to produce test series.

pub mod chu;
pub mod entropy;
pub mod filtration;
pub mod graph;
pub mod immune;
pub mod pea;
pub mod persistence;
pub mod pipeline;

pub use filtration::{build_filtration, maximal_cliques, weight_ladder, FilteredComplex, Simplex, WeightOrder};
pub use graph::{ObservationSeries, VertexId, WeightedGraph};
pub use persistence::{betti_numbers, persistent_homology, Barcode, Interval};
