#![allow(dead_code)]

use topo_sb::pea::SegmentKind;
use topo_sb::pipeline::PipelineOutput;
use topo_sb::WeightedGraph;

pub fn square_of_triangles() -> WeightedGraph {
    WeightedGraph::parse_edge_list(include_str!("../data/square_triangles.csv")).unwrap()
}

/// What the end-to-end run is expected to show.
#[derive(Debug)]
pub struct Shape {
    pub peaks: usize,
    pub initial_is_zero: bool,
    pub positive_self_loop: Option<String>,
}

impl Shape {
    pub fn of(out: &PipelineOutput) -> Self {
        let p = &out.pea.pea;
        let peaks = out
            .pea
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Peak)
            .count();
        let initial_is_zero = p.state(&p.initial).is_some_and(|s| {
            s.invariant.h_min == 0.0 && s.invariant.h_max == 0.0 && s.invariant.holds(0.0, 0.0)
        });
        let positive_self_loop = p
            .self_loops()
            .find(|t| p.state(&t.from).is_some_and(|s| s.invariant.h_min > 0.0))
            .map(|t| t.from.clone());
        Shape {
            peaks,
            initial_is_zero,
            positive_self_loop,
        }
    }

    pub fn ok(&self) -> bool {
        self.peaks == 2 && self.initial_is_zero && self.positive_self_loop.is_some()
    }
}
