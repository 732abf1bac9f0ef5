//! Independent checks shared by the integration tests and the acceptance run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use roadchat_core::demand::Weight;
use roadchat_core::netmodel::{EdgeSpec, NetworkBuilder};
use roadchat_core::simengine::{SimObserver, StepView};
use roadchat_core::RoadNetwork;

/// Up to 5 nodes and 8 edges with small integer lengths, so ties occur.
pub fn random_graph(r: &mut ChaCha8Rng) -> Option<RoadNetwork> {
    let n_nodes = r.gen_range(2..=5);
    let mut b = NetworkBuilder::new();
    for i in 0..n_nodes {
        // sub-meter coordinates so the drawn lengths dominate geometry
        b.add_node(format!("n{i}"), r.gen::<f64>(), r.gen::<f64>());
    }
    let n_edges = r.gen_range(1..=8);
    let mut made = 0;
    for k in 0..n_edges {
        let f = r.gen_range(0..n_nodes);
        let t = r.gen_range(0..n_nodes);
        if f == t {
            continue;
        }
        // a few integer lengths so ties actually happen
        let len = r.gen_range(1..6) as f64 * 10.0;
        let speed = [5.0, 10.0, 20.0][r.gen_range(0..3)];
        b.add_edge(
            EdgeSpec::new(format!("e{k}"), format!("n{f}"), format!("n{t}"))
                .length(len)
                .speed(speed),
        )
        .ok()?;
        made += 1;
    }
    if made == 0 {
        return None;
    }
    b.build().ok()
}

pub fn weight_of(net: &RoadNetwork, id: &str, w: Weight) -> f64 {
    let e = &net.edges[id];
    match w {
        Weight::Distance => e.length,
        Weight::Time => e.length / e.speed_limit,
    }
}

/// Every simple edge path from `from` to `to`, by exhaustive search.
pub fn all_paths(net: &RoadNetwork, from: &str, to: &str) -> Vec<Vec<String>> {
    fn go(net: &RoadNetwork, path: &mut Vec<String>, to: &str, out: &mut Vec<Vec<String>>) {
        let cur = path.last().unwrap().clone();
        if cur == to {
            out.push(path.clone());
            return;
        }
        for c in net.successors(&cur) {
            if !path.contains(&c.to) {
                path.push(c.to.clone());
                go(net, path, to, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(net, &mut vec![from.to_string()], to, &mut out);
    out
}

/// Tallies invariant violations seen at each step.
#[derive(Default)]
pub struct Checker {
    pub steps: usize,
    pub min_gap: f64,
    pub red_crossings: usize,
    pub conservation_breaks: usize,
    pub bad_positions: usize,
    pub bad_speeds: usize,
    pub crossings: usize,
}

impl SimObserver for Checker {
    fn on_step(&mut self, view: &StepView<'_>) {
        self.steps += 1;
        let c = view.counts;
        if c.inserted != c.arrived + view.in_network || c.unfinished != view.in_network {
            self.conservation_breaks += 1;
        }
        let on_lanes: usize = view.lanes.iter().map(Vec::len).sum();
        if on_lanes != view.in_network {
            self.conservation_breaks += 1;
        }
        for lane in &view.lanes {
            for v in lane {
                if v.pos < 0.0 || v.pos > v.edge_length + 1e-9 {
                    self.bad_positions += 1;
                }
                if v.speed < 0.0 || v.speed > v.max_speed.min(v.speed_limit * 1.1) + 1e-9 {
                    self.bad_speeds += 1;
                }
            }
            for w in lane.windows(2) {
                self.min_gap = self.min_gap.min(w[0].pos - w[0].length - w[1].pos);
            }
        }
        for x in &view.crossings {
            self.crossings += 1;
            if matches!(x.signal, Some('r' | 'R')) {
                self.red_crossings += 1;
            }
        }
    }
}

