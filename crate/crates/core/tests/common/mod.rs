#![allow(dead_code)]

use gdalloc::Instance;
use proptest::prelude::*;

/// Small random instances: every campaign has at least one edge and every
/// type has positive probability.
pub fn small_instance(max_m: usize, max_n: usize, max_w: u64) -> impl Strategy<Value = Instance> {
    (1..=max_m, 1..=max_n).prop_flat_map(move |(m, n)| {
        (
            prop::collection::vec(1..=max_w, m),
            prop::collection::vec(1u32..=20, n),
            prop::collection::vec(0..n, m),
            prop::collection::vec(any::<bool>(), m * n),
        )
            .prop_map(move |(demands, weights, anchor, extra)| {
                let total: u32 = weights.iter().sum();
                let probs = weights.iter().map(|&w| w as f64 / total as f64).collect();
                let mut edges = Vec::new();
                for i in 0..m {
                    for j in 0..n {
                        if anchor[i] == j || extra[i * n + j] {
                            edges.push((i, j));
                        }
                    }
                }
                Instance::new(demands, probs, edges).expect("valid by construction")
            })
    })
}

/// Brute-force `Z_flow = max_S W(S) / p(Γ(S))`.
pub fn z_flow_brute(instance: &Instance) -> f64 {
    let m = instance.m();
    let mut best = 0.0f64;
    for mask in 1u32..(1 << m) {
        let mut covered = vec![false; instance.n()];
        let mut w = 0u64;
        for i in 0..m {
            if mask >> i & 1 == 1 {
                w += instance.demand(i);
                for r in instance.campaign_edges(i) {
                    covered[r.node] = true;
                }
            }
        }
        let p: f64 = (0..instance.n()).filter(|&j| covered[j]).map(|j| instance.prob(j)).sum();
        best = best.max(w as f64 / p);
    }
    best
}
