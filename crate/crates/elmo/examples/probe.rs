// Scratch probe for calibrating full-scale metrics. Not part of the test
// suite; run with: cargo run --release -p elmo --example probe [groups]

use elmo::experiment::{build_world, run_cell, ScenarioSpec};
use elmo::workload::GroupSizeDist;
use std::time::Instant;

fn main() {
    let groups: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100_000);
    let mut spec = ScenarioSpec::fabric(12, GroupSizeDist::Wve);
    spec.total_groups = groups;
    let t0 = Instant::now();
    let world = build_world(spec).expect("world");
    println!("world built in {:?}", t0.elapsed());
    println!(
        "tenants {} vms {} mean tenant {:.1}",
        world.tenant_sizes.len(),
        world.placement.num_vms(),
        world.tenant_sizes.iter().map(|&s| s as f64).sum::<f64>() / world.tenant_sizes.len() as f64
    );

    for r in [0u32, 6, 12] {
        let cfg = world.encoding_config(r).expect("cfg");
        let t = Instant::now();
        let (m, _tables) = run_cell(&world, &cfg, false).expect("cell");
        let dt = t.elapsed();
        println!(
            "R={r}: {} groups in {:?} ({:.1} us/group)",
            m.groups,
            dt,
            dt.as_micros() as f64 / m.groups as f64
        );
        println!(
            "  coverage leaf {:.2}% all {:.2}%  max_header {} B",
            m.coverage_leaf_pct(),
            m.coverage_all_pct(),
            m.max_header_bytes
        );
        println!(
            "  leaf srules mean {:.2} p95 {} max {} | spine mean {:.2} p95 {} max {}",
            m.leaf_srules.mean,
            m.leaf_srules.p95,
            m.leaf_srules.max,
            m.spine_srules.mean,
            m.spine_srules.p95,
            m.spine_srules.max
        );
        for (p, t) in &m.traffic {
            println!(
                "  payload {p}: elmo {:.2}% unicast {:.2}% overlay {:.2}% (spurious {})",
                t.elmo_overhead_pct(),
                t.unicast_overhead_pct(),
                t.overlay_overhead_pct(),
                m.spurious_deliveries
            );
        }
        println!(
            "  latency mean {:.1} us p50 {:.1} p99 {:.1} max {:.1}",
            m.latency.mean_us, m.latency.p50_us, m.latency.p99_us, m.latency.max_us
        );
    }
}
