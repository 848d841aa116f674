// Scratch probe for churn and failure replay calibration.
// cargo run --release -p elmo --example churn_probe [events] [groups]

use elmo::experiment::{build_world, run_cell, run_churn, run_failure, ScenarioSpec};
use elmo::topology::{SwitchRef, TopologySpec};
use elmo::workload::GroupSizeDist;
use std::time::Instant;

fn main() {
    let events: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let groups: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3_000);

    // reduced-scale churn world, dispersed placement (P = 1), role-aware
    let spec = ScenarioSpec {
        topology: TopologySpec {
            pods: 4,
            spines_per_pod: 2,
            leaves_per_pod: 8,
            hosts_per_leaf: 16,
            cores: 2,
        },
        tenants: 250,
        tenant_seed: 21,
        tenant_max_size: 32,
        placement_p: 1,
        placement_seed: 22,
        total_groups: groups,
        dist: GroupSizeDist::Wve,
        group_seed: 23,
        r_sweep: vec![12],
        header_budget_bytes: 325,
        k_max_spine: 2,
        k_max_leaf: 2,
        h_override: Some((4, 30)),
        srule_capacity: 100,
        payloads: vec![],
        all_receivers: false,
    };
    let world = build_world(spec).expect("world");
    let cfg = world.encoding_config(12).expect("cfg");
    let t0 = Instant::now();
    let churn = run_churn(&world, &cfg, events, 1_000.0, 31).expect("churn");
    println!("churn replay: {events} events in {:?}", t0.elapsed());
    for (kind, n) in [("join", &churn.join), ("leave", &churn.leave)] {
        println!(
            "  {kind}: {} events, normalized hyp {:.4} leaf {:.6} spine {:.6}",
            n.events, n.hypervisor, n.leaf, n.spine
        );
    }
    println!(
        "  rate at 1000 ev/s: hyp {:.2}/s leaf {:.2}/s spine {:.2}/s",
        churn.rate.hypervisor_rate, churn.rate.leaf_rate, churn.rate.spine_rate
    );

    // failure replay on the fabric workload (sampled)
    let mut fspec = ScenarioSpec::fabric(12, GroupSizeDist::Wve);
    fspec.total_groups = 100_000;
    let world = build_world(fspec).expect("fabric world");
    let cfg = world.encoding_config(12).expect("cfg");
    let (_, mut tables) = run_cell(&world, &cfg, false).expect("cell");
    for sw in [SwitchRef::Core(0), SwitchRef::Spine(0), SwitchRef::Spine(25)] {
        let t0 = Instant::now();
        let m = run_failure(&world, &cfg, &mut tables, sw).expect("failure");
        println!(
            "fail {sw:?}: impacted {} / {} ({:.2}%), delivered {}, partitioned {} ({:?})",
            m.impacted,
            m.groups,
            m.impacted_pct(),
            m.post_failover_delivered,
            m.partitioned,
            t0.elapsed()
        );
    }
}
