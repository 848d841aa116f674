use crate::config::{self, RawConfig, ScenarioConfig};
use crate::csvout::write_csv;
use elmo::bitmap::PortBitmap;
use elmo::dataplane::{simulate_group, SRuleTables};
use elmo::encoding::{
    compute_tree, encode_group, encode_prules, EncodingConfig, GroupEncoding, MulticastTree,
};
use elmo::example::WorkedExample;
use elmo::experiment::{build_world, oracle_delivery, run_cell, run_churn, run_failure, World};
use elmo::placement::Placement;
use elmo::topology::{FailureSet, SwitchRef, Topology, TopologySpec};
use elmo::wire;
use elmo::workload::{GroupSpec, Member, Role};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug)]
pub enum CmdError {
    /// An invariant or acceptance check failed (exit code 1).
    Invariant(String),
    /// Bad arguments, config, or preconditions (exit code 2).
    Usage(String),
}

impl From<config::ConfigError> for CmdError {
    fn from(e: config::ConfigError) -> Self {
        CmdError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Usage(format!("io error: {e}"))
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CmdError> {
    Err(CmdError::Usage(msg.into()))
}

fn build(cfg: &ScenarioConfig) -> Result<World, CmdError> {
    build_world(cfg.spec.clone()).map_err(|e| CmdError::Usage(e.to_string()))
}

// ---------------------------------------------------------------------------
// example-fig3
// ---------------------------------------------------------------------------

pub fn example_fig3() -> Result<(), CmdError> {
    let ex = WorkedExample::new();
    let d1 = ex.physical_bits();
    let d2 = ex.logical_bits();
    let d3 = ex.shared_bits();
    println!("D1={d1} bits, D2={d2} bits, D3(R=2)={d3} bits");

    let (shared, _) = ex.encode(&ex.shared_config());
    println!("\nshared p-rules at R=2 (one spine, two leaf rules):");
    for rule in &shared.header.down_spine.rules {
        println!("  spine pods {:?} bitmap {}", rule.switches, rule.bitmap);
    }
    for rule in &shared.header.down_leaf.rules {
        println!("  leaves {:?} bitmap {}", rule.switches, rule.bitmap);
    }
    let up = shared.header.up_leaf.as_ref().expect("upstream rule");
    println!(
        "  upstream leaf rule {} (multipath {})",
        up.bitmap.display_split(ex.topology.spec().hosts_per_leaf as u8),
        up.multipath
    );

    let (srules, _) = ex.encode(&ex.constrained_config(1));
    println!("\nR=0, one s-rule per switch:");
    for rule in &srules.header.down_spine.rules {
        println!("  spine p-rule pods {:?} bitmap {}", rule.switches, rule.bitmap);
    }
    for (pod, bm) in &srules.spine_layer.s_rule_installs {
        println!("  s-rule at pod {pod} spines, bitmap {bm}");
    }
    for (leaf, _) in &srules.leaf_layer.s_rule_installs {
        println!("  s-rule at leaf L{leaf}");
    }

    let (defaults, _) = ex.encode(&ex.constrained_config(0));
    println!("\nR=0, no s-rule capacity:");
    if let Some(d) = &defaults.leaf_layer.default_rule {
        let names: Vec<String> = d.members.iter().map(|l| format!("L{l}")).collect();
        println!("  default leaf p-rule members {} bitmap {}", names.join(","), d.bitmap);
    }
    if let Some(d) = &defaults.spine_layer.default_rule {
        println!("  default spine p-rule pods {:?} bitmap {}", d.members, d.bitmap);
    }

    // sanity: these are fixed properties of the example
    if d1 != 161 || d2 != 83 || d3 != 62 {
        return Err(CmdError::Invariant(format!(
            "expected 161/83/62 bits, computed {d1}/{d2}/{d3}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

pub fn experiment(path: &Path) -> Result<(), CmdError> {
    let cfg = config::load(path)?;
    let world = build(&cfg)?;
    let out = Path::new(&cfg.output_dir);
    let prov = format!(
        "{},{},{}",
        world.spec.placement_p,
        match world.spec.dist {
            elmo::workload::GroupSizeDist::Wve => "wve",
            elmo::workload::GroupSizeDist::Uniform => "uniform",
        },
        world.spec.group_seed
    );

    let mut coverage_rows = Vec::new();
    let mut srule_rows = Vec::new();
    let mut overhead_rows = Vec::new();
    let mut latency_rows = Vec::new();
    for &r in &world.spec.r_sweep {
        let enc_cfg = world.encoding_config(r).map_err(|e| CmdError::Usage(e.to_string()))?;
        let (m, _tables) =
            run_cell(&world, &enc_cfg, false).map_err(|e| CmdError::Invariant(e.to_string()))?;
        eprintln!(
            "r={r}: coverage {:.2}% (leaf layer), elmo overhead {:.2}%",
            m.coverage_leaf_pct(),
            m.traffic.first().map(|(_, t)| t.elmo_overhead_pct()).unwrap_or(0.0)
        );
        coverage_rows.push(format!(
            "{r},{prov},{},{},{},{:.4},{:.4}",
            m.groups,
            m.covered_leaf,
            m.covered_all,
            m.coverage_leaf_pct(),
            m.coverage_all_pct()
        ));
        for (layer, s) in [("leaf", &m.leaf_srules), ("spine", &m.spine_srules)] {
            srule_rows.push(format!(
                "{r},{prov},{layer},{:.4},{},{},{}",
                s.mean, s.p95, s.max, s.total
            ));
        }
        for (payload, t) in &m.traffic {
            overhead_rows.push(format!(
                "{r},{prov},{payload},{},{},{},{},{},{:.4},{:.4},{:.4}",
                t.ideal,
                t.elmo,
                t.elmo_payload,
                t.unicast,
                t.overlay,
                t.elmo_overhead_pct(),
                t.unicast_overhead_pct(),
                t.overlay_overhead_pct()
            ));
        }
        latency_rows.push(format!(
            "{r},{prov},{},{:.3},{:.3},{:.3},{:.3}",
            m.groups, m.latency.mean_us, m.latency.p50_us, m.latency.p99_us, m.latency.max_us
        ));
    }
    write_csv(
        out,
        "coverage.csv",
        "elmo coverage schema v1",
        "r,p,dist,seed,groups,covered_leaf,covered_all,coverage_leaf_pct,coverage_all_pct",
        &coverage_rows,
    )?;
    write_csv(
        out,
        "srules.csv",
        "elmo srules schema v1",
        "r,p,dist,seed,layer,mean,p95,max,total",
        &srule_rows,
    )?;
    write_csv(
        out,
        "overhead.csv",
        "elmo overhead schema v1",
        "r,p,dist,seed,payload,ideal_bytes,elmo_bytes,elmo_payload_bytes,unicast_bytes,overlay_bytes,elmo_overhead_pct,unicast_overhead_pct,overlay_overhead_pct",
        &overhead_rows,
    )?;
    write_csv(
        out,
        "latency.csv",
        "elmo latency schema v1 (wall-clock timings; not byte-reproducible)",
        "r,p,dist,seed,groups,mean_us,p50_us,p99_us,max_us",
        &latency_rows,
    )?;

    if cfg.churn_events > 0 {
        churn_to_csv(&cfg, &world, out, &prov)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn churn_to_csv(
    cfg: &ScenarioConfig,
    world: &World,
    out: &Path,
    prov: &str,
) -> Result<(), CmdError> {
    let r = *world.spec.r_sweep.last().unwrap_or(&12);
    let enc_cfg = world.encoding_config(r).map_err(|e| CmdError::Usage(e.to_string()))?;
    let churn = run_churn(
        world,
        &enc_cfg,
        cfg.churn_events,
        cfg.churn_events_per_second,
        cfg.churn_seed,
    )
    .map_err(|e| CmdError::Invariant(e.to_string()))?;
    let mut rows = Vec::new();
    for (kind, n) in [("join", &churn.join), ("leave", &churn.leave)] {
        rows.push(format!(
            "{prov},{kind},{},{:.6},{:.6},{:.6}",
            n.events, n.hypervisor, n.leaf, n.spine
        ));
    }
    rows.push(format!(
        "{prov},rate,{},{:.4},{:.4},{:.4}",
        churn.rate.events, churn.rate.hypervisor_rate, churn.rate.leaf_rate, churn.rate.spine_rate
    ));
    write_csv(
        out,
        "updates.csv",
        "elmo updates schema v1 (normalized by group size; `rate` row is updates/sec per class)",
        "p,dist,seed,kind,events,hypervisor,leaf,spine",
        &rows,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Structural checks for one encoded group; returns a violation description.
pub fn check_encoding(
    topology: &Topology,
    enc_cfg: &EncodingConfig,
    tree: &MulticastTree,
    enc: &GroupEncoding,
    header_bytes: &[u8],
) -> Result<(), String> {
    // rule-count and id-count budgets
    for (name, layer, h, k) in [
        ("spine", &enc.spine_layer, enc_cfg.h_max_spine, enc_cfg.k_max_spine),
        ("leaf", &enc.leaf_layer, enc_cfg.h_max_leaf, enc_cfg.k_max_leaf),
    ] {
        if layer.p_rules.len() > h as usize {
            return Err(format!("{name} layer exceeds H_max: {}", layer.p_rules.len()));
        }
        for rule in &layer.p_rules {
            if rule.switches.len() > k as usize {
                return Err(format!("{name} rule exceeds K_max: {:?}", rule.switches));
            }
            let inputs: &[(u16, PortBitmap)] = match name {
                "spine" => &tree.spine_bitmaps,
                _ => &tree.leaf_bitmaps,
            };
            for sw in &rule.switches {
                let Some((_, input)) = inputs.iter().find(|(s, _)| s == sw) else {
                    return Err(format!("{name} rule names switch {sw} outside the tree"));
                };
                if !rule.bitmap.contains(input) {
                    return Err(format!("{name} rule bitmap misses ports of switch {sw}"));
                }
                if rule.bitmap.hamming(input) > enc_cfg.spurious_budget {
                    return Err(format!(
                        "{name} rule violates the R bound at switch {sw}: {} > {}",
                        rule.bitmap.hamming(input),
                        enc_cfg.spurious_budget
                    ));
                }
            }
        }
    }
    // every tree switch lands in exactly one of p-rule/s-rule/default
    for (inputs, layer) in
        [(&tree.spine_bitmaps, &enc.spine_layer), (&tree.leaf_bitmaps, &enc.leaf_layer)]
    {
        for (sw, _) in inputs {
            let in_p = layer.p_rules.iter().filter(|r| r.switches.contains(sw)).count();
            let in_s = layer.s_rule_installs.iter().filter(|(s, _)| s == sw).count();
            let in_d = layer
                .default_rule
                .as_ref()
                .map(|d| d.members.contains(sw) as usize)
                .unwrap_or(0);
            // the source pod is served on the upstream pass and is absent
            // from the downstream spine layer
            if in_p + in_s + in_d > 1 {
                return Err(format!("switch {sw} assigned {} times", in_p + in_s + in_d));
            }
        }
    }
    // byte budget and codec round-trip
    if header_bytes.len() > enc_cfg.header_budget_bytes as usize {
        return Err(format!(
            "encoded header {} B exceeds the {} B budget",
            header_bytes.len(),
            enc_cfg.header_budget_bytes
        ));
    }
    let lt = topology.logical();
    match wire::decode_header(header_bytes, lt) {
        Ok(decoded) => {
            if decoded != enc.header {
                return Err("codec round-trip mismatch".into());
            }
            let reencoded = wire::encode_header(&decoded, lt).map_err(|e| e.to_string())?;
            if reencoded != header_bytes {
                return Err("re-encoded bytes differ".into());
            }
        }
        Err(e) => return Err(format!("decode failed: {e}")),
    }
    Ok(())
}

pub fn verify(path: &Path) -> Result<(), CmdError> {
    let cfg = config::load(path)?;
    let t = &cfg.spec.topology;
    if t.pods > 2 || t.leaves_per_pod > 4 || t.hosts_per_leaf > 4 {
        return usage(format!(
            "verify requires a small scenario (<= 2 pods, <= 4 leaves/pod, <= 4 hosts/leaf), got {t:?}"
        ));
    }
    let world = build(&cfg)?;
    let no_failures = FailureSet::none();
    let mut cells = 0u64;
    for &r in &world.spec.r_sweep {
        let enc_cfg = world.encoding_config(r).map_err(|e| CmdError::Usage(e.to_string()))?;
        let mut tables = SRuleTables::new(&world.topology);
        for id in 0..world.generator.num_groups() {
            let group = world.group(id);
            let tree = compute_tree(&world.topology, &world.placement, &group);
            let mut senders: Vec<u32> =
                group.sender_vms().map(|vm| world.placement.host_of_vm(vm)).collect();
            senders.sort_unstable();
            senders.dedup();
            for source in senders {
                let gid = group.id;
                let f_max = enc_cfg.srule_capacity;
                let enc =
                    encode_group(&tree, &world.topology, &enc_cfg, source, &mut |sw, bm| {
                        tables.try_reserve(sw, gid, bm, f_max)
                    });
                let bytes = wire::encode_header(&enc.header, world.topology.logical())
                    .map_err(|e| CmdError::Invariant(e.to_string()))?;
                let reproducer = format!(
                    "r={r} group={gid} source_host={source} group_seed={}",
                    world.spec.group_seed
                );
                check_encoding(&world.topology, &enc_cfg, &tree, &enc, &bytes)
                    .map_err(|m| CmdError::Invariant(format!("{m} [{reproducer}]")))?;
                if tree.is_empty() {
                    continue;
                }
                let report = simulate_group(
                    &world.topology,
                    &tables,
                    &no_failures,
                    gid,
                    &bytes,
                    source,
                    &tree.receiver_hosts,
                    64,
                )
                .map_err(|e| CmdError::Invariant(format!("{e} [{reproducer}]")))?;
                let expected = oracle_delivery(&world.topology, &tree, &enc, source);
                if !report.undelivered.is_empty()
                    || report.duplicate_deliveries > 0
                    || report.delivered != expected.delivered
                    || report.spurious_hosts.len() as u64 != expected.spurious
                {
                    return Err(CmdError::Invariant(format!(
                        "delivery mismatch: delivered {:?} (oracle {:?}), undelivered {:?} [{reproducer}]",
                        report.delivered, expected.delivered, report.undelivered
                    )));
                }
                if r == 0
                    && enc_cfg.srule_capacity == u32::MAX
                    && !report.spurious_hosts.is_empty()
                {
                    return Err(CmdError::Invariant(format!(
                        "spurious deliveries at R=0 with unbounded s-rules [{reproducer}]"
                    )));
                }
                cells += 1;
            }
        }
    }
    println!("verify: {cells} (group, sender, r) cells checked, all invariants hold");
    Ok(())
}

// ---------------------------------------------------------------------------
// churn / fail
// ---------------------------------------------------------------------------

pub fn churn(path: &Path) -> Result<(), CmdError> {
    let cfg = config::load(path)?;
    if cfg.churn_events == 0 {
        return usage("config has no [churn] events");
    }
    let world = build(&cfg)?;
    let prov = format!("{},wve,{}", world.spec.placement_p, world.spec.group_seed);
    churn_to_csv(&cfg, &world, Path::new(&cfg.output_dir), &prov)?;
    let r = *world.spec.r_sweep.last().unwrap_or(&12);
    let enc_cfg = world.encoding_config(r).map_err(|e| CmdError::Usage(e.to_string()))?;
    let churn = run_churn(
        &world,
        &enc_cfg,
        cfg.churn_events,
        cfg.churn_events_per_second,
        cfg.churn_seed,
    )
    .map_err(|e| CmdError::Invariant(e.to_string()))?;
    println!(
        "join:  {} events, normalized updates hypervisor {:.4} leaf {:.6} spine {:.6}",
        churn.join.events, churn.join.hypervisor, churn.join.leaf, churn.join.spine
    );
    println!(
        "leave: {} events, normalized updates hypervisor {:.4} leaf {:.6} spine {:.6}",
        churn.leave.events, churn.leave.hypervisor, churn.leave.leaf, churn.leave.spine
    );
    println!(
        "at {} events/sec: hypervisor {:.2}/s leaf {:.2}/s spine {:.2}/s (limits {} and {})",
        churn.rate.events_per_second,
        churn.rate.hypervisor_rate,
        churn.rate.leaf_rate,
        churn.rate.spine_rate,
        elmo::controller::HYPERVISOR_UPDATES_PER_SEC_LIMIT,
        elmo::controller::NETWORK_UPDATES_PER_SEC_LIMIT,
    );
    Ok(())
}

pub fn fail(path: &Path) -> Result<(), CmdError> {
    let cfg = config::load(path)?;
    if cfg.fail_spines.is_empty() && cfg.fail_cores.is_empty() {
        return usage("config has no [failures] entries");
    }
    let world = build(&cfg)?;
    let r = *world.spec.r_sweep.last().unwrap_or(&12);
    let enc_cfg = world.encoding_config(r).map_err(|e| CmdError::Usage(e.to_string()))?;
    let (_, mut tables) =
        run_cell(&world, &enc_cfg, false).map_err(|e| CmdError::Invariant(e.to_string()))?;
    let mut failed: Vec<SwitchRef> = cfg.fail_spines.iter().map(|&s| SwitchRef::Spine(s)).collect();
    failed.extend(cfg.fail_cores.iter().map(|&c| SwitchRef::Core(c)));
    for sw in failed {
        let m = run_failure(&world, &enc_cfg, &mut tables, sw)
            .map_err(|e| CmdError::Invariant(e.to_string()))?;
        println!(
            "{sw:?}: impacted {} of {} groups ({:.2}%), post-failover delivered {}, partitioned {}",
            m.impacted,
            m.groups,
            m.impacted_pct(),
            m.post_failover_delivered,
            m.partitioned
        );
        if m.post_failover_delivered + m.partitioned != m.impacted {
            return Err(CmdError::Invariant(
                "impacted groups neither delivered nor reported partitioned".into(),
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

fn parse_leaf_port(line: usize, s: &str) -> Result<(u16, u8), CmdError> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.len() != 2 {
        return usage(format!("group spec line {line}: expected leaf:port, got `{s}`"));
    }
    let leaf = parts[0]
        .parse()
        .map_err(|_| CmdError::Usage(format!("group spec line {line}: bad leaf `{}`", parts[0])))?;
    let port = parts[1]
        .parse()
        .map_err(|_| CmdError::Usage(format!("group spec line {line}: bad port `{}`", parts[1])))?;
    Ok((leaf, port))
}

pub fn encode(path: &Path, hex: bool) -> Result<(), CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Usage(format!("cannot read {path:?}: {e}")))?;
    let raw = RawConfig::parse(&text)?;
    let (spec, receivers, source, enc_cfg) = raw.group_spec()?;
    let topology = Topology::build(spec).map_err(|e| CmdError::Usage(e.to_string()))?;
    let placement =
        Placement::from_assignment((0..topology.num_hosts()).collect(), vec![0, topology.num_hosts()]);
    let mut members: Vec<Member> = receivers
        .iter()
        .map(|&(leaf, port)| Member { vm: topology.host_of(leaf, port), role: Role::Receiver })
        .collect();
    let source_host = topology.host_of(source.0, source.1);
    members.push(Member { vm: source_host, role: Role::Sender });
    members.sort_unstable_by_key(|m| m.vm);
    members.dedup_by_key(|m| m.vm);
    let group = GroupSpec { id: 0, tenant: 0, members };

    let tree = compute_tree(&topology, &placement, &group);
    let mut tables = SRuleTables::new(&topology);
    let f_max = enc_cfg.srule_capacity;
    let enc = encode_prules(&tree, &topology, &enc_cfg, source_host)
        .admit(&topology, &mut |sw, bm| tables.try_reserve(sw, 0, bm, f_max));
    let bytes = wire::encode_header(&enc.header, topology.logical())
        .map_err(|e| CmdError::Invariant(e.to_string()))?;

    if hex {
        print!("{}", wire::hex_dump(&bytes).map_err(|e| CmdError::Invariant(e.to_string()))?);
    } else {
        let mut out = String::new();
        let _ = writeln!(out, "header: {} bytes", bytes.len());
        if let Some(up) = &enc.header.up_leaf {
            let _ = writeln!(
                out,
                "upstream leaf: {} multipath={}",
                up.bitmap.display_split(topology.spec().hosts_per_leaf as u8),
                up.multipath
            );
        }
        if let Some(up) = &enc.header.up_spine {
            let _ = writeln!(
                out,
                "upstream spine: {} multipath={}",
                up.bitmap.display_split(topology.spec().leaves_per_pod as u8),
                up.multipath
            );
        }
        if let Some(core) = &enc.header.core {
            let _ = writeln!(out, "core: {core}");
        }
        for (name, section) in
            [("downstream spine", &enc.header.down_spine), ("downstream leaf", &enc.header.down_leaf)]
        {
            for rule in &section.rules {
                let _ = writeln!(out, "{name}: switches {:?} bitmap {}", rule.switches, rule.bitmap);
            }
            if let Some(d) = &section.default {
                let _ = writeln!(out, "{name} default: {d}");
            }
        }
        for ins in &enc.s_rule_installs {
            let _ = writeln!(out, "s-rule: {:?} bitmap {}", ins.switch, ins.bitmap);
        }
        print!("{out}");
    }
    Ok(())
}

impl RawConfig {
    /// Readers for the `encode --group` spec format.
    fn group_spec(
        &self,
    ) -> Result<(TopologySpec, Vec<(u16, u8)>, (u16, u8), EncodingConfig), CmdError> {
        let spec = TopologySpec {
            pods: self.parse_as("topology", "pods", 4u16)?,
            spines_per_pod: self.parse_as("topology", "spines_per_pod", 2u16)?,
            leaves_per_pod: self.parse_as("topology", "leaves_per_pod", 2u16)?,
            hosts_per_leaf: self.parse_as("topology", "hosts_per_leaf", 8u16)?,
            cores: self.parse_as("topology", "cores", 4u16)?,
        };
        let (line, recv) = self
            .get("group", "receivers")
            .ok_or_else(|| CmdError::Usage("group spec needs [group] receivers".into()))?;
        let receivers = recv
            .split(',')
            .map(|s| parse_leaf_port(line, s))
            .collect::<Result<Vec<_>, _>>()?;
        let (line, src) = self
            .get("group", "source")
            .ok_or_else(|| CmdError::Usage("group spec needs [group] source".into()))?;
        let source = parse_leaf_port(line, src)?;
        let cfg = EncodingConfig {
            spurious_budget: self.parse_as("encoding", "r", 2u32)?,
            h_max_spine: self.parse_as("encoding", "h_max_spine", 1u16)?,
            h_max_leaf: self.parse_as("encoding", "h_max_leaf", 2u16)?,
            k_max_spine: self.parse_as("encoding", "k_max_spine", 2u8)?,
            k_max_leaf: self.parse_as("encoding", "k_max_leaf", 2u8)?,
            srule_capacity: self.parse_as("encoding", "f_max", 0u32)?,
            header_budget_bytes: self.parse_as("encoding", "header_budget_bytes", 325u32)?,
        };
        self.reject_unknown().map_err(CmdError::from)?;
        Ok((spec, receivers, source, cfg))
    }
}
