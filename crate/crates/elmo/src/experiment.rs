//! Scenario runners producing the evaluation metrics: group coverage,
//! s-rule occupancy, traffic overhead, churn update counts, failure impact,
//! and rule-computation latency.
//!
//! Full-scale runs stream: groups are a pure function of the workload seed,
//! so each pass regenerates them instead of holding a million group states.
//! Clustering is parallel across a chunk; s-rule admission is then committed
//! serially in workload order, which keeps results byte-deterministic (the
//! spill set never depends on occupancy, only the s-rule/default split does).

use crate::controller::{update_rate_report, Controller, RateReport, UpdateDiff};
use crate::dataplane::{baseline_traffic, simulate_group, BaselineMode, SRuleTables};
use crate::encoding::{
    compute_tree, encode_prules, EncodingConfig, EncodingError, GroupEncoding, Layer,
    MulticastTree,
};
use crate::placement::{place_tenants, Placement, PlacementConfig, PlacementError};
use crate::topology::{FailureSet, SwitchRef, Topology, TopologyError, TopologySpec};
use crate::wire;
use crate::workload::{
    generate_churn, sample_tenant_sizes, EventKind, GroupGenerator, GroupSizeDist, GroupSpec,
    Role, WorkloadError,
};
use rayon::prelude::*;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("delivery violation in group {group}: {reason}")]
    Delivery { group: u32, reason: String },
}

/// Full description of one experiment scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub topology: TopologySpec,
    pub tenants: u32,
    pub tenant_seed: u64,
    /// Cap on tenant size (e.g. `P * leaves` for dispersed placements).
    pub tenant_max_size: u32,
    pub placement_p: u16,
    pub placement_seed: u64,
    pub total_groups: u64,
    pub dist: GroupSizeDist,
    pub group_seed: u64,
    pub r_sweep: Vec<u32>,
    pub header_budget_bytes: u32,
    pub k_max_spine: u8,
    pub k_max_leaf: u8,
    /// Explicit (spine, leaf) p-rule budgets; `None` derives them from the
    /// byte budget.
    pub h_override: Option<(u16, u16)>,
    /// Per-switch s-rule capacity; `u32::MAX` means effectively unbounded.
    pub srule_capacity: u32,
    pub payloads: Vec<u32>,
    /// Treat every member as a receiver (traffic-style evaluation) instead
    /// of honoring sender/receiver roles.
    pub all_receivers: bool,
}

impl ScenarioSpec {
    /// The full-scale reproduction setup: Fabric topology, 3,000 tenants,
    /// one million groups, 325-byte header budget.
    pub fn fabric(placement_p: u16, dist: GroupSizeDist) -> Self {
        ScenarioSpec {
            topology: TopologySpec::fabric(),
            tenants: 3_000,
            tenant_seed: 0x5eed_0001,
            tenant_max_size: 5_000,
            placement_p,
            placement_seed: 0x5eed_0002,
            total_groups: 1_000_000,
            dist,
            group_seed: 0x5eed_0003,
            r_sweep: vec![0, 6, 12],
            header_budget_bytes: 325,
            // spine sharing buys little here (the layer rarely fits anyway)
            // and costs spurious fan-out into whole pods
            k_max_spine: 1,
            k_max_leaf: 2,
            h_override: None,
            srule_capacity: u32::MAX,
            payloads: vec![1_500, 64],
            all_receivers: true,
        }
    }

    /// Desk-scale smoke setup.
    pub fn reduced(tenants: u32, total_groups: u64) -> Self {
        let topology = TopologySpec {
            pods: 4,
            spines_per_pod: 2,
            leaves_per_pod: 8,
            hosts_per_leaf: 12,
            cores: 2,
        };
        ScenarioSpec {
            topology,
            tenants,
            tenant_seed: 11,
            tenant_max_size: 96,
            placement_p: 4,
            placement_seed: 12,
            total_groups,
            dist: GroupSizeDist::Wve,
            group_seed: 13,
            r_sweep: vec![0, 6, 12],
            header_budget_bytes: 325,
            k_max_spine: 2,
            k_max_leaf: 2,
            h_override: None,
            srule_capacity: 64,
            payloads: vec![1_500],
            all_receivers: true,
        }
    }
}

/// Built topology, placement, and group generator for one scenario.
pub struct World {
    pub spec: ScenarioSpec,
    pub topology: Topology,
    pub placement: Placement,
    pub tenant_sizes: Vec<u32>,
    pub generator: GroupGenerator,
}

pub fn build_world(spec: ScenarioSpec) -> Result<World, ExperimentError> {
    let topology = Topology::build(spec.topology)?;
    let max_size = spec
        .tenant_max_size
        .min(spec.placement_p as u32 * topology.num_leaves());
    let tenant_sizes = sample_tenant_sizes(spec.tenants, max_size, spec.tenant_seed);
    let placement = place_tenants(
        &topology,
        &tenant_sizes,
        PlacementConfig {
            max_tenant_vms_per_leaf: spec.placement_p,
            seed: spec.placement_seed,
        },
    )?;
    let starts: Vec<u32> = {
        let mut acc = 0u32;
        let mut v = Vec::with_capacity(tenant_sizes.len());
        for &s in &tenant_sizes {
            v.push(acc);
            acc += s;
        }
        v
    };
    let generator = GroupGenerator::new(
        &tenant_sizes,
        |t| starts[t as usize],
        spec.total_groups,
        spec.dist,
        spec.group_seed,
    );
    Ok(World { spec, topology, placement, tenant_sizes, generator })
}

impl World {
    pub fn encoding_config(&self, r: u32) -> Result<EncodingConfig, ExperimentError> {
        let mut cfg = EncodingConfig::with_budget(
            &self.topology,
            r,
            self.spec.srule_capacity,
            self.spec.header_budget_bytes,
        )?;
        cfg.k_max_spine = self.spec.k_max_spine;
        cfg.k_max_leaf = self.spec.k_max_leaf;
        if let Some((h_spine, h_leaf)) = self.spec.h_override {
            cfg.h_max_spine = h_spine;
            cfg.h_max_leaf = h_leaf;
        }
        cfg.validate(&self.topology)?;
        Ok(cfg)
    }

    pub fn group(&self, id: u64) -> GroupSpec {
        let mut g = self.generator.group(id);
        if self.spec.all_receivers {
            for m in &mut g.members {
                m.role = Role::Both;
            }
        }
        g
    }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficSums {
    pub ideal: u64,
    pub elmo: u64,
    pub elmo_payload: u64,
    pub unicast: u64,
    pub overlay: u64,
}

impl TrafficSums {
    pub fn overhead_pct(total: u64, ideal: u64) -> f64 {
        if ideal == 0 {
            0.0
        } else {
            (total as f64 / ideal as f64 - 1.0) * 100.0
        }
    }

    pub fn elmo_overhead_pct(&self) -> f64 {
        Self::overhead_pct(self.elmo, self.ideal)
    }

    pub fn unicast_overhead_pct(&self) -> f64 {
        Self::overhead_pct(self.unicast, self.ideal)
    }

    pub fn overlay_overhead_pct(&self) -> f64 {
        Self::overhead_pct(self.overlay, self.ideal)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OccupancyStats {
    pub mean: f64,
    pub p95: u64,
    pub max: u64,
    pub total: u64,
}

impl OccupancyStats {
    pub fn from_occupancies(mut occ: Vec<usize>) -> Self {
        if occ.is_empty() {
            return OccupancyStats::default();
        }
        occ.sort_unstable();
        let total: u64 = occ.iter().map(|&o| o as u64).sum();
        let p95 = occ[((occ.len() - 1) * 95) / 100] as u64;
        OccupancyStats {
            mean: total as f64 / occ.len() as f64,
            p95,
            max: *occ.last().unwrap() as u64,
            total,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    fn from_micros(mut v: Vec<f64>) -> Self {
        if v.is_empty() {
            return LatencyStats::default();
        }
        v.sort_by(f64::total_cmp);
        let pick = |q: f64| v[(((v.len() - 1) as f64) * q).round() as usize];
        LatencyStats {
            mean_us: v.iter().sum::<f64>() / v.len() as f64,
            p50_us: pick(0.50),
            p99_us: pick(0.99),
            max_us: *v.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CellMetrics {
    pub r: u32,
    pub groups: u64,
    /// Groups whose downstream leaf layer needed no s-rule and no default.
    pub covered_leaf: u64,
    /// Groups fully expressed by non-default p-rules on every layer.
    pub covered_all: u64,
    pub leaf_srules: OccupancyStats,
    pub spine_srules: OccupancyStats,
    pub traffic: Vec<(u32, TrafficSums)>,
    pub latency: LatencyStats,
    pub spurious_deliveries: u64,
    pub max_header_bytes: u32,
}

impl CellMetrics {
    pub fn coverage_leaf_pct(&self) -> f64 {
        100.0 * self.covered_leaf as f64 / self.groups.max(1) as f64
    }

    pub fn coverage_all_pct(&self) -> f64 {
        100.0 * self.covered_all as f64 / self.groups.max(1) as f64
    }

    pub fn traffic_for(&self, payload: u32) -> Option<&TrafficSums> {
        self.traffic.iter().find(|(p, _)| *p == payload).map(|(_, t)| t)
    }
}

// ---------------------------------------------------------------------------
// the per-R experiment cell
// ---------------------------------------------------------------------------

const CHUNK: u64 = 2_048;

/// Install and measure every group of the workload at one `R`.
///
/// Returns the metrics and the populated s-rule tables (for follow-on
/// failure replay). When `check_delivery` is set, every group's simulated
/// delivery is compared against the receiver set and the structural oracle;
/// any mismatch is an error.
pub fn run_cell(
    world: &World,
    cfg: &EncodingConfig,
    check_delivery: bool,
) -> Result<(CellMetrics, SRuleTables), ExperimentError> {
    let mut tables = SRuleTables::new(&world.topology);
    let mut metrics = CellMetrics {
        r: cfg.spurious_budget,
        groups: world.generator.num_groups(),
        traffic: world.spec.payloads.iter().map(|&p| (p, TrafficSums::default())).collect(),
        ..CellMetrics::default()
    };
    let mut latencies: Vec<f64> = Vec::with_capacity(metrics.groups.min(1 << 20) as usize);
    let no_failures = FailureSet::none();

    let n = world.generator.num_groups();
    let mut chunk_start = 0u64;
    while chunk_start < n {
        let chunk_end = (chunk_start + CHUNK).min(n);
        // parallel pure phase: generation, tree, clustering
        let pending: Vec<_> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|id| {
                let t0 = Instant::now();
                let group = world.group(id);
                let tree = compute_tree(&world.topology, &world.placement, &group);
                let source = repr_source(&world.placement, &group);
                let pend = encode_prules(&tree, &world.topology, cfg, source);
                (group, tree, source, pend, t0.elapsed().as_nanos() as u64)
            })
            .collect();

        // serial commit phase: admission in workload order
        for (group, tree, source, pend, pure_ns) in pending {
            let t1 = Instant::now();
            let gid = group.id;
            let f_max = cfg.srule_capacity;
            let enc = pend.admit(&world.topology, &mut |switches, bm| {
                tables.try_reserve(switches, gid, bm, f_max)
            });
            let header = wire::encode_header(&enc.header, world.topology.logical())
                .expect("layout-valid header");
            let admit_ns = t1.elapsed().as_nanos() as u64;
            latencies.push((pure_ns + admit_ns) as f64 / 1_000.0);

            debug_assert!(header.len() as u32 <= cfg.header_budget_bytes);
            metrics.max_header_bytes = metrics.max_header_bytes.max(header.len() as u32);
            if enc.leaf_layer.fully_covered() {
                metrics.covered_leaf += 1;
            }
            if enc.leaf_layer.fully_covered() && enc.spine_layer.fully_covered() {
                metrics.covered_all += 1;
            }

            if !world.spec.payloads.is_empty() && !tree.is_empty() {
                let report = simulate_group(
                    &world.topology,
                    &tables,
                    &no_failures,
                    gid,
                    &header,
                    source,
                    &tree.receiver_hosts,
                    world.spec.payloads[0],
                )
                .map_err(|e| ExperimentError::Delivery { group: gid, reason: e.to_string() })?;
                if !report.undelivered.is_empty() {
                    return Err(ExperimentError::Delivery {
                        group: gid,
                        reason: format!("undelivered receivers {:?}", report.undelivered),
                    });
                }
                if report.duplicate_deliveries > 0 {
                    return Err(ExperimentError::Delivery {
                        group: gid,
                        reason: format!("{} duplicate deliveries", report.duplicate_deliveries),
                    });
                }
                if check_delivery {
                    check_group_delivery(world, cfg, &group, &tree, &enc, source, &report)?;
                }
                metrics.spurious_deliveries += report.spurious_hosts.len() as u64;
                let header_overhead = report.total_bytes
                    - report.total_packets * world.spec.payloads[0] as u64;
                for (payload, sums) in &mut metrics.traffic {
                    let p = *payload;
                    sums.ideal +=
                        baseline_traffic(&world.topology, source, &tree.receiver_hosts, BaselineMode::Ideal, p);
                    sums.unicast +=
                        baseline_traffic(&world.topology, source, &tree.receiver_hosts, BaselineMode::Unicast, p);
                    sums.overlay +=
                        baseline_traffic(&world.topology, source, &tree.receiver_hosts, BaselineMode::Overlay, p);
                    let payload_total = report.total_packets * p as u64;
                    sums.elmo_payload += payload_total;
                    sums.elmo += payload_total + header_overhead;
                }
            }
        }
        chunk_start = chunk_end;
    }

    metrics.leaf_srules =
        OccupancyStats::from_occupancies(tables.layer_occupancies(Layer::DownstreamLeaf));
    metrics.spine_srules =
        OccupancyStats::from_occupancies(tables.layer_occupancies(Layer::DownstreamSpine));
    metrics.latency = LatencyStats::from_micros(latencies);
    Ok((metrics, tables))
}

pub fn repr_source(placement: &Placement, group: &GroupSpec) -> u32 {
    let vm = group
        .members
        .iter()
        .filter(|m| m.role.can_send())
        .map(|m| m.vm)
        .min()
        .or_else(|| group.members.first().map(|m| m.vm))
        .expect("groups are never empty");
    placement.host_of_vm(vm)
}

fn check_group_delivery(
    world: &World,
    cfg: &EncodingConfig,
    group: &GroupSpec,
    tree: &MulticastTree,
    enc: &GroupEncoding,
    source: u32,
    report: &crate::dataplane::DeliveryReport,
) -> Result<(), ExperimentError> {
    let fail = |reason: String| Err(ExperimentError::Delivery { group: group.id, reason });
    let expected = oracle_delivery(&world.topology, tree, enc, source);
    if report.delivered != expected.delivered {
        return fail(format!(
            "delivered {:?} but the structural oracle expects {:?}",
            report.delivered, expected.delivered
        ));
    }
    if report.spurious_hosts.len() as u64 != expected.spurious {
        return fail(format!(
            "{} spurious deliveries, oracle expects {}",
            report.spurious_hosts.len(),
            expected.spurious
        ));
    }
    if cfg.spurious_budget == 0
        && cfg.srule_capacity == u32::MAX
        && !report.spurious_hosts.is_empty()
    {
        return fail("spurious deliveries with R = 0 and unbounded s-rules".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// structural delivery oracle
// ---------------------------------------------------------------------------

/// Expected delivery of one packet, derived by walking the layer encodings
/// directly (no wire format, no parser, no hop-by-hop simulation). Serves
/// as the independent check for the data-plane path.
#[derive(Debug, Clone, Default)]
pub struct OracleDelivery {
    pub delivered: Vec<u32>,
    /// Count of delivered hosts outside the tree's receiver set.
    pub spurious: u64,
}

pub fn oracle_delivery(
    topology: &Topology,
    tree: &MulticastTree,
    enc: &GroupEncoding,
    source: u32,
) -> OracleDelivery {
    let mut delivered: std::collections::BTreeSet<u32> = Default::default();
    let source_leaf = topology.leaf_of_host(source);
    let source_pod = topology.pod_of_leaf(source_leaf);
    if tree.receiver_hosts.binary_search(&source).is_ok() {
        delivered.insert(source);
    }

    // upstream leaf: local receiver ports
    if let Some(bm) = tree.leaf_bitmap(source_leaf) {
        for p in bm.iter_ones() {
            delivered.insert(topology.host_of(source_leaf, p));
        }
    }

    let deliver_leaf_down = |leaf: u16, delivered: &mut std::collections::BTreeSet<u32>| {
        // downstream leaf decision: p-rule, else s-rule, else default
        let layer = &enc.leaf_layer;
        let bitmap = layer
            .p_rules
            .iter()
            .find(|r| r.switches.contains(&leaf))
            .map(|r| r.bitmap)
            .or_else(|| {
                layer.s_rule_installs.iter().find(|(l, _)| *l == leaf).map(|(_, b)| *b)
            })
            .or(layer.default_rule.as_ref().map(|d| d.bitmap));
        if let Some(bm) = bitmap {
            for p in bm.iter_ones() {
                delivered.insert(topology.host_of(leaf, p));
            }
        }
    };

    // upstream spine: other receiver leaves of the source pod
    if tree.leaf_bitmaps.len() > 1 || tree.leaf_bitmaps.first().map(|e| e.0) != Some(source_leaf)
    {
        if let Some(pod_bm) = tree.spine_bitmap(source_pod) {
            for idx in pod_bm.iter_ones() {
                let leaf = topology.leaf_global(source_pod, idx);
                if leaf != source_leaf {
                    deliver_leaf_down(leaf, &mut delivered);
                }
            }
        }
        // core: remaining pods via the downstream spine layer
        for pod in tree.receiver_pods().filter(|&p| p != source_pod) {
            let layer = &enc.spine_layer;
            let bitmap = layer
                .p_rules
                .iter()
                .find(|r| r.switches.contains(&pod))
                .map(|r| r.bitmap)
                .or_else(|| {
                    layer.s_rule_installs.iter().find(|(p, _)| *p == pod).map(|(_, b)| *b)
                })
                .or(layer.default_rule.as_ref().map(|d| d.bitmap));
            if let Some(bm) = bitmap {
                for idx in bm.iter_ones() {
                    deliver_leaf_down(topology.leaf_global(pod, idx), &mut delivered);
                }
            }
        }
    }

    let spurious = delivered
        .iter()
        .filter(|h| tree.receiver_hosts.binary_search(h).is_err())
        .count() as u64;
    OracleDelivery { delivered: delivered.into_iter().collect(), spurious }
}

// ---------------------------------------------------------------------------
// churn replay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct NormalizedUpdates {
    pub events: u64,
    pub hypervisor: f64,
    pub leaf: f64,
    pub spine: f64,
}

#[derive(Debug, Clone)]
pub struct ChurnMetrics {
    pub join: NormalizedUpdates,
    pub leave: NormalizedUpdates,
    pub rate: RateReport,
    pub diffs: Vec<UpdateDiff>,
}

/// Install every group into a controller and replay a generated churn
/// stream. Intended for reduced scales: the controller materializes all
/// group state.
pub fn run_churn(
    world: &World,
    cfg: &EncodingConfig,
    n_events: u64,
    events_per_second: f64,
    churn_seed: u64,
) -> Result<ChurnMetrics, ExperimentError> {
    let mut controller =
        Controller::new(world.topology.clone(), world.placement.clone(), *cfg);
    let groups: Vec<GroupSpec> = (0..world.generator.num_groups())
        .map(|id| world.generator.group(id))
        .collect();
    for g in &groups {
        controller.install_group(g).expect("fresh install");
    }
    let starts: Vec<u32> = {
        let mut acc = 0;
        world
            .tenant_sizes
            .iter()
            .map(|&s| {
                let v = acc;
                acc += s;
                v
            })
            .collect()
    };
    let events = generate_churn(
        &groups,
        &world.tenant_sizes,
        |t| starts[t as usize],
        n_events,
        churn_seed,
    )?;

    let mut diffs = Vec::with_capacity(events.len());
    let mut join = NormalizedUpdates::default();
    let mut leave = NormalizedUpdates::default();
    for ev in &events {
        let size = controller
            .group_spec(ev.group)
            .map(|g| g.members.len())
            .unwrap_or(1)
            .max(1) as f64;
        let diff = controller.apply_event(ev).expect("generated events are valid");
        let agg = match ev.kind {
            EventKind::Join => &mut join,
            EventKind::Leave => &mut leave,
        };
        agg.events += 1;
        agg.hypervisor += diff.hypervisors.len() as f64 / size;
        agg.leaf += diff.leaves.len() as f64 / size;
        agg.spine += diff.spines.len() as f64 / size;
        diffs.push(diff);
    }
    for agg in [&mut join, &mut leave] {
        let n = agg.events.max(1) as f64;
        agg.hypervisor /= n;
        agg.leaf /= n;
        agg.spine /= n;
    }
    let rate = update_rate_report(&diffs, events_per_second);
    Ok(ChurnMetrics { join, leave, rate, diffs })
}

// ---------------------------------------------------------------------------
// failure replay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct FailureMetrics {
    pub groups: u64,
    pub impacted: u64,
    pub post_failover_delivered: u64,
    pub partitioned: u64,
}

impl FailureMetrics {
    pub fn impacted_pct(&self) -> f64 {
        100.0 * self.impacted as f64 / self.groups.max(1) as f64
    }
}

/// Streamed single-switch failure replay over a cell's installed tables:
/// counts groups whose representative upstream path traversed the failed
/// switch, then re-simulates each impacted group under the failure and
/// verifies delivery.
///
/// Tables are mutable only because re-deriving a group's header re-admits
/// its own spills; admission is idempotent, so the tables are unchanged.
pub fn run_failure(
    world: &World,
    cfg: &EncodingConfig,
    tables: &mut SRuleTables,
    failed: SwitchRef,
) -> Result<FailureMetrics, ExperimentError> {
    let mut failures = FailureSet::none();
    match failed {
        SwitchRef::Spine(s) => failures.fail_spine(s),
        SwitchRef::Core(c) => failures.fail_core(c),
        SwitchRef::Leaf(_) => {}
    }
    let n = world.generator.num_groups();
    let mut metrics = FailureMetrics { groups: n, ..FailureMetrics::default() };

    let spec = world.topology.spec();
    let mut chunk_start = 0u64;
    while chunk_start < n {
        let chunk_end = (chunk_start + CHUNK).min(n);
        let hits: Vec<_> = (chunk_start..chunk_end)
            .into_par_iter()
            .filter_map(|id| {
                let group = world.group(id);
                let tree = compute_tree(&world.topology, &world.placement, &group);
                if tree.is_empty() {
                    return None;
                }
                let source = repr_source(&world.placement, &group);
                let leaf = world.topology.leaf_of_host(source);
                let beyond_leaf = tree.leaf_bitmaps.len() > 1
                    || tree.leaf_bitmaps.first().map(|e| e.0) != Some(leaf);
                if !beyond_leaf {
                    return None;
                }
                let pod = world.topology.pod_of_leaf(leaf);
                let spine_pick = crate::dataplane::multipath_pick(
                    group.id,
                    source,
                    1,
                    spec.spines_per_pod as usize,
                );
                let core_pick =
                    crate::dataplane::multipath_pick(group.id, source, 2, spec.cores as usize);
                let hit = match failed {
                    SwitchRef::Spine(s) => {
                        world.topology.spine_global(pod, spine_pick as u8) == s
                    }
                    SwitchRef::Core(c) => core_pick as u16 == c,
                    SwitchRef::Leaf(_) => false,
                };
                hit.then(|| (group, tree, source))
            })
            .collect();

        for (group, tree, source) in hits {
            metrics.impacted += 1;
            // re-derive this group's header against the installed tables
            // (deterministic: the same spills admit identically)
            let gid = group.id;
            let f_max = cfg.srule_capacity;
            let enc = encode_prules(&tree, &world.topology, cfg, source).admit(
                &world.topology,
                &mut |switches, bm| tables.try_reserve(switches, gid, bm, f_max),
            );
            let header = wire::encode_header(&enc.header, world.topology.logical())
                .expect("layout-valid header");
            let report = simulate_group(
                &world.topology,
                tables,
                &failures,
                gid,
                &header,
                source,
                &tree.receiver_hosts,
                1_500,
            )
            .map_err(|e| ExperimentError::Delivery { group: gid, reason: e.to_string() })?;
            if report.undelivered.is_empty() {
                metrics.post_failover_delivered += 1;
            } else {
                metrics.partitioned += 1;
            }
        }
        chunk_start = chunk_end;
    }
    Ok(metrics)
}
