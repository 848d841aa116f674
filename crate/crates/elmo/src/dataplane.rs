//! Per-switch forwarding of encoded packets and traffic accounting.
//!
//! Precedence at a switch: a matching p-rule from the header, else the
//! switch's own s-rule for the group address, else the layer's default
//! p-rule, else drop. Upstream rules with the multipath flag pick one live
//! uplink by a deterministic hash of (group, source host); with the flag
//! clear the explicitly set upstream ports fan out.

use crate::bitmap::PortBitmap;
use crate::topology::{FailureSet, SwitchRef, Topology};
use crate::wire::{self, MatchResult, WireError};
use crate::encoding::Layer;
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataplaneError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("forwarding loop at {switch:?} going {direction:?}")]
    Loop { switch: SwitchRef, direction: Direction },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

// ---------------------------------------------------------------------------
// s-rule tables
// ---------------------------------------------------------------------------

/// Group tables of every network switch, keyed by the group destination
/// address. Cores never hold s-rules (the core section is a single exact
/// rule).
#[derive(Debug, Clone, Default)]
pub struct SRuleTables {
    leaf: Vec<HashMap<u32, PortBitmap>>,
    spine: Vec<HashMap<u32, PortBitmap>>,
}

impl SRuleTables {
    pub fn new(topology: &Topology) -> Self {
        SRuleTables {
            leaf: vec![HashMap::new(); topology.num_leaves() as usize],
            spine: vec![HashMap::new(); topology.num_spines() as usize],
        }
    }

    fn slot(&self, switch: SwitchRef) -> Option<&HashMap<u32, PortBitmap>> {
        match switch {
            SwitchRef::Leaf(l) => self.leaf.get(l as usize),
            SwitchRef::Spine(s) => self.spine.get(s as usize),
            SwitchRef::Core(_) => None,
        }
    }

    fn slot_mut(&mut self, switch: SwitchRef) -> Option<&mut HashMap<u32, PortBitmap>> {
        match switch {
            SwitchRef::Leaf(l) => self.leaf.get_mut(l as usize),
            SwitchRef::Spine(s) => self.spine.get_mut(s as usize),
            SwitchRef::Core(_) => None,
        }
    }

    pub fn occupancy(&self, switch: SwitchRef) -> usize {
        self.slot(switch).map_or(0, HashMap::len)
    }

    pub fn lookup(&self, switch: SwitchRef, group: u32) -> Option<&PortBitmap> {
        self.slot(switch).and_then(|m| m.get(&group))
    }

    pub fn insert(&mut self, switch: SwitchRef, group: u32, bitmap: PortBitmap) {
        if let Some(m) = self.slot_mut(switch) {
            m.insert(group, bitmap);
        }
    }

    pub fn remove(&mut self, switch: SwitchRef, group: u32) -> bool {
        self.slot_mut(switch).map_or(false, |m| m.remove(&group).is_some())
    }

    /// Capacity-checked reservation of one slot per switch, all or nothing.
    /// Entries are inserted immediately so later reservations see them.
    pub fn try_reserve(
        &mut self,
        switches: &[SwitchRef],
        group: u32,
        bitmap: &PortBitmap,
        f_max: u32,
    ) -> bool {
        let fits = switches.iter().all(|&s| {
            self.slot(s).map_or(false, |m| {
                m.len() < f_max as usize || m.contains_key(&group)
            })
        });
        if fits {
            for &s in switches {
                self.insert(s, group, *bitmap);
            }
        }
        fits
    }

    /// Occupancy of every switch in a layer, for distribution statistics.
    pub fn layer_occupancies(&self, layer: Layer) -> Vec<usize> {
        match layer {
            Layer::DownstreamLeaf => self.leaf.iter().map(HashMap::len).collect(),
            Layer::DownstreamSpine => self.spine.iter().map(HashMap::len).collect(),
            _ => Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// forwarding
// ---------------------------------------------------------------------------

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic multipath choice over `n` live options.
pub(crate) fn multipath_pick(group: u32, source_host: u32, salt: u64, n: usize) -> usize {
    debug_assert!(n > 0);
    (splitmix((group as u64) << 32 | source_host as u64 ^ salt.rotate_left(17)) % n as u64) as usize
}

/// Where a rule's forwarding decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOrigin {
    PRule,
    Upstream { multipath: bool },
    SRule,
    DefaultPRule,
    Drop,
}

/// One switch's handling of a packet: the chosen output ports (layer-local
/// widths), the rule source, and the header bytes after popping the
/// consumed layer.
#[derive(Debug, Clone)]
pub struct ForwardDecision {
    pub ports: PortBitmap,
    pub origin: RuleOrigin,
    pub popped: Vec<u8>,
}

/// Apply the match-precedence and pop the consumed layer. `ports` for a
/// core is the logical pod bitmap; the caller expands pods to physical
/// spines per the multipath scheme.
pub fn forward_at_switch(
    topology: &Topology,
    tables: &SRuleTables,
    switch: SwitchRef,
    direction: Direction,
    group: u32,
    header: &[u8],
) -> Result<ForwardDecision, DataplaneError> {
    let lt = topology.logical();
    let (layer, identity) = match (switch, direction) {
        (SwitchRef::Leaf(l), Direction::Up) => (Layer::UpstreamLeaf, l),
        (SwitchRef::Spine(s), Direction::Up) => (Layer::UpstreamSpine, s),
        (SwitchRef::Core(c), _) => (Layer::Core, c),
        (SwitchRef::Spine(s), Direction::Down) => {
            (Layer::DownstreamSpine, topology.pod_of_spine(s))
        }
        (SwitchRef::Leaf(l), Direction::Down) => (Layer::DownstreamLeaf, l),
    };
    let matched = wire::parse_for_switch(header, identity, layer, lt)?;
    let (ports, origin) = match matched {
        MatchResult::MatchedUpstream(rule) => {
            (rule.bitmap, RuleOrigin::Upstream { multipath: rule.multipath })
        }
        MatchResult::Matched(bm) => (bm, RuleOrigin::PRule),
        MatchResult::Default(d) => match tables.lookup(switch, group) {
            Some(bm) => (*bm, RuleOrigin::SRule),
            None => (d, RuleOrigin::DefaultPRule),
        },
        MatchResult::NoRule => match tables.lookup(switch, group) {
            Some(bm) => (*bm, RuleOrigin::SRule),
            None => {
                let width = match layer {
                    Layer::DownstreamSpine => lt.spine_down_width,
                    Layer::DownstreamLeaf => lt.leaf_down_width,
                    Layer::Core => lt.core_width,
                    Layer::UpstreamLeaf => lt.leaf_full_width,
                    Layer::UpstreamSpine => lt.spine_full_width,
                };
                (PortBitmap::empty(width), RuleOrigin::Drop)
            }
        },
    };
    let popped = if origin == RuleOrigin::Drop {
        Vec::new()
    } else {
        wire::pop_layers(header, layer)?
    };
    Ok(ForwardDecision { ports, origin, popped })
}

// ---------------------------------------------------------------------------
// group simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Node {
    Host(u32),
    Switch(SwitchRef),
}

/// Outcome of injecting one packet from one source.
#[derive(Debug, Clone, Default)]
pub struct DeliveryReport {
    /// Hosts that received the packet, ascending.
    pub delivered: Vec<u32>,
    /// Deliveries to hosts outside the receiver set.
    pub spurious_hosts: Vec<u32>,
    /// Receivers that never got the packet (failures/partitions).
    pub undelivered: Vec<u32>,
    pub duplicate_deliveries: u32,
    pub dropped_packets: u32,
    /// (packets, bytes) per traversed link; bytes include the remaining
    /// header at that hop.
    pub per_link: BTreeMap<(Node, Node), (u64, u64)>,
    pub total_packets: u64,
    pub total_bytes: u64,
}

impl DeliveryReport {
    fn record(&mut self, from: Node, to: Node, bytes: u64) {
        let e = self.per_link.entry((from, to)).or_insert((0, 0));
        e.0 += 1;
        e.1 += bytes;
        self.total_packets += 1;
        self.total_bytes += bytes;
    }

    pub fn delivered_exactly(&self, receivers: &[u32]) -> bool {
        self.delivered == receivers && self.spurious_hosts.is_empty()
    }
}

/// Propagate one packet from `source_host` through the fabric.
///
/// `header` is the wire encoding for this source; `receivers` the expected
/// receiver hosts (ascending). Spurious and missing deliveries are derived
/// against it. A receiver VM co-located on the source host is delivered by
/// the hypervisor directly and consumes no network link.
pub fn simulate_group(
    topology: &Topology,
    tables: &SRuleTables,
    failures: &FailureSet,
    group: u32,
    header: &[u8],
    source_host: u32,
    receivers: &[u32],
    payload_bytes: u32,
) -> Result<DeliveryReport, DataplaneError> {
    let mut report = DeliveryReport::default();
    let mut delivered_counts: BTreeMap<u32, u32> = BTreeMap::new();
    let spec = topology.spec();
    let payload = payload_bytes as u64;

    if receivers.binary_search(&source_host).is_ok() {
        *delivered_counts.entry(source_host).or_default() += 1;
    }

    let source_leaf = topology.leaf_of_host(source_host);
    report.record(
        Node::Host(source_host),
        Node::Switch(SwitchRef::Leaf(source_leaf)),
        payload + header.len() as u64,
    );

    let mut visited: HashSet<(SwitchRef, Direction)> = HashSet::new();
    let mut queue: Vec<(SwitchRef, Direction, Vec<u8>)> =
        vec![(SwitchRef::Leaf(source_leaf), Direction::Up, header.to_vec())];

    while let Some((switch, direction, bytes)) = queue.pop() {
        if !visited.insert((switch, direction)) {
            return Err(DataplaneError::Loop { switch, direction });
        }
        let decision = forward_at_switch(topology, tables, switch, direction, group, &bytes)?;
        if decision.origin == RuleOrigin::Drop {
            report.dropped_packets += 1;
            continue;
        }
        let hdr_len = decision.popped.len() as u64;
        match (switch, direction) {
            (SwitchRef::Leaf(leaf), dir) => {
                // host-facing deliveries: header fully stripped
                for port in decision.ports.iter_ones().filter(|&p| p < spec.hosts_per_leaf as u8) {
                    let host = topology.host_of(leaf, port);
                    report.record(Node::Switch(switch), Node::Host(host), payload);
                    *delivered_counts.entry(host).or_default() += 1;
                }
                if dir == Direction::Up {
                    let up = upstream_targets(
                        topology,
                        failures,
                        &decision,
                        group,
                        source_host,
                        spec.hosts_per_leaf as u8,
                        |i| SwitchRef::Spine(topology.spine_global(topology.pod_of_leaf(leaf), i)),
                        spec.spines_per_pod as u8,
                        1,
                    );
                    for spine in up {
                        report.record(Node::Switch(switch), Node::Switch(spine), payload + hdr_len);
                        queue.push((spine, Direction::Up, decision.popped.clone()));
                    }
                }
            }
            (SwitchRef::Spine(spine), Direction::Up) => {
                let pod = topology.pod_of_spine(spine);
                for idx in decision.ports.iter_ones().filter(|&p| p < spec.leaves_per_pod as u8) {
                    let leaf_id = topology.leaf_global(pod, idx);
                    let leaf = SwitchRef::Leaf(leaf_id);
                    let egress = wire::egress_header_len(
                        &decision.popped,
                        Layer::DownstreamLeaf,
                        leaf_id,
                        topology.logical(),
                    )? as u64;
                    report.record(Node::Switch(switch), Node::Switch(leaf), payload + egress);
                    queue.push((leaf, Direction::Down, decision.popped.clone()));
                }
                let up = upstream_targets(
                    topology,
                    failures,
                    &decision,
                    group,
                    source_host,
                    spec.leaves_per_pod as u8,
                    |i| SwitchRef::Core(i as u16),
                    spec.cores as u8,
                    2,
                );
                for core in up {
                    report.record(Node::Switch(switch), Node::Switch(core), payload + hdr_len);
                    queue.push((core, Direction::Down, decision.popped.clone()));
                }
            }
            (SwitchRef::Core(_), _) => {
                for pod in decision.ports.iter_ones() {
                    let live: Vec<u8> = (0..spec.spines_per_pod as u8)
                        .filter(|&i| {
                            !failures.spine_down(topology.spine_global(pod as u16, i))
                        })
                        .collect();
                    if live.is_empty() {
                        report.dropped_packets += 1;
                        continue;
                    }
                    let pick =
                        live[multipath_pick(group, source_host, 0x1000 + pod as u64, live.len())];
                    let spine = SwitchRef::Spine(topology.spine_global(pod as u16, pick));
                    let egress = wire::egress_header_len(
                        &decision.popped,
                        Layer::DownstreamSpine,
                        pod as u16,
                        topology.logical(),
                    )? as u64;
                    report.record(Node::Switch(switch), Node::Switch(spine), payload + egress);
                    queue.push((spine, Direction::Down, decision.popped.clone()));
                }
            }
            (SwitchRef::Spine(spine), Direction::Down) => {
                let pod = topology.pod_of_spine(spine);
                for idx in decision.ports.iter_ones().filter(|&p| p < spec.leaves_per_pod as u8) {
                    let leaf_id = topology.leaf_global(pod, idx);
                    let leaf = SwitchRef::Leaf(leaf_id);
                    let egress = wire::egress_header_len(
                        &decision.popped,
                        Layer::DownstreamLeaf,
                        leaf_id,
                        topology.logical(),
                    )? as u64;
                    report.record(Node::Switch(switch), Node::Switch(leaf), payload + egress);
                    queue.push((leaf, Direction::Down, decision.popped.clone()));
                }
            }
        }
    }

    for (host, count) in delivered_counts {
        report.delivered.push(host);
        if count > 1 {
            report.duplicate_deliveries += count - 1;
        }
        if receivers.binary_search(&host).is_err() {
            report.spurious_hosts.push(host);
        }
    }
    report.undelivered = receivers
        .iter()
        .copied()
        .filter(|r| report.delivered.binary_search(r).is_err())
        .collect();
    Ok(report)
}

/// Expand an upstream decision into target switches: one hash-picked live
/// uplink under multipath, every explicitly set (live) upstream port
/// otherwise.
#[allow(clippy::too_many_arguments)]
fn upstream_targets(
    _topology: &Topology,
    failures: &FailureSet,
    decision: &ForwardDecision,
    group: u32,
    source_host: u32,
    first_up_port: u8,
    to_switch: impl Fn(u8) -> SwitchRef,
    fan: u8,
    salt: u64,
) -> Vec<SwitchRef> {
    let is_live = |sw: &SwitchRef| match sw {
        SwitchRef::Spine(s) => !failures.spine_down(*s),
        SwitchRef::Core(c) => !failures.core_down(*c),
        SwitchRef::Leaf(_) => true,
    };
    match decision.origin {
        RuleOrigin::Upstream { multipath: true } => {
            let live: Vec<SwitchRef> =
                (0..fan).map(&to_switch).filter(is_live).collect();
            if live.is_empty() {
                return Vec::new();
            }
            vec![live[multipath_pick(group, source_host, salt, live.len())]]
        }
        RuleOrigin::Upstream { multipath: false } => decision
            .ports
            .iter_ones()
            .filter(|&p| p >= first_up_port)
            .map(|p| to_switch(p - first_up_port))
            .filter(is_live)
            .collect(),
        // downstream rules never climb
        _ => Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// One copy per multicast-tree link.
    Ideal,
    /// The source unicasts a full path to every receiver.
    Unicast,
    /// The source unicasts one copy per participating leaf to a designated
    /// host, which re-replicates to the leaf's other receivers.
    Overlay,
}

fn path_links(topology: &Topology, a: u32, b: u32) -> u64 {
    if a == b {
        0
    } else if topology.leaf_of_host(a) == topology.leaf_of_host(b) {
        2
    } else if topology.pod_of_leaf(topology.leaf_of_host(a))
        == topology.pod_of_leaf(topology.leaf_of_host(b))
    {
        4
    } else {
        6
    }
}

/// Payload bytes put on the wire by the given delivery scheme for one packet
/// from `source_host` to `receivers` (ascending). Baselines carry no
/// in-packet forwarding state.
pub fn baseline_traffic(
    topology: &Topology,
    source_host: u32,
    receivers: &[u32],
    mode: BaselineMode,
    payload_bytes: u32,
) -> u64 {
    let payload = payload_bytes as u64;
    match mode {
        BaselineMode::Unicast => receivers
            .iter()
            .map(|&r| path_links(topology, source_host, r) * payload)
            .sum(),
        BaselineMode::Overlay => {
            let mut by_leaf: BTreeMap<u16, Vec<u32>> = BTreeMap::new();
            for &r in receivers {
                by_leaf.entry(topology.leaf_of_host(r)).or_default().push(r);
            }
            let mut bytes = 0u64;
            for (_, hosts) in by_leaf {
                let designated = hosts[0];
                bytes += path_links(topology, source_host, designated) * payload;
                for &h in &hosts[1..] {
                    bytes += path_links(topology, designated, h) * payload;
                }
            }
            bytes
        }
        BaselineMode::Ideal => {
            let source_leaf = topology.leaf_of_host(source_host);
            let source_pod = topology.pod_of_leaf(source_leaf);
            let mut leaves: Vec<u16> = Vec::new();
            let mut pods: Vec<u16> = Vec::new();
            let mut links = 0u64;
            for &r in receivers {
                if r != source_host {
                    links += 1; // leaf -> host
                }
                let leaf = topology.leaf_of_host(r);
                if leaves.last() != Some(&leaf) {
                    leaves.push(leaf);
                    let pod = topology.pod_of_leaf(leaf);
                    if pods.last() != Some(&pod) {
                        pods.push(pod);
                    }
                }
            }
            if receivers.is_empty() || (receivers == [source_host]) {
                return 0;
            }
            links += 1; // source host -> leaf
            let beyond_leaf = leaves.iter().any(|&l| l != source_leaf);
            if beyond_leaf {
                links += 1; // source leaf -> spine
                links += leaves.iter().filter(|&&l| l != source_leaf).count() as u64;
            }
            let beyond_pod = pods.iter().any(|&p| p != source_pod);
            if beyond_pod {
                links += 1; // spine -> core
                links += pods.iter().filter(|&&p| p != source_pod).count() as u64;
            }
            links * payload
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologySpec;

    fn topo() -> Topology {
        Topology::build(TopologySpec::example()).unwrap()
    }

    #[test]
    fn single_receiver_baselines_agree() {
        let t = topo();
        let src = t.host_of(0, 0);
        let rcv = [t.host_of(5, 2)];
        let ideal = baseline_traffic(&t, src, &rcv, BaselineMode::Ideal, 100);
        let uni = baseline_traffic(&t, src, &rcv, BaselineMode::Unicast, 100);
        let ovl = baseline_traffic(&t, src, &rcv, BaselineMode::Overlay, 100);
        assert_eq!(ideal, 600); // 6 links cross-pod
        assert_eq!(uni, ideal);
        assert_eq!(ovl, ideal);
    }

    #[test]
    fn unicast_counts_full_paths() {
        let t = topo();
        let src = t.host_of(0, 0);
        let rcv = [t.host_of(0, 1), t.host_of(1, 0), t.host_of(4, 0)];
        // same leaf: 2, same pod: 4, cross pod: 6
        assert_eq!(baseline_traffic(&t, src, &rcv, BaselineMode::Unicast, 1), 12);
    }

    #[test]
    fn overlay_re_replicates_locally() {
        let t = topo();
        let src = t.host_of(0, 0);
        let rcv = [t.host_of(4, 1), t.host_of(4, 3), t.host_of(4, 5)];
        // one cross-pod copy (6) + two local re-replications (2 each)
        assert_eq!(baseline_traffic(&t, src, &rcv, BaselineMode::Overlay, 1), 10);
    }

    #[test]
    fn ideal_counts_tree_links() {
        let t = topo();
        let src = t.host_of(0, 0);
        // receivers on leaves 0 (2 hosts) and 5: tree links =
        // src->L0 (1) + L0->hosts (2) + L0->spine (1) + spine->core (1)
        // + core->pod2 spine (1) + spine->L5 (1) + L5->host (1) = 8
        let rcv = [t.host_of(0, 3), t.host_of(0, 5), t.host_of(5, 2)];
        assert_eq!(baseline_traffic(&t, src, &rcv, BaselineMode::Ideal, 1), 8);
    }
}
