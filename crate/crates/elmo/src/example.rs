//! The running example: a four-pod Clos (two spines and two leaves per pod,
//! eight hosts per leaf, four cores) with one multicast group spanning pods
//! 0, 2, and 3.
//!
//! Receivers sit under leaves L0 (host ports 3,5,6,7), L5 (0,1,3),
//! L6 (2,3,5,6,7), and L7 (0,1,3,4); the sender is host 0 under L0. The
//! three encoding modes compare as 161 bits per physical switch, 83 bits on
//! the logical topology, and 62 bits with rule sharing at `R = 2` (clusters
//! {P2,P3}, {L0,L6}, {L5,L7}).

use crate::dataplane::SRuleTables;
use crate::encoding::{
    compute_tree, encode_group, header_content_bits, physical_encoding_bits, EncodingConfig,
    GroupEncoding, MulticastTree,
};
use crate::placement::Placement;
use crate::topology::{Topology, TopologySpec};
use crate::workload::{GroupSpec, Member, Role};

pub const EXAMPLE_GROUP_ID: u32 = 7;

/// The example world: identity placement (vm id = host id) and the orange
/// group.
pub struct WorkedExample {
    pub topology: Topology,
    pub placement: Placement,
    pub group: GroupSpec,
    pub source_host: u32,
}

impl WorkedExample {
    pub fn new() -> Self {
        let topology = Topology::build(TopologySpec::example()).expect("static spec");
        let placement =
            Placement::from_assignment((0..topology.num_hosts()).collect(), vec![0, topology.num_hosts()]);
        let mut members: Vec<Member> = Vec::new();
        let mut add = |leaf: u16, ports: &[u8], role: Role, t: &Topology| {
            for &p in ports {
                members.push(Member { vm: t.host_of(leaf, p), role });
            }
        };
        add(0, &[3, 5, 6, 7], Role::Receiver, &topology);
        add(5, &[0, 1, 3], Role::Receiver, &topology);
        add(6, &[2, 3, 5, 6, 7], Role::Receiver, &topology);
        add(7, &[0, 1, 3, 4], Role::Receiver, &topology);
        let source_host = topology.host_of(0, 0);
        members.push(Member { vm: source_host, role: Role::Sender });
        members.sort_unstable_by_key(|m| m.vm);
        let group = GroupSpec { id: EXAMPLE_GROUP_ID, tenant: 0, members };
        WorkedExample { topology, placement, group, source_host }
    }

    pub fn tree(&self) -> MulticastTree {
        compute_tree(&self.topology, &self.placement, &self.group)
    }

    fn base_config(&self) -> EncodingConfig {
        EncodingConfig {
            spurious_budget: 0,
            h_max_spine: 31,
            h_max_leaf: 31,
            k_max_spine: 2,
            k_max_leaf: 2,
            srule_capacity: 0,
            header_budget_bytes: 325,
        }
    }

    /// One p-rule per logical switch, no sharing.
    pub fn logical_config(&self) -> EncodingConfig {
        self.base_config()
    }

    /// Rule sharing at `R = 2` under the figure's rule budget: one spine
    /// p-rule, two leaf p-rules.
    pub fn shared_config(&self) -> EncodingConfig {
        EncodingConfig {
            spurious_budget: 2,
            h_max_spine: 1,
            h_max_leaf: 2,
            ..self.base_config()
        }
    }

    /// The constrained scenario: `R = 0`, one spine and two leaf p-rules,
    /// `f_max` s-rules per switch.
    pub fn constrained_config(&self, f_max: u32) -> EncodingConfig {
        EncodingConfig {
            h_max_spine: 1,
            h_max_leaf: 2,
            srule_capacity: f_max,
            ..self.base_config()
        }
    }

    /// Encode the group under `cfg` against fresh s-rule tables.
    pub fn encode(&self, cfg: &EncodingConfig) -> (GroupEncoding, SRuleTables) {
        let tree = self.tree();
        let mut tables = SRuleTables::new(&self.topology);
        let enc = encode_group(&tree, &self.topology, cfg, self.source_host, &mut |sw, bm| {
            tables.try_reserve(sw, EXAMPLE_GROUP_ID, bm, cfg.srule_capacity)
        });
        (enc, tables)
    }

    /// Per-physical-switch header size in bits.
    pub fn physical_bits(&self) -> u32 {
        physical_encoding_bits(&self.tree(), &self.topology, self.source_host)
    }

    /// Logical-topology header size in bits, no sharing.
    pub fn logical_bits(&self) -> u32 {
        let (enc, _) = self.encode(&self.logical_config());
        header_content_bits(&enc.header, self.topology.logical())
    }

    /// Shared-rule header size in bits at `R = 2`.
    pub fn shared_bits(&self) -> u32 {
        let (enc, _) = self.encode(&self.shared_config());
        header_content_bits(&enc.header, self.topology.logical())
    }
}

impl Default for WorkedExample {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmap::PortBitmap;
    use crate::encoding::ApexLayer;
    use crate::topology::SwitchRef;

    fn sets(rules: &[crate::encoding::SharedRule]) -> Vec<Vec<u16>> {
        let mut v: Vec<Vec<u16>> = rules.iter().map(|r| r.switches.clone()).collect();
        v.sort();
        v
    }

    #[test]
    fn tree_matches_figure() {
        let ex = WorkedExample::new();
        let tree = ex.tree();
        assert_eq!(tree.apex, ApexLayer::Core);
        assert_eq!(
            tree.leaf_bitmap(0).unwrap().display_split(8),
            "00010111"
        );
        assert_eq!(tree.spine_bitmap(2).unwrap().to_string(), "01");
        assert_eq!(tree.spine_bitmap(3).unwrap().to_string(), "11");
    }

    #[test]
    fn header_sizes_reproduce_the_three_modes() {
        let ex = WorkedExample::new();
        assert_eq!(ex.physical_bits(), 161);
        assert_eq!(ex.logical_bits(), 83);
        assert_eq!(ex.shared_bits(), 62);
    }

    #[test]
    fn shared_mode_forms_the_expected_clusters() {
        let ex = WorkedExample::new();
        let (enc, _) = ex.encode(&ex.shared_config());
        assert_eq!(sets(&enc.header.down_spine.rules), vec![vec![2, 3]]);
        assert_eq!(sets(&enc.header.down_leaf.rules), vec![vec![0, 6], vec![5, 7]]);
        assert!(enc.header.down_leaf.default.is_none());
        assert!(enc.s_rule_installs.is_empty());
    }

    #[test]
    fn srule_scenario_places_rules_at_l6_l7_and_p3() {
        let ex = WorkedExample::new();
        let (enc, tables) = ex.encode(&ex.constrained_config(1));
        // spine p-rule 01 serves pod 2; pod 3 falls to s-rules with bitmap 11
        assert_eq!(sets(&enc.header.down_spine.rules), vec![vec![2]]);
        assert_eq!(enc.header.down_spine.rules[0].bitmap.to_string(), "01");
        assert_eq!(
            enc.spine_layer.s_rule_installs,
            vec![(3, PortBitmap::parse("11").unwrap())]
        );
        // leaves L5 and L0 keep p-rules; L6 and L7 take s-rules
        assert_eq!(sets(&enc.header.down_leaf.rules), vec![vec![0], vec![5]]);
        let leaf_spills: Vec<u16> =
            enc.leaf_layer.s_rule_installs.iter().map(|(l, _)| *l).collect();
        assert_eq!(leaf_spills, vec![6, 7]);
        // physical installs: both spines of pod 3 plus the two leaves
        for spine in [6u16, 7] {
            assert_eq!(
                tables.lookup(SwitchRef::Spine(spine), EXAMPLE_GROUP_ID).unwrap().to_string(),
                "11"
            );
        }
        assert!(tables.lookup(SwitchRef::Leaf(6), EXAMPLE_GROUP_ID).is_some());
        assert!(tables.lookup(SwitchRef::Leaf(7), EXAMPLE_GROUP_ID).is_some());
        assert!(enc.header.down_leaf.default.is_none());
    }

    #[test]
    fn no_capacity_scenario_uses_the_default_rule() {
        let ex = WorkedExample::new();
        let (enc, _) = ex.encode(&ex.constrained_config(0));
        let d = enc.leaf_layer.default_rule.as_ref().expect("leaf default");
        assert_eq!(d.members, vec![6, 7]);
        let spine_default = enc.spine_layer.default_rule.as_ref().expect("spine default");
        assert_eq!(spine_default.members, vec![3]);
        assert_eq!(spine_default.bitmap.to_string(), "11");
        assert!(enc.s_rule_installs.is_empty());
    }

    #[test]
    fn upstream_rule_prints_like_the_figure() {
        let ex = WorkedExample::new();
        let (enc, _) = ex.encode(&ex.shared_config());
        let up = enc.header.up_leaf.unwrap();
        assert!(up.multipath);
        assert_eq!(up.bitmap.display_split(8), "00010111-00");
        assert_eq!(enc.header.core.unwrap().to_string(), "0011");
    }
}
