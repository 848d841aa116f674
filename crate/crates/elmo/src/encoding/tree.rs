//! Multicast tree computation on the logical topology.

use crate::bitmap::PortBitmap;
use crate::placement::Placement;
use crate::topology::Topology;
use crate::workload::GroupSpec;

/// Lowest layer whose single logical switch reaches every receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ApexLayer {
    Leaf,
    Spine,
    Core,
}

/// The minimal logical tree covering a group's receiver hosts.
///
/// Bitmaps are downstream-width: host ports at a leaf, leaf indices at a
/// pod's logical spine, pod ids at the logical core. Upstream context is
/// source-specific and added at encode time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastTree {
    pub group: u32,
    pub apex: ApexLayer,
    /// Per receiver leaf (ascending global leaf id): host ports to deliver.
    pub leaf_bitmaps: Vec<(u16, PortBitmap)>,
    /// Per receiver pod (ascending pod id): leaf indices to reach.
    pub spine_bitmaps: Vec<(u16, PortBitmap)>,
    /// Pods with receivers.
    pub core_bitmap: PortBitmap,
    /// Receiver hosts, ascending and deduplicated.
    pub receiver_hosts: Vec<u32>,
    /// Hosts with sender-capable members, ascending and deduplicated.
    pub sender_hosts: Vec<u32>,
}

impl MulticastTree {
    pub fn is_empty(&self) -> bool {
        self.receiver_hosts.is_empty()
    }

    pub fn leaf_bitmap(&self, leaf: u16) -> Option<&PortBitmap> {
        self.leaf_bitmaps
            .binary_search_by_key(&leaf, |e| e.0)
            .ok()
            .map(|i| &self.leaf_bitmaps[i].1)
    }

    pub fn spine_bitmap(&self, pod: u16) -> Option<&PortBitmap> {
        self.spine_bitmaps
            .binary_search_by_key(&pod, |e| e.0)
            .ok()
            .map(|i| &self.spine_bitmaps[i].1)
    }

    pub fn receiver_pods(&self) -> impl Iterator<Item = u16> + '_ {
        self.spine_bitmaps.iter().map(|e| e.0)
    }
}

/// Build the logical multicast tree for `group`. A group whose members are
/// all senders yields an empty tree.
pub fn compute_tree(topology: &Topology, placement: &Placement, group: &GroupSpec) -> MulticastTree {
    let mut receiver_hosts: Vec<u32> =
        group.receiver_vms().map(|vm| placement.host_of_vm(vm)).collect();
    receiver_hosts.sort_unstable();
    receiver_hosts.dedup();
    let mut sender_hosts: Vec<u32> =
        group.sender_vms().map(|vm| placement.host_of_vm(vm)).collect();
    sender_hosts.sort_unstable();
    sender_hosts.dedup();

    let lt = topology.logical();
    let mut leaf_bitmaps: Vec<(u16, PortBitmap)> = Vec::new();
    for &host in &receiver_hosts {
        let leaf = topology.leaf_of_host(host);
        let port = topology.host_port(host);
        match leaf_bitmaps.last_mut() {
            Some((l, bm)) if *l == leaf => bm.set(port),
            _ => {
                let mut bm = PortBitmap::empty(lt.leaf_down_width);
                bm.set(port);
                leaf_bitmaps.push((leaf, bm));
            }
        }
    }

    let mut spine_bitmaps: Vec<(u16, PortBitmap)> = Vec::new();
    let mut core_bitmap = PortBitmap::empty(lt.core_width);
    for &(leaf, _) in &leaf_bitmaps {
        let pod = topology.pod_of_leaf(leaf);
        let idx = topology.leaf_index_in_pod(leaf);
        match spine_bitmaps.last_mut() {
            Some((p, bm)) if *p == pod => bm.set(idx),
            _ => {
                let mut bm = PortBitmap::empty(lt.spine_down_width);
                bm.set(idx);
                spine_bitmaps.push((pod, bm));
                core_bitmap.set(pod as u8);
            }
        }
    }

    let apex = match (leaf_bitmaps.len(), spine_bitmaps.len()) {
        (0, _) | (1, _) => ApexLayer::Leaf,
        (_, 1) => ApexLayer::Spine,
        _ => ApexLayer::Core,
    };

    MulticastTree {
        group: group.id,
        apex,
        leaf_bitmaps,
        spine_bitmaps,
        core_bitmap,
        receiver_hosts,
        sender_hosts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologySpec;
    use crate::workload::{Member, Role};

    fn topo() -> Topology {
        Topology::build(TopologySpec::example()).unwrap()
    }

    fn group_on_hosts(t: &Topology, receivers: &[u32], sender: u32) -> (Placement, GroupSpec) {
        // one tenant whose vm ids equal host ids
        let placement =
            Placement::from_assignment((0..t.num_hosts()).collect(), vec![0, t.num_hosts()]);
        let mut members: Vec<Member> =
            receivers.iter().map(|&h| Member { vm: h, role: Role::Receiver }).collect();
        members.push(Member { vm: sender, role: Role::Sender });
        members.sort_unstable_by_key(|m| m.vm);
        (placement, GroupSpec { id: 1, tenant: 0, members })
    }

    #[test]
    fn spanning_group_has_core_apex() {
        let t = topo();
        // receivers: L0 hosts 3,5,6,7 (pod 0); L5 hosts 0,1,3 (pod 2);
        // L6 hosts 2,3,5,6,7 and L7 hosts 0,1,3,4 (pod 3)
        let mut hosts: Vec<u32> = vec![];
        hosts.extend([3u32, 5, 6, 7].iter().map(|&p| t.host_of(0, p as u8)));
        hosts.extend([0u32, 1, 3].iter().map(|&p| t.host_of(5, p as u8)));
        hosts.extend([2u32, 3, 5, 6, 7].iter().map(|&p| t.host_of(6, p as u8)));
        hosts.extend([0u32, 1, 3, 4].iter().map(|&p| t.host_of(7, p as u8)));
        let (placement, group) = group_on_hosts(&t, &hosts, t.host_of(0, 0));
        let tree = compute_tree(&t, &placement, &group);
        assert_eq!(tree.apex, ApexLayer::Core);
        assert_eq!(tree.leaf_bitmap(0).unwrap().to_string(), "00010111");
        assert_eq!(tree.spine_bitmap(2).unwrap().to_string(), "01");
        assert_eq!(tree.spine_bitmap(3).unwrap().to_string(), "11");
        assert_eq!(tree.core_bitmap.to_string(), "1011");
    }

    #[test]
    fn single_leaf_group_has_leaf_apex() {
        let t = topo();
        let hosts: Vec<u32> = [1u32, 2].iter().map(|&p| t.host_of(3, p as u8)).collect();
        let (placement, group) = group_on_hosts(&t, &hosts, t.host_of(3, 0));
        let tree = compute_tree(&t, &placement, &group);
        assert_eq!(tree.apex, ApexLayer::Leaf);
        assert!(tree.spine_bitmaps.len() == 1 && tree.core_bitmap.count_ones() == 1);
    }

    #[test]
    fn two_leaves_one_pod_is_spine_apex() {
        let t = topo();
        let hosts = vec![t.host_of(2, 0), t.host_of(3, 4)];
        let (placement, group) = group_on_hosts(&t, &hosts, t.host_of(2, 1));
        let tree = compute_tree(&t, &placement, &group);
        assert_eq!(tree.apex, ApexLayer::Spine);
        assert_eq!(tree.receiver_pods().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn senders_only_group_is_empty() {
        let t = topo();
        let placement =
            Placement::from_assignment((0..t.num_hosts()).collect(), vec![0, t.num_hosts()]);
        let group = GroupSpec {
            id: 9,
            tenant: 0,
            members: vec![
                Member { vm: 0, role: Role::Sender },
                Member { vm: 9, role: Role::Sender },
            ],
        };
        let tree = compute_tree(&t, &placement, &group);
        assert!(tree.is_empty());
        assert_eq!(tree.apex, ApexLayer::Leaf);
    }
}
