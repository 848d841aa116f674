//! Multi-rooted Clos topologies, physical and logical views.
//!
//! A topology has `pods` pods of `spines_per_pod` spine and `leaves_per_pod`
//! leaf switches, `hosts_per_leaf` hosts under each leaf, and `cores` core
//! switches. Every spine connects to every core, so a spine's uplink count
//! equals the core count and a core has one port per (pod, spine) pair.
//!
//! The logical view collapses each pod's spines into one logical spine and
//! all cores into a single logical core; identifier widths per layer are the
//! minimum bits needed to name the logical switches of that layer.

use crate::bitmap::PortBitmap;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology spec: {0}")]
    InvalidSpec(String),
    #[error("unknown switch: {0:?}")]
    UnknownSwitch(SwitchRef),
}

/// Shape of a three-tier Clos fabric. All counts are per the enclosing unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologySpec {
    pub pods: u16,
    pub spines_per_pod: u16,
    pub leaves_per_pod: u16,
    pub hosts_per_leaf: u16,
    pub cores: u16,
}

impl TopologySpec {
    /// The running example: four cores and pods, two spine and leaf switches
    /// per pod, eight hosts per leaf.
    pub fn example() -> Self {
        TopologySpec { pods: 4, spines_per_pod: 2, leaves_per_pod: 2, hosts_per_leaf: 8, cores: 4 }
    }

    /// Facebook-Fabric-like instance: 12 pods of 48 leaves, 48 hosts per
    /// leaf (27,648 hosts), four spine switches per pod, four cores.
    pub fn fabric() -> Self {
        TopologySpec { pods: 12, spines_per_pod: 4, leaves_per_pod: 48, hosts_per_leaf: 48, cores: 4 }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let fields = [
            ("pods", self.pods),
            ("spines_per_pod", self.spines_per_pod),
            ("leaves_per_pod", self.leaves_per_pod),
            ("hosts_per_leaf", self.hosts_per_leaf),
            ("cores", self.cores),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(TopologyError::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        let leaf_w = self.hosts_per_leaf as u32 + self.spines_per_pod as u32;
        let spine_w = self.leaves_per_pod as u32 + self.cores as u32;
        let core_w = self.pods as u32 * self.spines_per_pod as u32;
        for (name, w) in [("leaf", leaf_w), ("spine", spine_w), ("core", core_w)] {
            if w > PortBitmap::MAX_WIDTH as u32 {
                return Err(TopologyError::InvalidSpec(format!(
                    "{name} switches would need {w} ports; at most 64 supported"
                )));
            }
        }
        Ok(())
    }
}

/// Identifies a physical switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SwitchRef {
    /// Global leaf index (pod-major).
    Leaf(u16),
    /// Global spine index (pod-major).
    Spine(u16),
    Core(u16),
}

/// Identifier widths and section bitmap widths derived from the collapsed
/// (logical) topology; this is what both the encoder and the per-switch
/// parsers are configured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogicalTopology {
    /// Bits needed to name a leaf switch (leaves are not collapsed).
    pub leaf_id_bits: u8,
    /// Bits needed to name a logical spine; one logical spine per pod.
    pub spine_id_bits: u8,
    /// Bits for a core identifier in the per-physical-switch encoding.
    pub core_id_bits: u8,
    /// Bits for a physical spine identifier in the per-physical-switch encoding.
    pub phys_spine_id_bits: u8,
    /// Full leaf width: host ports plus uplinks to the pod's spines.
    pub leaf_full_width: u8,
    /// Full spine width: leaf ports plus uplinks to the cores.
    pub spine_full_width: u8,
    /// Downstream-only widths used by the downstream header sections.
    pub leaf_down_width: u8,
    pub spine_down_width: u8,
    /// Logical core width: one port per pod.
    pub core_width: u8,
}

fn ceil_log2(n: u32) -> u8 {
    if n <= 1 {
        0
    } else {
        (32 - (n - 1).leading_zeros()) as u8
    }
}

/// Spine and core switches currently down. Leaf failures are out of model:
/// hosts under a failed leaf simply lose connectivity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FailureSet {
    spines: HashSet<u16>,
    cores: HashSet<u16>,
}

impl FailureSet {
    pub fn none() -> Self {
        FailureSet::default()
    }

    pub fn fail_spine(&mut self, spine: u16) {
        self.spines.insert(spine);
    }

    pub fn fail_core(&mut self, core: u16) {
        self.cores.insert(core);
    }

    #[inline]
    pub fn spine_down(&self, spine: u16) -> bool {
        !self.spines.is_empty() && self.spines.contains(&spine)
    }

    #[inline]
    pub fn core_down(&self, core: u16) -> bool {
        !self.cores.is_empty() && self.cores.contains(&core)
    }

    pub fn is_empty(&self) -> bool {
        self.spines.is_empty() && self.cores.is_empty()
    }
}

/// An immutable, fully addressable Clos fabric.
#[derive(Debug, Clone)]
pub struct Topology {
    spec: TopologySpec,
    logical: LogicalTopology,
}

impl Topology {
    pub fn build(spec: TopologySpec) -> Result<Self, TopologyError> {
        spec.validate()?;
        let logical = LogicalTopology {
            leaf_id_bits: ceil_log2(spec.pods as u32 * spec.leaves_per_pod as u32),
            spine_id_bits: ceil_log2(spec.pods as u32),
            core_id_bits: ceil_log2(spec.cores as u32),
            phys_spine_id_bits: ceil_log2(spec.pods as u32 * spec.spines_per_pod as u32),
            leaf_full_width: (spec.hosts_per_leaf + spec.spines_per_pod) as u8,
            spine_full_width: (spec.leaves_per_pod + spec.cores) as u8,
            leaf_down_width: spec.hosts_per_leaf as u8,
            spine_down_width: spec.leaves_per_pod as u8,
            core_width: spec.pods as u8,
        };
        Ok(Topology { spec, logical })
    }

    #[inline]
    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    #[inline]
    pub fn logical(&self) -> &LogicalTopology {
        &self.logical
    }

    #[inline]
    pub fn num_pods(&self) -> u16 {
        self.spec.pods
    }

    #[inline]
    pub fn num_leaves(&self) -> u32 {
        self.spec.pods as u32 * self.spec.leaves_per_pod as u32
    }

    #[inline]
    pub fn num_spines(&self) -> u32 {
        self.spec.pods as u32 * self.spec.spines_per_pod as u32
    }

    #[inline]
    pub fn num_cores(&self) -> u16 {
        self.spec.cores
    }

    #[inline]
    pub fn num_hosts(&self) -> u32 {
        self.num_leaves() * self.spec.hosts_per_leaf as u32
    }

    // -- host addressing ----------------------------------------------------

    #[inline]
    pub fn leaf_of_host(&self, host: u32) -> u16 {
        (host / self.spec.hosts_per_leaf as u32) as u16
    }

    #[inline]
    pub fn host_port(&self, host: u32) -> u8 {
        (host % self.spec.hosts_per_leaf as u32) as u8
    }

    #[inline]
    pub fn host_of(&self, leaf: u16, port: u8) -> u32 {
        leaf as u32 * self.spec.hosts_per_leaf as u32 + port as u32
    }

    #[inline]
    pub fn pod_of_leaf(&self, leaf: u16) -> u16 {
        leaf / self.spec.leaves_per_pod
    }

    #[inline]
    pub fn leaf_index_in_pod(&self, leaf: u16) -> u8 {
        (leaf % self.spec.leaves_per_pod) as u8
    }

    #[inline]
    pub fn leaf_global(&self, pod: u16, index: u8) -> u16 {
        pod * self.spec.leaves_per_pod + index as u16
    }

    #[inline]
    pub fn pod_of_spine(&self, spine: u16) -> u16 {
        spine / self.spec.spines_per_pod
    }

    #[inline]
    pub fn spine_global(&self, pod: u16, index: u8) -> u16 {
        pod * self.spec.spines_per_pod + index as u16
    }

    fn check(&self, switch: SwitchRef) -> Result<(), TopologyError> {
        let ok = match switch {
            SwitchRef::Leaf(l) => (l as u32) < self.num_leaves(),
            SwitchRef::Spine(s) => (s as u32) < self.num_spines(),
            SwitchRef::Core(c) => c < self.spec.cores,
        };
        if ok {
            Ok(())
        } else {
            Err(TopologyError::UnknownSwitch(switch))
        }
    }

    // -- port maps -----------------------------------------------------------

    /// Full-width bitmap with the ports toward the given children set.
    ///
    /// Children are hosts (global ids) for a leaf, global leaf ids for a
    /// spine, and pod ids for a core. For a core the bitmap covers every
    /// (pod, spine) port of the named pods, i.e. the multipath fan-in.
    pub fn downstream_ports(
        &self,
        switch: SwitchRef,
        children: &[u32],
    ) -> Result<PortBitmap, TopologyError> {
        self.check(switch)?;
        match switch {
            SwitchRef::Leaf(l) => {
                let mut bm = PortBitmap::empty(self.logical.leaf_full_width);
                for &h in children {
                    if self.leaf_of_host(h) != l {
                        return Err(TopologyError::UnknownSwitch(switch));
                    }
                    bm.set(self.host_port(h));
                }
                Ok(bm)
            }
            SwitchRef::Spine(s) => {
                let pod = self.pod_of_spine(s);
                let mut bm = PortBitmap::empty(self.logical.spine_full_width);
                for &l in children {
                    if self.pod_of_leaf(l as u16) != pod {
                        return Err(TopologyError::UnknownSwitch(switch));
                    }
                    bm.set(self.leaf_index_in_pod(l as u16));
                }
                Ok(bm)
            }
            SwitchRef::Core(_) => {
                let w = (self.spec.pods * self.spec.spines_per_pod) as u8;
                let mut bm = PortBitmap::empty(w);
                for &pod in children {
                    for s in 0..self.spec.spines_per_pod {
                        bm.set((pod as u16 * self.spec.spines_per_pod + s) as u8);
                    }
                }
                Ok(bm)
            }
        }
    }

    /// Full-width bitmap with every port toward the parent layer set.
    /// Cores have no parents and yield an all-zero bitmap.
    pub fn upstream_ports(&self, switch: SwitchRef) -> Result<PortBitmap, TopologyError> {
        self.check(switch)?;
        Ok(match switch {
            SwitchRef::Leaf(_) => {
                let mut bm = PortBitmap::empty(self.logical.leaf_full_width);
                for i in 0..self.spec.spines_per_pod {
                    bm.set((self.spec.hosts_per_leaf + i) as u8);
                }
                bm
            }
            SwitchRef::Spine(_) => {
                let mut bm = PortBitmap::empty(self.logical.spine_full_width);
                for i in 0..self.spec.cores {
                    bm.set((self.spec.leaves_per_pod + i) as u8);
                }
                bm
            }
            SwitchRef::Core(_) => {
                PortBitmap::empty((self.spec.pods * self.spec.spines_per_pod) as u8)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_topology_counts() {
        let t = Topology::build(TopologySpec::example()).unwrap();
        assert_eq!(t.num_cores(), 4);
        assert_eq!(t.num_spines(), 8);
        assert_eq!(t.num_leaves(), 8);
        assert_eq!(t.num_hosts(), 64);
        // identifier widths: 2 bits for 4 cores, 3 bits for 8 spines/leaves
        assert_eq!(t.logical().core_id_bits, 2);
        assert_eq!(t.logical().phys_spine_id_bits, 3);
        assert_eq!(t.logical().leaf_id_bits, 3);
        // one logical spine per pod
        assert_eq!(t.logical().spine_id_bits, 2);
    }

    #[test]
    fn fabric_supports_27648_hosts() {
        let t = Topology::build(TopologySpec::fabric()).unwrap();
        assert_eq!(t.num_hosts(), 27_648);
        assert_eq!(t.num_leaves(), 576);
        assert_eq!(t.logical().leaf_id_bits, 10);
        assert_eq!(t.logical().spine_id_bits, 4);
        assert_eq!(t.logical().leaf_down_width, 48);
    }

    #[test]
    fn zero_counts_rejected() {
        let mut s = TopologySpec::example();
        s.pods = 0;
        assert!(Topology::build(s).is_err());
    }

    #[test]
    fn leaf_port_bitmap_matches_printed_form() {
        let t = Topology::build(TopologySpec::example()).unwrap();
        // leaf L0 with receivers on host ports 3,5,6,7
        let hosts: Vec<u32> = [3u32, 5, 6, 7].iter().map(|&p| t.host_of(0, p as u8)).collect();
        let bm = t.downstream_ports(SwitchRef::Leaf(0), &hosts).unwrap();
        assert_eq!(bm.display_split(8), "00010111-00");
        let none = t.downstream_ports(SwitchRef::Leaf(1), &[]).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn spine_upstream_width_is_core_count() {
        let t = Topology::build(TopologySpec::example()).unwrap();
        let up = t.upstream_ports(SwitchRef::Spine(4)).unwrap();
        assert_eq!(up.count_ones(), 4);
        assert_eq!(up.width(), 6);
    }

    #[test]
    fn unknown_switch_rejected() {
        let t = Topology::build(TopologySpec::example()).unwrap();
        assert!(t.upstream_ports(SwitchRef::Leaf(8)).is_err());
        assert!(t.downstream_ports(SwitchRef::Core(4), &[]).is_err());
    }

    #[test]
    fn pod_structure_symmetric() {
        let t = Topology::build(TopologySpec::fabric()).unwrap();
        let first = t.upstream_ports(SwitchRef::Leaf(0)).unwrap().count_ones();
        for l in 0..t.num_leaves() as u16 {
            assert_eq!(t.upstream_ports(SwitchRef::Leaf(l)).unwrap().count_ones(), first);
        }
    }
}
