//! Header construction: one per (group, source host).
//!
//! Downstream leaf rules are source-independent (every receiver leaf is
//! listed), so all senders of a group share them. The upstream rules, the
//! core bitmap, and the downstream spine section depend on the source pod:
//! receivers in the source pod are served on the way up (the Type = 0
//! rules carry downstream ports too), so the core forwards only to the
//! other receiver pods.

use super::cluster::{admit_spills, cluster_prules, ClusterOutcome};
use super::tree::{ApexLayer, MulticastTree};
use super::{
    DownSection, ElmoHeader, EncodingConfig, LayerEncoding, SRuleInstall, UpstreamRule,
};
use crate::bitmap::PortBitmap;
use crate::topology::{LogicalTopology, SwitchRef, Topology};

/// Everything the controller stores for one encoded (group, source).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupEncoding {
    pub header: ElmoHeader,
    pub spine_layer: LayerEncoding,
    pub leaf_layer: LayerEncoding,
    /// Physical-switch installs (a logical spine expands to every spine of
    /// its pod).
    pub s_rule_installs: Vec<SRuleInstall>,
}

/// Clustered p-rules whose s-rule spills have not been admitted yet.
/// Lets a driver cluster groups in parallel and serialize only the
/// per-switch capacity reservations.
#[derive(Debug, Clone)]
pub struct PendingEncoding {
    source_leaf: u16,
    source_pod: u16,
    apex: ApexLayer,
    up_leaf: UpstreamRule,
    up_spine: Option<UpstreamRule>,
    core: Option<PortBitmap>,
    spine_out: ClusterOutcome,
    leaf_out: ClusterOutcome,
}

fn expand_full(down: &PortBitmap, full_width: u8) -> PortBitmap {
    PortBitmap::from_raw(full_width, down.raw())
}

/// Compute the p-rule part of a group encoding for `source_host`.
pub fn encode_prules(
    tree: &MulticastTree,
    topology: &Topology,
    cfg: &EncodingConfig,
    source_host: u32,
) -> PendingEncoding {
    let lt = topology.logical();
    let source_leaf = topology.leaf_of_host(source_host);
    let source_pod = topology.pod_of_leaf(source_leaf);

    // effective apex: lowest layer covering receivers and the source
    let apex = match tree.leaf_bitmaps.len() {
        0 => ApexLayer::Leaf,
        1 if tree.leaf_bitmaps[0].0 == source_leaf => ApexLayer::Leaf,
        _ if tree.spine_bitmaps.len() == 1 && tree.spine_bitmaps[0].0 == source_pod => {
            ApexLayer::Spine
        }
        _ => ApexLayer::Core,
    };

    let local = tree
        .leaf_bitmap(source_leaf)
        .map(|bm| expand_full(bm, lt.leaf_full_width))
        .unwrap_or_else(|| PortBitmap::empty(lt.leaf_full_width));
    let up_leaf = UpstreamRule { multipath: true, bitmap: local };

    let up_spine = (apex >= ApexLayer::Spine).then(|| {
        let mut bm = PortBitmap::empty(lt.spine_full_width);
        if let Some(pod_bm) = tree.spine_bitmap(source_pod) {
            for idx in pod_bm.iter_ones() {
                if topology.leaf_global(source_pod, idx) != source_leaf {
                    bm.set(idx);
                }
            }
        }
        UpstreamRule { multipath: true, bitmap: bm }
    });

    let core = (apex == ApexLayer::Core).then(|| {
        let mut bm = tree.core_bitmap;
        bm.clear(source_pod as u8);
        bm
    });

    let spine_out = if apex == ApexLayer::Core {
        let inputs: Vec<(u16, PortBitmap)> = tree
            .spine_bitmaps
            .iter()
            .filter(|(pod, _)| *pod != source_pod)
            .cloned()
            .collect();
        cluster_prules(&inputs, cfg.spurious_budget, cfg.h_max_spine, cfg.k_max_spine)
    } else {
        ClusterOutcome::default()
    };

    let leaf_out = if apex >= ApexLayer::Spine {
        cluster_prules(&tree.leaf_bitmaps, cfg.spurious_budget, cfg.h_max_leaf, cfg.k_max_leaf)
    } else {
        ClusterOutcome::default()
    };

    PendingEncoding { source_leaf, source_pod, apex, up_leaf, up_spine, core, spine_out, leaf_out }
}

impl PendingEncoding {
    pub fn apex(&self) -> ApexLayer {
        self.apex
    }

    /// Admit s-rule spills against capacity and assemble the header.
    ///
    /// `reserve` must atomically claim one slot (with the given bitmap) on
    /// each listed physical switch or decline without side effects; a
    /// logical spine is admitted only if every physical spine of its pod
    /// has room, so the reservations are taken together.
    pub fn admit(
        self,
        topology: &Topology,
        reserve: &mut dyn FnMut(&[SwitchRef], &PortBitmap) -> bool,
    ) -> GroupEncoding {
        let spines_per_pod = topology.spec().spines_per_pod;
        let mut installs: Vec<SRuleInstall> = Vec::new();

        let spine_layer = {
            let ClusterOutcome { rules, unassigned } = self.spine_out;
            admit_spills(rules, unassigned, &mut |pod, bm| {
                let switches: Vec<SwitchRef> = (0..spines_per_pod)
                    .map(|i| SwitchRef::Spine(topology.spine_global(pod, i as u8)))
                    .collect();
                reserve(&switches, bm)
            })
        };
        for &(pod, bm) in &spine_layer.s_rule_installs {
            for i in 0..spines_per_pod {
                installs.push(SRuleInstall {
                    switch: SwitchRef::Spine(topology.spine_global(pod, i as u8)),
                    bitmap: bm,
                });
            }
        }

        let leaf_layer = {
            let ClusterOutcome { rules, unassigned } = self.leaf_out;
            admit_spills(rules, unassigned, &mut |leaf, bm| {
                reserve(&[SwitchRef::Leaf(leaf)], bm)
            })
        };
        for &(leaf, bm) in &leaf_layer.s_rule_installs {
            installs.push(SRuleInstall { switch: SwitchRef::Leaf(leaf), bitmap: bm });
        }

        let header = ElmoHeader {
            up_leaf: Some(self.up_leaf),
            up_spine: self.up_spine,
            core: self.core,
            down_spine: DownSection {
                rules: spine_layer.p_rules.clone(),
                default: spine_layer.default_rule.as_ref().map(|d| d.bitmap),
            },
            down_leaf: DownSection {
                rules: leaf_layer.p_rules.clone(),
                default: leaf_layer.default_rule.as_ref().map(|d| d.bitmap),
            },
        };
        GroupEncoding { header, spine_layer, leaf_layer, s_rule_installs: installs }
    }

    /// True when the leaf layer needs neither s-rules nor a default rule.
    pub fn leaf_fully_covered(&self) -> bool {
        self.leaf_out.unassigned.is_empty()
    }

    /// True when no downstream layer spills outside its p-rules.
    pub fn fully_covered(&self) -> bool {
        self.leaf_out.unassigned.is_empty() && self.spine_out.unassigned.is_empty()
    }

    pub fn source_leaf(&self) -> u16 {
        self.source_leaf
    }

    pub fn source_pod(&self) -> u16 {
        self.source_pod
    }
}

/// One-shot encode: cluster and admit in a single call.
pub fn encode_group(
    tree: &MulticastTree,
    topology: &Topology,
    cfg: &EncodingConfig,
    source_host: u32,
    reserve: &mut dyn FnMut(&[SwitchRef], &PortBitmap) -> bool,
) -> GroupEncoding {
    encode_prules(tree, topology, cfg, source_host).admit(topology, reserve)
}

// ---------------------------------------------------------------------------
// header size accounting (abstract content bits)
// ---------------------------------------------------------------------------

/// Content bits of a logical-topology header: every rule carries a
/// next-rule flag; Type = 0 rules add the multipath flag and no identifier
/// list; downstream rules carry one layer-scoped logical identifier per
/// member switch.
pub fn header_content_bits(header: &ElmoHeader, lt: &LogicalTopology) -> u32 {
    let mut bits = 0u32;
    if let Some(r) = &header.up_leaf {
        bits += 1 + 1 + r.bitmap.width() as u32;
    }
    if let Some(r) = &header.up_spine {
        bits += 1 + 1 + r.bitmap.width() as u32;
    }
    if let Some(core) = &header.core {
        bits += 1 + core.width() as u32;
    }
    for (section, id_bits) in [
        (&header.down_spine, lt.spine_id_bits),
        (&header.down_leaf, lt.leaf_id_bits),
    ] {
        for rule in &section.rules {
            bits += 1 + rule.bitmap.width() as u32 + id_bits as u32 * rule.switches.len() as u32;
        }
        if let Some(d) = &section.default {
            bits += 1 + d.width() as u32;
        }
    }
    bits
}

/// Content bits of the strawman per-physical-switch encoding: one rule per
/// switch the packet may traverse (the full multipath fan), each carrying a
/// next-rule flag, the switch's full-width bitmap, and its physical
/// identifier; the source leaf's entry rule adds the multipath flag.
pub fn physical_encoding_bits(
    tree: &MulticastTree,
    topology: &Topology,
    source_host: u32,
) -> u32 {
    let lt = topology.logical();
    let source_leaf = topology.leaf_of_host(source_host);
    let source_pod = topology.pod_of_leaf(source_leaf);
    let leaf_rule = 1 + lt.leaf_full_width as u32 + lt.leaf_id_bits as u32;
    let spine_rule = 1 + lt.spine_full_width as u32 + lt.phys_spine_id_bits as u32;
    let core_rule = 1
        + (topology.spec().pods * topology.spec().spines_per_pod) as u32
        + lt.core_id_bits as u32;

    // entry rule at the source leaf (multipath flag included)
    let mut bits = leaf_rule + 1;
    let mut pods_in_tree: Vec<u16> = tree.receiver_pods().collect();
    if !pods_in_tree.contains(&source_pod) {
        pods_in_tree.push(source_pod);
    }
    let crosses_pods = pods_in_tree.iter().any(|&p| p != source_pod);
    // receiver leaves other than the source leaf
    bits += tree.leaf_bitmaps.iter().filter(|(l, _)| *l != source_leaf).count() as u32 * leaf_rule;
    if tree.leaf_bitmaps.len() > 1 || !tree.leaf_bitmaps.iter().any(|(l, _)| *l == source_leaf) {
        // climbing beyond the source leaf: the source pod's spines join the fan
        let mut spines = topology.spec().spines_per_pod as u32; // upstream
        if crosses_pods {
            spines += tree
                .receiver_pods()
                .filter(|&p| p != source_pod)
                .count() as u32
                * topology.spec().spines_per_pod as u32;
            bits += topology.num_cores() as u32 * core_rule;
        }
        bits += spines * spine_rule;
    }
    bits
}
