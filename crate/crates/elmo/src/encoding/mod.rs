//! Expressing a group's multicast tree as p-rules, s-rules, and default
//! p-rules, one clustering pass per downstream layer.

mod cluster;
mod failover;
mod header;
mod tree;

pub use cluster::{approx_min_k_union, cluster_layer, cluster_prules, ClusterOutcome};
pub use failover::{plan_upstream, upstream_candidates, FailoverPlan, UplinkCandidate};
pub use header::{
    encode_group, encode_prules, header_content_bits, physical_encoding_bits, GroupEncoding,
    PendingEncoding,
};
pub use tree::{compute_tree, ApexLayer, MulticastTree};

use crate::bitmap::PortBitmap;
use crate::topology::{SwitchRef, Topology};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("k = {k} exceeds the {n} available bitmaps")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("switches per p-rule capped at {max} by the header layout, got {got}")]
    KCap { got: u8, max: u8 },
    #[error("header budget {budget} B cannot hold the configured rules (worst case {worst} B)")]
    BudgetTooSmall { budget: u32, worst: u32 },
    #[error("receivers unreachable under the current failures: {missing:?}")]
    Unreachable { missing: Vec<u32> },
}

/// The five header sections in packet order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    UpstreamLeaf = 0,
    UpstreamSpine = 1,
    Core = 2,
    DownstreamSpine = 3,
    DownstreamLeaf = 4,
}

impl Layer {
    pub const ALL: [Layer; 5] = [
        Layer::UpstreamLeaf,
        Layer::UpstreamSpine,
        Layer::Core,
        Layer::DownstreamSpine,
        Layer::DownstreamLeaf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::UpstreamLeaf => "upstream_leaf",
            Layer::UpstreamSpine => "upstream_spine",
            Layer::Core => "core",
            Layer::DownstreamSpine => "downstream_spine",
            Layer::DownstreamLeaf => "downstream_leaf",
        }
    }
}

/// A downstream p-rule shared by up to `K_max` switches of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedRule {
    /// Logical switch ids (pod ids at the spine layer, global leaf ids at
    /// the leaf layer), ascending.
    pub switches: Vec<u16>,
    /// Bitwise OR of the members' input bitmaps.
    pub bitmap: PortBitmap,
}

/// Catch-all rule appended after a layer's chained p-rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefaultRule {
    pub members: Vec<u16>,
    pub bitmap: PortBitmap,
}

/// Output of the clustering pass for one downstream layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerEncoding {
    pub p_rules: Vec<SharedRule>,
    /// Logical switches spilled to group-table entries, with their bitmaps.
    pub s_rule_installs: Vec<(u16, PortBitmap)>,
    pub default_rule: Option<DefaultRule>,
}

impl LayerEncoding {
    /// True when every input switch got a non-default p-rule.
    pub fn fully_covered(&self) -> bool {
        self.s_rule_installs.is_empty() && self.default_rule.is_none()
    }
}

/// Upstream (Type = 0) rule: full-width bitmap and the multipath flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpstreamRule {
    pub multipath: bool,
    pub bitmap: PortBitmap,
}

/// One downstream header section.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DownSection {
    pub rules: Vec<SharedRule>,
    pub default: Option<PortBitmap>,
}

impl DownSection {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty() && self.default.is_none()
    }
}

/// The in-packet forwarding policy for one (group, source) pair: ordered
/// sections upstream leaf, upstream spine, core, downstream spine,
/// downstream leaf. Sections above the effective apex are absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElmoHeader {
    pub up_leaf: Option<UpstreamRule>,
    pub up_spine: Option<UpstreamRule>,
    pub core: Option<PortBitmap>,
    pub down_spine: DownSection,
    pub down_leaf: DownSection,
}

/// An s-rule to install into a physical switch's group table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SRuleInstall {
    pub switch: SwitchRef,
    pub bitmap: PortBitmap,
}

/// Constraints on one group's encoding.
///
/// `spurious_budget` is `R`: the cap on the summed Hamming distance between
/// each member bitmap and a shared rule's union bitmap (the union covers
/// every member, so the sum bound also enforces the per-member bound).
/// `h_max_*` bound the chained p-rules per downstream layer, `k_max_*` the
/// switches per rule, and `srule_capacity` is `F_max` per physical switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub spurious_budget: u32,
    pub h_max_spine: u16,
    pub h_max_leaf: u16,
    pub k_max_spine: u8,
    pub k_max_leaf: u8,
    pub srule_capacity: u32,
    pub header_budget_bytes: u32,
}

/// Largest id-count the wire layout can carry per rule.
pub const K_MAX_WIRE: u8 = 3;

impl EncodingConfig {
    /// Budget-driven configuration: two p-rules go to the downstream spine
    /// layer and the remainder of the byte budget, at a nominal cost of four
    /// id bytes plus the leaf bitmap per rule, to the downstream leaf layer.
    pub fn with_budget(
        topology: &Topology,
        spurious_budget: u32,
        srule_capacity: u32,
        header_budget_bytes: u32,
    ) -> Result<Self, EncodingError> {
        let lt = topology.logical();
        let nominal = 4 + (lt.leaf_down_width as u32).div_ceil(8);
        let slots = header_budget_bytes / nominal;
        let h_max_spine = 2u16;
        if slots <= h_max_spine as u32 {
            return Err(EncodingError::BudgetTooSmall {
                budget: header_budget_bytes,
                worst: nominal * (h_max_spine as u32 + 1),
            });
        }
        let h_max_leaf = (slots - h_max_spine as u32).min(u16::MAX as u32) as u16;
        let cfg = EncodingConfig {
            spurious_budget,
            h_max_spine,
            h_max_leaf,
            k_max_spine: 2,
            k_max_leaf: 2,
            srule_capacity,
            header_budget_bytes,
        };
        cfg.validate(topology)?;
        Ok(cfg)
    }

    /// Checks the id-count cap and that the worst-case wire encoding of a
    /// header with every rule slot filled stays inside the byte budget.
    pub fn validate(&self, topology: &Topology) -> Result<(), EncodingError> {
        for k in [self.k_max_spine, self.k_max_leaf] {
            if k == 0 || k > K_MAX_WIRE {
                return Err(EncodingError::KCap { got: k, max: K_MAX_WIRE });
            }
        }
        let worst = crate::wire::max_header_bytes(topology.logical(), self);
        if worst > self.header_budget_bytes {
            return Err(EncodingError::BudgetTooSmall {
                budget: self.header_budget_bytes,
                worst,
            });
        }
        Ok(())
    }
}
