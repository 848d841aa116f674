//! Group lifecycle management: installs, churn replay, failure handling,
//! and per-switch update accounting.
//!
//! State per group: the member list, the multicast tree, and the encoding
//! computed for the representative sender (the lowest sender-capable VM).
//! Hypervisor state is derivable: every member host holds an entry for the
//! group, sender hosts additionally hold the header template. A diff lists
//! a switch only when its stored state actually changed: clustering is
//! deterministic, so unchanged layer inputs re-encode to identical bytes
//! and drop out of the comparison.

use crate::bitmap::PortBitmap;
use crate::dataplane::SRuleTables;
use crate::encoding::{
    compute_tree, encode_group, plan_upstream, upstream_candidates, EncodingConfig, FailoverPlan,
    GroupEncoding, MulticastTree,
};
use crate::placement::Placement;
use crate::topology::{FailureSet, SwitchRef, Topology};
use crate::wire;
use crate::workload::{ChurnEvent, EventKind, GroupSpec, Member, Role};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("group {0} is not installed")]
    UnknownGroup(u32),
    #[error("group {0} already installed")]
    DuplicateGroup(u32),
    #[error("invalid event for group {group}: {reason}")]
    InvalidEvent { group: u32, reason: &'static str },
    #[error("switch {0:?} is not a spine or core")]
    NotFailable(SwitchRef),
    #[error(transparent)]
    Wire(#[from] wire::WireError),
}

/// Switches whose stored state changed during one operation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateDiff {
    pub hypervisors: BTreeSet<u32>,
    pub leaves: BTreeSet<u16>,
    pub spines: BTreeSet<u16>,
}

impl UpdateDiff {
    pub fn is_empty(&self) -> bool {
        self.hypervisors.is_empty() && self.leaves.is_empty() && self.spines.is_empty()
    }

    fn touch_switch(&mut self, sw: SwitchRef) {
        match sw {
            SwitchRef::Leaf(l) => {
                self.leaves.insert(l);
            }
            SwitchRef::Spine(s) => {
                self.spines.insert(s);
            }
            SwitchRef::Core(_) => {}
        }
    }
}

#[derive(Debug, Clone)]
struct GroupState {
    tenant: u32,
    members: Vec<Member>,
    tree: MulticastTree,
    repr_source: u32,
    encoding: GroupEncoding,
    header_bytes: Vec<u8>,
}

/// Single-writer controller state over one topology and placement.
#[derive(Debug)]
pub struct Controller {
    topology: Topology,
    placement: Placement,
    cfg: EncodingConfig,
    tables: SRuleTables,
    failures: FailureSet,
    groups: HashMap<u32, GroupState>,
}

impl Controller {
    pub fn new(topology: Topology, placement: Placement, cfg: EncodingConfig) -> Self {
        let tables = SRuleTables::new(&topology);
        Controller {
            topology,
            placement,
            cfg,
            tables,
            failures: FailureSet::none(),
            groups: HashMap::new(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn tables(&self) -> &SRuleTables {
        &self.tables
    }

    pub fn failures(&self) -> &FailureSet {
        &self.failures
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_header(&self, id: u32) -> Option<&[u8]> {
        self.groups.get(&id).map(|s| s.header_bytes.as_slice())
    }

    pub fn group_tree(&self, id: u32) -> Option<&MulticastTree> {
        self.groups.get(&id).map(|s| &s.tree)
    }

    pub fn group_encoding(&self, id: u32) -> Option<&GroupEncoding> {
        self.groups.get(&id).map(|s| &s.encoding)
    }

    pub fn group_repr_source(&self, id: u32) -> Option<u32> {
        self.groups.get(&id).map(|s| s.repr_source)
    }

    pub fn group_spec(&self, id: u32) -> Option<GroupSpec> {
        self.groups
            .get(&id)
            .map(|s| GroupSpec { id, tenant: s.tenant, members: s.members.clone() })
    }

    /// Header for an arbitrary sender of an installed group, built on
    /// demand against the group's installed s-rules.
    pub fn header_for_sender(&mut self, id: u32, sender_host: u32) -> Result<Vec<u8>, ControllerError> {
        let state = self.groups.get(&id).ok_or(ControllerError::UnknownGroup(id))?;
        let tree = state.tree.clone();
        let (tables, cfg, topology) = (&mut self.tables, &self.cfg, &self.topology);
        let f_max = cfg.srule_capacity;
        let enc = encode_group(&tree, topology, cfg, sender_host, &mut |sw, bm| {
            tables.try_reserve(sw, id, bm, f_max)
        });
        Ok(wire::encode_header(&enc.header, topology.logical())?)
    }

    fn repr_source(placement: &Placement, members: &[Member]) -> u32 {
        let vm = members
            .iter()
            .filter(|m| m.role.can_send())
            .map(|m| m.vm)
            .min()
            .or_else(|| members.first().map(|m| m.vm))
            .expect("groups are never empty");
        placement.host_of_vm(vm)
    }

    fn encode_members(
        &mut self,
        id: u32,
        members: &[Member],
        tenant: u32,
    ) -> (MulticastTree, u32, GroupEncoding, Vec<u8>) {
        let spec = GroupSpec { id, tenant, members: members.to_vec() };
        let tree = compute_tree(&self.topology, &self.placement, &spec);
        let repr = Self::repr_source(&self.placement, members);
        let (tables, cfg, topology) = (&mut self.tables, &self.cfg, &self.topology);
        let f_max = cfg.srule_capacity;
        let enc = encode_group(&tree, topology, cfg, repr, &mut |switches, bm| {
            tables.try_reserve(switches, id, bm, f_max)
        });
        let bytes = wire::encode_header(&enc.header, topology.logical())
            .expect("encoder produces layout-valid headers");
        debug_assert!(bytes.len() as u32 <= cfg.header_budget_bytes);
        (tree, repr, enc, bytes)
    }

    /// Compute and install everything for a new group.
    pub fn install_group(&mut self, group: &GroupSpec) -> Result<UpdateDiff, ControllerError> {
        if self.groups.contains_key(&group.id) {
            return Err(ControllerError::DuplicateGroup(group.id));
        }
        let (tree, repr, encoding, header_bytes) =
            self.encode_members(group.id, &group.members, group.tenant);
        let mut diff = UpdateDiff::default();
        for m in &group.members {
            diff.hypervisors.insert(self.placement.host_of_vm(m.vm));
        }
        for ins in &encoding.s_rule_installs {
            diff.touch_switch(ins.switch);
        }
        self.groups.insert(
            group.id,
            GroupState {
                tenant: group.tenant,
                members: group.members.clone(),
                tree,
                repr_source: repr,
                encoding,
                header_bytes,
            },
        );
        Ok(diff)
    }

    /// Apply one membership event and return the minimal switch diff.
    pub fn apply_event(&mut self, event: &ChurnEvent) -> Result<UpdateDiff, ControllerError> {
        let (tenant, mut members) = {
            let s = self.groups.get(&event.group).ok_or(ControllerError::UnknownGroup(event.group))?;
            (s.tenant, s.members.clone())
        };
        match event.kind {
            EventKind::Join => match members.binary_search_by_key(&event.vm, |m| m.vm) {
                Ok(_) => {
                    return Err(ControllerError::InvalidEvent {
                        group: event.group,
                        reason: "join of an existing member",
                    })
                }
                Err(pos) => members.insert(pos, Member { vm: event.vm, role: event.role }),
            },
            EventKind::Leave => match members.binary_search_by_key(&event.vm, |m| m.vm) {
                Ok(pos) => {
                    members.remove(pos);
                }
                Err(_) => {
                    return Err(ControllerError::InvalidEvent {
                        group: event.group,
                        reason: "leave of a non-member",
                    })
                }
            },
        }

        let event_host = self.placement.host_of_vm(event.vm);
        let mut diff = UpdateDiff::default();
        diff.hypervisors.insert(event_host);

        if event.role == Role::Sender {
            // a pure-sender change touches only the source hypervisor
            let repr_after = Self::repr_source(&self.placement, &members);
            let repr_before = self.groups[&event.group].repr_source;
            if repr_after != repr_before {
                let (tree, repr, encoding, header_bytes) =
                    self.encode_members(event.group, &members, tenant);
                let s = self.groups.get_mut(&event.group).unwrap();
                s.tree = tree;
                s.repr_source = repr;
                s.encoding = encoding;
                s.header_bytes = header_bytes;
            }
            self.groups.get_mut(&event.group).unwrap().members = members;
            return Ok(diff);
        }

        // receiver-affecting: re-encode and diff against stored state
        let (old_installs, old_leaf, old_spine) = {
            let s = &self.groups[&event.group];
            let installs: BTreeMap<SwitchRef, PortBitmap> =
                s.encoding.s_rule_installs.iter().map(|i| (i.switch, i.bitmap)).collect();
            (installs, s.encoding.leaf_layer.clone(), s.encoding.spine_layer.clone())
        };

        let (tree, repr, encoding, header_bytes) =
            self.encode_members(event.group, &members, tenant);

        let new_installs: BTreeMap<SwitchRef, PortBitmap> =
            encoding.s_rule_installs.iter().map(|i| (i.switch, i.bitmap)).collect();
        for (sw, bm) in &old_installs {
            match new_installs.get(sw) {
                Some(nbm) if nbm == bm => {}
                other => {
                    if other.is_none() {
                        self.tables.remove(*sw, event.group);
                    }
                    diff.touch_switch(*sw);
                }
            }
        }
        for (sw, bm) in &new_installs {
            if old_installs.get(sw) != Some(bm) {
                diff.touch_switch(*sw);
            }
        }

        // header templates embed the downstream sections; when those change,
        // every sender hypervisor re-learns its template
        if old_leaf != encoding.leaf_layer || old_spine != encoding.spine_layer {
            for m in members.iter().filter(|m| m.role.can_send()) {
                diff.hypervisors.insert(self.placement.host_of_vm(m.vm));
            }
        }

        let s = self.groups.get_mut(&event.group).unwrap();
        s.members = members;
        s.tree = tree;
        s.repr_source = repr;
        s.encoding = encoding;
        s.header_bytes = header_bytes;
        Ok(diff)
    }

    /// Representative upstream path (spine, core) as the multipath hash
    /// picks it over live switches; `None` for intra-leaf or empty trees.
    fn upstream_path(&self, id: u32, state: &GroupState) -> Option<(u16, u16)> {
        if state.tree.is_empty() {
            return None;
        }
        let leaf = self.topology.leaf_of_host(state.repr_source);
        let pod = self.topology.pod_of_leaf(leaf);
        let beyond_leaf = state.tree.leaf_bitmaps.len() > 1
            || state.tree.leaf_bitmaps.first().map(|e| e.0) != Some(leaf);
        if !beyond_leaf {
            return None;
        }
        let spec = self.topology.spec();
        let live_spines: Vec<u16> = (0..spec.spines_per_pod)
            .map(|i| self.topology.spine_global(pod, i as u8))
            .filter(|&s| !self.failures.spine_down(s))
            .collect();
        let live_cores: Vec<u16> =
            (0..spec.cores).filter(|&c| !self.failures.core_down(c)).collect();
        if live_spines.is_empty() || live_cores.is_empty() {
            return None;
        }
        let spine = live_spines[pick_for(id, state.repr_source, 1, live_spines.len())];
        let core = live_cores[pick_for(id, state.repr_source, 2, live_cores.len())];
        Some((spine, core))
    }

    /// Fail a spine or core switch. Returns the diff plus the number of
    /// impacted groups, i.e. groups whose representative upstream path was
    /// traversing the failed switch. Any group whose multipath coverage
    /// breaks gets the flag cleared and explicit upstream ports via greedy
    /// set cover.
    pub fn apply_failure(
        &mut self,
        failed: SwitchRef,
    ) -> Result<(UpdateDiff, usize), ControllerError> {
        match failed {
            SwitchRef::Spine(_) | SwitchRef::Core(_) => {}
            SwitchRef::Leaf(_) => return Err(ControllerError::NotFailable(failed)),
        }
        let mut ids: Vec<u32> = self.groups.keys().copied().collect();
        ids.sort_unstable();

        // paths in use at the moment of failure
        let mut used: HashMap<u32, (u16, u16)> = HashMap::new();
        for &id in &ids {
            if let Some(path) = self.upstream_path(id, &self.groups[&id]) {
                used.insert(id, path);
            }
        }

        match failed {
            SwitchRef::Spine(s) => self.failures.fail_spine(s),
            SwitchRef::Core(c) => self.failures.fail_core(c),
            SwitchRef::Leaf(_) => unreachable!(),
        }

        let mut diff = UpdateDiff::default();
        let mut impacted = 0usize;
        for &id in &ids {
            let hit = match (failed, used.get(&id)) {
                (SwitchRef::Spine(s), Some(&(spine, _))) => spine == s,
                (SwitchRef::Core(c), Some(&(_, core))) => core == c,
                _ => false,
            };
            if !hit {
                continue;
            }
            impacted += 1;
            let state = self.groups.get(&id).unwrap().clone();
            let leaf = self.topology.leaf_of_host(state.repr_source);
            let mut header = state.encoding.header.clone();
            let mut changed = false;
            let used_spine = used[&id].0;
            for (sw, rule) in [
                (SwitchRef::Leaf(leaf), header.up_leaf.as_mut()),
                (SwitchRef::Spine(used_spine), header.up_spine.as_mut()),
            ] {
                let Some(rule) = rule else { continue };
                let candidates = upstream_candidates(
                    &self.topology,
                    sw,
                    &state.tree.receiver_hosts,
                    &self.failures,
                );
                match plan_upstream(&candidates, &state.tree.receiver_hosts, rule.bitmap.width()) {
                    FailoverPlan::MultipathOk => {}
                    FailoverPlan::ExplicitPorts(ports) => {
                        rule.multipath = false;
                        rule.bitmap = rule.bitmap.union(&ports);
                        changed = true;
                    }
                    FailoverPlan::Unreachable { .. } => {
                        // partition: delivery shortfall is reported by the
                        // post-failure simulation
                    }
                }
            }
            if changed {
                let mut state = state;
                state.header_bytes = wire::encode_header(&header, self.topology.logical())?;
                state.encoding.header = header;
                for m in state.members.iter().filter(|m| m.role.can_send()) {
                    diff.hypervisors.insert(self.placement.host_of_vm(m.vm));
                }
                self.groups.insert(id, state);
            }
        }
        Ok((diff, impacted))
    }

    /// Serialize per-switch state for golden tests: sorted, line oriented.
    pub fn dump_rule_state(&self) -> String {
        let mut out = String::new();
        let mut group_ids: Vec<u32> = self.groups.keys().copied().collect();
        group_ids.sort_unstable();
        for id in &group_ids {
            let s = &self.groups[id];
            let _ = writeln!(
                out,
                "group {id} members {} repr_host {} spine_prules {} leaf_prules {} srules {}",
                s.members.len(),
                s.repr_source,
                s.encoding.spine_layer.p_rules.len(),
                s.encoding.leaf_layer.p_rules.len(),
                s.encoding.s_rule_installs.len(),
            );
        }
        let mut lines: Vec<String> = Vec::new();
        for id in &group_ids {
            for ins in &self.groups[id].encoding.s_rule_installs {
                let (kind, num) = match ins.switch {
                    SwitchRef::Leaf(l) => ("leaf", l),
                    SwitchRef::Spine(sp) => ("spine", sp),
                    SwitchRef::Core(c) => ("core", c),
                };
                lines.push(format!("{kind} {num} group {id} bitmap {}", ins.bitmap));
            }
        }
        lines.sort();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

fn pick_for(group: u32, source: u32, salt: u64, n: usize) -> usize {
    crate::dataplane::multipath_pick(group, source, salt, n)
}

// ---------------------------------------------------------------------------
// update-rate accounting
// ---------------------------------------------------------------------------

/// Mean/max switch updates per event per class, scaled to an event rate
/// (expressed per 1,000-events-per-second churn unit, so doubling the event
/// rate exactly doubles every rate).
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub events: u64,
    pub events_per_second: f64,
    pub hypervisor_mean: f64,
    pub hypervisor_max: u64,
    pub leaf_mean: f64,
    pub leaf_max: u64,
    pub spine_mean: f64,
    pub spine_max: u64,
    pub hypervisor_rate: f64,
    pub leaf_rate: f64,
    pub spine_rate: f64,
}

pub const HYPERVISOR_UPDATES_PER_SEC_LIMIT: f64 = 2_000.0;
pub const NETWORK_UPDATES_PER_SEC_LIMIT: f64 = 100.0;

pub fn update_rate_report(diffs: &[UpdateDiff], events_per_second: f64) -> RateReport {
    let n = diffs.len().max(1) as f64;
    let totals = diffs.iter().fold((0u64, 0u64, 0u64), |acc, d| {
        (
            acc.0 + d.hypervisors.len() as u64,
            acc.1 + d.leaves.len() as u64,
            acc.2 + d.spines.len() as u64,
        )
    });
    let maxes = diffs.iter().fold((0u64, 0u64, 0u64), |acc, d| {
        (
            acc.0.max(d.hypervisors.len() as u64),
            acc.1.max(d.leaves.len() as u64),
            acc.2.max(d.spines.len() as u64),
        )
    });
    let unit = events_per_second / 1_000.0;
    RateReport {
        events: diffs.len() as u64,
        events_per_second,
        hypervisor_mean: totals.0 as f64 / n,
        hypervisor_max: maxes.0,
        leaf_mean: totals.1 as f64 / n,
        leaf_max: maxes.1,
        spine_mean: totals.2 as f64 / n,
        spine_max: maxes.2,
        hypervisor_rate: totals.0 as f64 / n * unit,
        leaf_rate: totals.1 as f64 / n * unit,
        spine_rate: totals.2 as f64 / n * unit,
    }
}
